#include "unitsynth/pipeline/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return unitsynth::pipeline::cli_main(argc, argv, std::cout, std::cerr); }
