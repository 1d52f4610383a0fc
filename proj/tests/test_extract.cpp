#include "support/support.hpp"

#include "unitsynth/common/errors.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <doctest.h>

#include <random>

using namespace unitsynth;
using namespace unitsynth::extract;
using corpus::make_document;
using testsupport::TempDir;

namespace {

FunctionUnit unit_with(const std::string& name, std::set<std::string> packages) {
    FunctionUnit u;
    u.unit_id = name;
    u.name = name;
    u.packages = std::move(packages);
    return u;
}

std::vector<std::string> names(const std::vector<FunctionUnit>& units) {
    std::vector<std::string> out;
    for (const auto& u : units) {
        out.push_back(u.name);
    }
    return out;
}

} // namespace

TEST_SUITE("extract") {

TEST_CASE("one import and one function") {
    auto doc = make_document("d.py", testsupport::fixture("draw_weights.py"));
    auto r = extract_functions(doc);
    CHECK_FALSE(r.parse_error);
    REQUIRE(r.units.size() == 1);
    const auto& u = r.units[0];
    CHECK(u.name == "drawWeights");
    CHECK(u.signature == "def drawWeights(size, distribution):");
    REQUIRE(u.imports.size() == 1);
    CHECK(u.imports[0].text == "import numpy as np");
    CHECK(u.imports[0].root_package == "numpy");
    CHECK(u.packages == std::set<std::string>{"numpy"});
    CHECK_FALSE(u.docstring);
    CHECK(u.doc_id == doc.doc_id);
    CHECK(doc.content.substr(u.span_begin, u.span_end - u.span_begin).rfind("def drawWeights", 0) == 0);
    CHECK(py::is_valid_python(module_source(u)));
}

TEST_CASE("syntax error yields no units and a diagnostic") {
    auto r = extract_functions(make_document("bad.py", "def (:\n    pass\n"));
    CHECK(r.units.empty());
    CHECK(r.parse_error);
}

TEST_CASE("imports are sliced per function") {
    const std::string src = "import os\n"
                            "from collections import OrderedDict as OD\n"
                            "import numpy.linalg\n\n"
                            "def first(x):\n    return x + 1\n\n"
                            "def second(p):\n    return os.path.join(p, 'x')\n\n"
                            "def third(m):\n    \"\"\"Uses two imports.\"\"\"\n"
                            "    return OD(a=numpy.linalg.norm(m))\n";
    auto r = extract_functions(make_document("m.py", src));
    REQUIRE(r.units.size() == 3);
    CHECK(r.units[0].imports.empty());
    CHECK(r.units[0].packages.empty());
    REQUIRE(r.units[1].imports.size() == 1);
    CHECK(r.units[1].imports[0].text == "import os");
    REQUIRE(r.units[2].imports.size() == 2);
    CHECK(r.units[2].imports[0].text == "from collections import OrderedDict as OD");
    CHECK(r.units[2].imports[1].text == "import numpy.linalg");
    CHECK(r.units[2].packages == std::set<std::string>{"collections", "numpy"});
    CHECK(r.units[2].docstring == std::optional<std::string>("Uses two imports."));
    for (const auto& u : r.units) {
        CHECK(py::is_valid_python(module_source(u)));
    }
}

TEST_CASE("multi-name imports split into one statement per module") {
    auto r = extract_functions(make_document("m.py", "import os, re\n\ndef f(s):\n    return re.sub('a', '', s)\n"));
    REQUIRE(r.units.size() == 1);
    REQUIRE(r.units[0].imports.size() == 1);
    CHECK(r.units[0].imports[0].text == "import re");
}

TEST_CASE("class methods and nested functions are not extracted") {
    const std::string src = "class A:\n    def m(self):\n        return 1\n\n"
                            "def outer():\n    def inner():\n        return 2\n    return inner()\n";
    auto r = extract_functions(make_document("c.py", src));
    CHECK(names(r.units) == std::vector<std::string>{"outer"});
    CHECK(r.skipped_classes == 1);
}

TEST_CASE("long functions are dropped") {
    std::string body = "def big():\n";
    for (int i = 0; i < 200; ++i) {
        body += "    x" + std::to_string(i) + " = " + std::to_string(i) + "\n";
    }
    auto r = extract_functions(make_document("b.py", body), ExtractOptions{100});
    CHECK(r.units.empty());
    CHECK(r.dropped_too_long == 1);
    CHECK(extract_functions(make_document("b.py", body)).units.size() == 1);
}

TEST_CASE("unit ids are stable and json round-trips") {
    const auto doc = make_document("d.py", testsupport::fixture("draw_weights.py"));
    auto a = extract_functions(doc).units.at(0);
    auto b = extract_functions(doc).units.at(0);
    CHECK(a.unit_id == b.unit_id);
    CHECK(a.unit_id.size() == 64);
    CHECK(unit_from_json(to_json(a)) == a);
    CHECK_THROWS_AS(unit_from_json(json{{"name", "x"}}), InputError);
}

TEST_CASE("filter_by_packages keeps units with an allowed package") {
    std::vector<FunctionUnit> units = {unit_with("u1", {"os"}), unit_with("u2", {"numpy", "os"}),
                                       unit_with("u3", {"re"}), unit_with("u4", {})};
    PackageAllowlist a{{"numpy", "re"}};
    CHECK(names(filter_by_packages(units, a)) == std::vector<std::string>{"u2", "u3"});
    CHECK(names(filter_by_packages({unit_with("n", {"numpy"})}, PackageAllowlist{{"numpy"}})) ==
          std::vector<std::string>{"n"});
}

TEST_CASE("package filtering is monotone in the allowlist") {
    const std::vector<std::string> universe = {"a", "b", "c", "d", "e", "f"};
    std::mt19937 rng(11);
    auto random_subset = [&] {
        std::set<std::string> s;
        for (const auto& p : universe) {
            if (rng() % 3 == 0) {
                s.insert(p);
            }
        }
        return s;
    };
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<FunctionUnit> units;
        for (int i = 0; i < 10; ++i) {
            units.push_back(unit_with("u" + std::to_string(i), random_subset()));
        }
        PackageAllowlist small{random_subset()};
        PackageAllowlist big = small;
        for (const auto& p : random_subset()) {
            big.packages.insert(p);
        }
        const auto ks = names(filter_by_packages(units, small));
        const auto kb = names(filter_by_packages(units, big));
        for (const auto& n : ks) {
            CHECK(std::find(kb.begin(), kb.end(), n) != kb.end());
        }
    }
}

TEST_CASE("allowlist file") {
    TempDir dir;
    write_file_atomic(dir / "a.txt", "# comment\nnumpy\n\n");
    CHECK(PackageAllowlist::from_file(dir / "a.txt").packages == std::set<std::string>{"numpy"});
    write_file_atomic(dir / "empty.txt", "# nothing\n");
    CHECK_THROWS_AS(PackageAllowlist::from_file(dir / "empty.txt"), ConfigError);
    CHECK_THROWS(PackageAllowlist::from_file(dir / "missing.txt"));
}

TEST_CASE("safety screen with the shipped denylist") {
    const auto deny = Denylist::from_file(std::filesystem::path(UNITSYNTH_FIXTURE_DIR) / ".." / ".." / "config" /
                                          "denylist.txt");
    const std::vector<std::string> sources = {
        "import subprocess\n\ndef run(cmd):\n    return subprocess.run(cmd, shell=True)\n",
        "def add(a, b):\n    return a + b\n",
        "import shutil\n\ndef wipe(p):\n    shutil.rmtree(p)\n",
        "def evaluate(s):\n    return s.evaluate()\n",
        "import numpy as np\n\ndef m(x):\n    return np.mean(x)\n",
    };
    std::vector<FunctionUnit> units;
    for (size_t i = 0; i < sources.size(); ++i) {
        units.push_back(testsupport::unit_of(sources[i], "s" + std::to_string(i) + ".py"));
    }
    auto r = safety_screen(units, deny);
    CHECK(names(r.safe) == std::vector<std::string>{"add", "evaluate", "m"});
    CHECK(r.dropped.size() == 2);

    CHECK(safety_screen(units, Denylist()).safe.size() == 5);
    CHECK_THROWS_AS(Denylist({"("}), ConfigError);
}

}
