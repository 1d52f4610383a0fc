#pragma once

#include <stdexcept>
#include <string>

namespace unitsynth {

/// Base for every error raised by the pipeline libraries.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable input, unwritable output.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A stage's input artifact is missing or malformed.
class InputError : public Error {
public:
    using Error::Error;
};

} // namespace unitsynth
