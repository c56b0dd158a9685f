#pragma once

#include <stdexcept>
#include <string>

namespace landseg {

// Base for all library errors. CLI maps these to exit code 2,
// argument/usage problems to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace landseg
