#pragma once

#include <stdexcept>
#include <string>

namespace randsac {

// Base class for all errors raised by the library. The CLI maps subclasses
// to exit codes (2 config, 3 data, 4 divergence).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

// Violation of an internal contract (e.g. an all-false attention mask row).
struct ContractError : Error {
    using Error::Error;
};

}  // namespace randsac
