#pragma once

#include <stdexcept>
#include <string>

namespace stad {

// Error families map to distinct CLI exit codes (see tools/stad_main.cpp).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatches are programming/config mistakes; treated as config errors.
struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};

}  // namespace stad
