#pragma once

#include <stdexcept>
#include <string>

namespace mim {

// Error taxonomy mirrored by the C API status codes (see include/mim/mim.h).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

// Shape/dimension mismatches between tensors.
struct ShapeError : Error {
    using Error::Error;
};

// Violated API contract (e.g. scoring an unfitted detector).
struct ContractError : Error {
    using Error::Error;
};

}  // namespace mim
