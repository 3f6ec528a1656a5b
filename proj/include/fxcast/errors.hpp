#pragma once

#include <stdexcept>
#include <string>

namespace fxcast {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape/axis disagreement between tensors.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid argument value (out-of-range index, nonpositive size, ...).
struct ParameterError : Error {
    using Error::Error;
};

/// API misuse (e.g. backward on a non-scalar root).
struct ContractError : Error {
    using Error::Error;
};

/// Malformed or inconsistent input data.
struct DataError : Error {
    using Error::Error;
};

/// Column set does not match the declared schema.
struct SchemaError : Error {
    using Error::Error;
};

/// Numerically unsolvable system (singular matrix, failed factorization).
struct NumericalError : Error {
    using Error::Error;
};

/// Invalid model or run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Attribution cannot be produced for the requested layer/model.
struct AttributionError : Error {
    using Error::Error;
};

/// Filesystem read/write failure.
struct IoError : Error {
    using Error::Error;
};

} // namespace fxcast
