#pragma once

#include <stdexcept>
#include <string>

namespace sdr {

// Error taxonomy shared by the whole library. The C API maps each class to a
// status code, the CLI maps status codes to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration files, bad hyperparameters, contradictory toggles.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Missing or malformed input data (archives, manifests, splits).
class DataError : public Error {
public:
    using Error::Error;
};

// Filesystem failures and refusal to overwrite existing outputs.
class IoError : public Error {
public:
    using Error::Error;
};

// NaN/Inf escaping a primitive. Carries the offending op name in the message.
class NumericError : public Error {
public:
    using Error::Error;
};

// Broken internal contracts (missing gradients, shape drift, bad state).
class InvariantError : public Error {
public:
    using Error::Error;
};

// A loss function returned different values for identical parameters.
class DeterminismError : public Error {
public:
    using Error::Error;
};

} // namespace sdr
