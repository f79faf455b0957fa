#pragma once

#include <stdexcept>
#include <string>

namespace clbench {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid shapes, hyperparameters, incompatible stream/strategy pairs.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input files (IDX, CSV, JSON checkpoints).
class FormatError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// Operation invoked on state that cannot support it (empty buffer, no exemplars, ...).
class StateError : public Error {
public:
    using Error::Error;
};

/// Violation of the sequential evaluation protocol (write-once matrix cells, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

} // namespace clbench
