#pragma once

#include <stdexcept>
#include <string>

namespace msgnet {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A value left its admissible range (lengths, periods, counts).
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// NaN or Inf reached a place where only finite values are allowed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset input.
class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input record layout does not match what the model expects.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration, or a checkpoint that does not match its model.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace msgnet
