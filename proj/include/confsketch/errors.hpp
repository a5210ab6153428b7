#pragma once

#include <stdexcept>
#include <string>

namespace confsketch {

/// Invalid parameters or inconsistent configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Not enough calibration data to form a threshold.
class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An exact enumeration would exceed its size cap.
class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A data invariant was found broken (e.g. a label above its upper bound).
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Operation not defined for this sketch kind.
class UnsupportedKindError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed snapshot, TSV or config input.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace confsketch
