#pragma once

#include <stdexcept>
#include <string>

namespace corrsem {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed model: dimension mismatch, unresolved or unused parameter name.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Malformed or insufficient input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or option value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: non-PD matrices, non-finite values, unusable start.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Rank-deficient Jacobian, i.e. an unidentified parameter direction.
class IdentificationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A statistic requested where it is not defined (e.g. a zero-df test).
class UndefinedStatisticError : public Error {
public:
    using Error::Error;
};

/// Fourth-moment information required but not supplied.
class MissingMomentsError : public Error {
public:
    using Error::Error;
};

}  // namespace corrsem
