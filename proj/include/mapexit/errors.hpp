#pragma once

#include <stdexcept>
#include <string>

namespace mapexit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The model (or model file) violates a structural invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied argument is outside the documented domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: an identity that must hold by theory did not.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Evaluation point within 1e-10 of a pole of the matrix exponent.
class PoleError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Two roots of det F coincide (Jordan structure is not supported).
class RepeatedRoot : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Number of right half-plane roots disagrees with the phase count.
class CountMismatch : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Quantity is infinite for a recurrent process (no killing, zero drift).
class RecurrentCase : public NumericalError {
public:
    explicit RecurrentCase(const std::string& what)
        : NumericalError(what + " (process is recurrent: add a small killing rate, e.g. --kill 1e-3)") {}
};

}  // namespace mapexit
