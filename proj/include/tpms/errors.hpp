#pragma once

#include <stdexcept>
#include <string>

namespace tpms {

/// Base class of every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input: parameter outside a family domain, empty interval, bad bracket.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical procedure ran out of budget or could not reach its tolerance.
class NumericalError : public Error {
public:
    using Error::Error;
};

class NonConvergence : public NumericalError {
public:
    NonConvergence(const std::string& what, double best_value, double error_estimate)
        : NumericalError(what), best_value_(best_value), error_estimate_(error_estimate)
    {}
    double best_value() const noexcept { return best_value_; }
    double error_estimate() const noexcept { return error_estimate_; }

private:
    double best_value_;
    double error_estimate_;
};

class InvalidBracket : public DomainError {
public:
    using DomainError::DomainError;
};

/// A zero or non-finite pivot; the caller should retry with a perturbed shift.
class FactorizationBreakdown : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class RootFindingFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class PathTooCloseToBranchPoint : public DomainError {
public:
    using DomainError::DomainError;
};

class WAtZero : public DomainError {
public:
    using DomainError::DomainError;
};

class UnsupportedFamily : public DomainError {
public:
    using DomainError::DomainError;
};

/// Killing-Jacobi Rayleigh quotients are not small: assembly or convention bug.
class CalibrationFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CutConstructionFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class RankDeficiency : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Period vectors do not generate a discrete lattice at the requested tolerance.
class NonDiscrete : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NoCoherentAngle : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularBasis : public DomainError {
public:
    using DomainError::DomainError;
};

} // namespace tpms
