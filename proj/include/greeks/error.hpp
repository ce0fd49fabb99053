#pragma once

#include <stdexcept>
#include <string>

namespace greeks {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown names, missing capabilities, inconsistent config blocks.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Precondition violations on call arguments.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Evaluation outside the domain of a function (e.g. log of a non-positive value).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Quadrature or finite-difference procedures that fail to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Kernel construction failures (singular moment system, bad support).
class ConstructionError : public Error {
public:
    using Error::Error;
};

/// Kernel order verification failures.
class VerificationError : public Error {
public:
    using Error::Error;
};

/// The estimator could not produce an estimate (e.g. empty kernel window).
class EstimationError : public Error {
public:
    using Error::Error;
};

/// A bandwidth plan whose dominant bias constant vanishes.
class DegeneratePlanError : public Error {
public:
    using Error::Error;
};

/// A simulated path left the finite range.
class SimulationError : public Error {
public:
    SimulationError(const std::string& what, long step) : Error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

} // namespace greeks
