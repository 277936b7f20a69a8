#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace conmax {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidDynamics : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnboundedFeasibleSet : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a builder receives a base state that is not feasible.
class PreconditionViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A local solution needed by the merge is missing.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UndefinedMeasure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mid-run loss of feasibility; indicates a bug rather than a bad input.
class FeasibilityViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw InvalidArgument(message);
}

} // namespace conmax
