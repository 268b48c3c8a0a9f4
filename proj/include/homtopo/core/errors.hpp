#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace homtopo {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

/// Linear solver failed to reach the requested tolerance.
struct SolverError : Error {
    std::vector<double> residual_history;
    SolverError(const std::string &msg, std::vector<double> history)
        : Error(msg), residual_history(std::move(history)) {}
};

/// Elasticity problem without any Dirichlet support.
struct RigidModeError : Error {
    using Error::Error;
};

/// Error raised when an iterative optimizer produces non-finite values.
struct NumericalError : Error {
    using Error::Error;
};

struct SingularityError : Error {
    std::vector<std::pair<int, double>> charges;  // (primal vertex, index)
    SingularityError(const std::string &msg, std::vector<std::pair<int, double>> c)
        : Error(msg), charges(std::move(c)) {}
};

struct ConfigError : Error {
    std::vector<std::string> violations;
    explicit ConfigError(std::vector<std::string> v) : Error(join(v)), violations(std::move(v)) {}

  private:
    static std::string join(const std::vector<std::string> &v) {
        std::string out = "invalid configuration:";
        for (const auto &s : v) out += "\n  " + s;
        return out;
    }
};

}  // namespace homtopo
