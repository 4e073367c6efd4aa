#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace oupert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when an input violates a documented invariant. The message names
/// the violated invariant.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised by the config loader; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Monte Carlo estimate with its standard error.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

} // namespace oupert
