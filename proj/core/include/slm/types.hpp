#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace slm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `field()` names the offending field with a
/// dotted path (e.g. "mes.batch_size") when the error comes from a config.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message, std::string field = {})
        : Error(field.empty() ? message : field + ": " + message), detail_(message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }
    /// The message without the field prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
    std::string field_;
};

/// Shapes of the arguments do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// The 2x2 moment system of some coordinate is (numerically) singular, i.e.
/// the feature distribution is not moment invertible at that coordinate.
class MomentSystemSingular : public Error {
public:
    MomentSystemSingular(Index coordinate, double kappa, double phi, double gap);

    Index coordinate() const noexcept { return coordinate_; }
    double kappa() const noexcept { return kappa_; }
    double phi() const noexcept { return phi_; }
    double gap() const noexcept { return gap_; }

private:
    Index coordinate_;
    double kappa_;
    double phi_;
    double gap_;
};

inline void require(bool condition, const char* message) {
    if (!condition) throw DimensionError(message);
}

}  // namespace slm
