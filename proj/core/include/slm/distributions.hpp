#pragma once

#include "slm/random.hpp"
#include "slm/types.hpp"

#include <array>
#include <string>
#include <string_view>

namespace slm {

enum class Family { gaussian, truncated_gaussian, bernoulli, rademacher };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

/// Per-coordinate feature distribution. Coordinates are i.i.d.
///
/// truncated_gaussian draws g ~ N(0,1) and returns min(g, truncation).
/// bernoulli returns 1 with probability success_prob, else 0.
/// With `standardize` both are shifted and scaled to mean 0 / variance 1
/// using closed-form moments; gaussian and rademacher already are.
struct DistributionSpec {
    Family family = Family::gaussian;
    double truncation = 0.0;    // truncated_gaussian only
    double success_prob = 0.5;  // bernoulli only, strictly inside (0, 1)
    bool standardize = true;

    static DistributionSpec gaussian() { return {}; }
    static DistributionSpec rademacher() { return {Family::rademacher}; }
    static DistributionSpec truncated(double a, bool standardize = true) {
        return {Family::truncated_gaussian, a, 0.5, standardize};
    }
    static DistributionSpec bernoulli(double q, bool standardize = true) {
        return {Family::bernoulli, 0.0, q, standardize};
    }

    /// Throws ConfigError when a parameter is out of range.
    void validate() const;
};

/// Third moment, fourth moment and MIP gap |phi - 1 - kappa^2| of a single
/// coordinate of the (possibly standardized) distribution.
struct CoordinateMoments {
    double kappa = 0.0;
    double phi = 0.0;
    double tau = 0.0;
};

CoordinateMoments analytic_moments(const DistributionSpec& spec);

/// Mean and standard deviation of the raw (pre-standardization) draw.
struct Standardization {
    double mean = 0.0;
    double sd = 1.0;
};

Standardization raw_standardization(const DistributionSpec& spec);

/// Raw moments E[min(g, a)^m] for m = 0..4, g ~ N(0,1).
std::array<double, 5> truncated_gaussian_raw_moments(double a);

/// Draws single coordinates of the effective distribution.
class FeatureSampler {
public:
    explicit FeatureSampler(const DistributionSpec& spec);

    double operator()(Rng& rng) const;
    const DistributionSpec& spec() const noexcept { return spec_; }

private:
    DistributionSpec spec_;
    Standardization shift_;
};

/// d x n matrix whose entries are i.i.d. draws. Deterministic in `rng`.
Matrix sample_batch(const DistributionSpec& spec, Index d, Index n, Rng& rng);

/// Planted second-order model y = x^T w* + x^T M* x + noise_level * N(0,1),
/// with M* = B B^T, minus its diagonal when diag_free.
struct GroundTruth {
    Vector w_star;
    Matrix factor;  // B, d x k
    bool diag_free = false;
    double noise_level = 0.0;

    Index dim() const noexcept { return factor.rows(); }
    Index rank() const noexcept { return factor.cols(); }

    /// Diagonal of B B^T (what diag_free removes).
    Vector factor_diagonal() const;
    /// Dense effective M*; for oracles and small-d diagnostics only.
    Matrix dense_matrix() const;
};

/// Random orthonormal factor (so M* has k unit singular values) and
/// w* ~ N(0, I/d).
GroundTruth make_ground_truth(Index d, Index k, bool diag_free, Rng& rng, double noise_level = 0.0);

/// Labels through the factor, O(dk) per instance. The noise draws come from
/// `rng` only when the noise level is positive.
Vector label_batch(const GroundTruth& gt, const Matrix& x, Rng& rng);

}  // namespace slm
