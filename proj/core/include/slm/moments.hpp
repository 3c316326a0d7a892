#pragma once

#include "slm/distributions.hpp"
#include "slm/types.hpp"

namespace slm {

inline constexpr double kDefaultTauTol = 1e-6;

enum class MomentSource { analytic, estimated };

std::string_view to_string(MomentSource source);
MomentSource parse_moment_source(std::string_view name);

/// Per-coordinate third and fourth sample moments (raw, not re-centered).
struct MomentEstimates {
    Vector kappa;
    Vector phi;
};

MomentEstimates estimate_moments(const Matrix& x);

/// Smallest per-coordinate Pearson gap phi~ - 1 - kappa~^2 of the sample
/// after re-centering and re-scaling each coordinate by its own sample mean
/// and deviation. It is >= 0 for any sample and exactly 0 (up to rounding)
/// when a coordinate takes at most two distinct values, which makes it a
/// deterministic detector for two-point (Bernoulli, Rademacher) features.
/// `coordinate` receives the argmin when non-null.
double standardized_pearson_gap(const Matrix& x, Index* coordinate = nullptr);

/// Coefficient tables of the moment correction. Row j of G solves
///   [[1, k_j], [k_j, f_j - 1]] g = [k_j, f_j - 3]^T
/// and row j of H solves the same system against [1, 0]^T.
struct CorrectionTables {
    Matrix g;  // d x 2
    Matrix h;  // d x 2
};

/// Throws MomentSystemSingular at the first coordinate whose determinant
/// |phi_j - 1 - kappa_j^2| is below tau_tol.
CorrectionTables solve_moment_systems(const Vector& kappa, const Vector& phi, double tau_tol = kDefaultTauTol);

/// min_j |phi_j - 1 - kappa_j^2|.
double mip_constant(const Vector& kappa, const Vector& phi);

struct MomentProfile {
    Vector kappa;
    Vector phi;
    Matrix g;  // empty when the profile was built without correction tables
    Matrix h;
    double tau_hat = 0.0;
    MomentSource source = MomentSource::analytic;
    Index n_used = 0;

    Index dim() const noexcept { return kappa.size(); }
    bool has_tables() const noexcept { return g.rows() == kappa.size() && g.cols() == 2; }
};

/// Profile from the closed-form moments of `spec`, replicated over d
/// coordinates. With `with_tables` the correction tables are solved (and
/// MomentSystemSingular propagates for non-MIP distributions).
MomentProfile analytic_profile(const DistributionSpec& spec, Index d, bool with_tables,
                               double tau_tol = kDefaultTauTol);

/// Profile from a dedicated warm-up batch. With `with_tables` the batch is
/// first screened with standardized_pearson_gap and then the raw-moment
/// systems are solved; either check can raise MomentSystemSingular.
MomentProfile estimated_profile(const Matrix& x, bool with_tables, double tau_tol = kDefaultTauTol);

}  // namespace slm
