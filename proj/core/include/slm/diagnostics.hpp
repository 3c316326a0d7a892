#pragma once

#include "slm/distributions.hpp"
#include "slm/mes_solver.hpp"

#include <string>
#include <vector>

namespace slm {

struct TheoryBounds {
    double p = 1.0;
    double tau = 0.0;
    double delta = 0.0;  // the delta the sample size was computed for
    double delta_max = 0.0;
    double sigma_1 = 0.0;
    double sigma_k = 0.0;
    double w_norm_sq = 0.0;
    Index n_recommended = 1;
    bool tau_term_used = true;
};

/// Quantities of the global convergence theorem for a planted model:
///   p = max{1, |kappa|_inf, |phi - 3|_inf, |phi - 1|_inf}
///   delta_max = (4 sqrt5 s1/sk + 3) sk / (4 sqrt5 s1 + 3 sk + 4 sqrt5 |w*|^2)
///   n = ceil(C (p + 1)^2 / delta^2 * max{p / tau^2, k^2 d})
/// s1, sk are singular values of B B^T (also for diagonal-free targets).
/// In non_mip mode the p / tau^2 term is dropped. A non-positive delta
/// selects delta_max. Throws MomentSystemSingular when tau vanishes in mip
/// mode.
TheoryBounds theory_bounds(const GroundTruth& gt, const Vector& kappa, const Vector& phi, Index k, double delta,
                           double constant, SolverMode mode = SolverMode::mip);

struct VerifierRow {
    Index n = 0;
    double mean_dev = 0.0;
    double stderr_dev = 0.0;
};

struct VerifierTable {
    std::string statistic;
    std::vector<VerifierRow> rows;
    double fitted_exponent = 0.0;  // least-squares slope of log mean_dev on log n; NaN if undefined
    std::vector<std::string> notes;
};

/// Slope of log(dev) against log(n); NaN when any deviation is not positive.
double fitted_exponent(const std::vector<VerifierRow>& rows);

/// Writes n,mean_dev,stderr,fitted_exponent.
void write_verifier_csv(const VerifierTable& table, const std::string& path);

struct VerifierOptions {
    std::vector<Index> n_list{1000, 4000, 16000};
    Index trials = 50;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Verifiers form d x d matrices; larger d is refused.
    Index max_dim = 32;
};

/// Mean spectral deviation of (1/n) sum z_i x_i x_i^T, z = A(M), from
/// M + M^T + tr(M) I + D(phi - 3) D(M) for each n in the list.
VerifierTable verify_shifted_cirip(const DistributionSpec& spec, const Matrix& m, const VerifierOptions& options);

/// Deviations of p0, p1, p2 and of (1/n) A'(X^T w) from their limits
///   tr M,  D(M) kappa + w,  D(M)(phi - 1) + kappa o w,  D(kappa o w)
/// for y = X^T w + A(M). Returns tables p0, p1, p2, adjoint_linear.
std::vector<VerifierTable> verify_p_concentration(const DistributionSpec& spec, const Vector& w, const Matrix& m,
                                                  const VerifierOptions& options);

}  // namespace slm
