#pragma once

#include "slm/mes_solver.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace slm {

enum class GdInit { spectral, random_scaled };

std::string_view to_string(GdInit init);
GdInit parse_gd_init(std::string_view name);

struct GdConfig {
    double step_w = 0.5;
    double step_u = 0.5;
    double step_v = 0.5;
    Index rank = 1;
    Index batch_size = 1;
    Index max_steps = 51;
    GdInit init = GdInit::spectral;
    int init_sweeps = 30;
    /// Fit U V^T with its diagonal removed (for diagonal-free targets).
    bool diag_free = false;
    /// On divergence restart from the initial state with all steps halved,
    /// at most max_halvings times; otherwise stop with a "diverged" flag.
    bool halve_on_divergence = true;
    int max_halvings = 8;
    double divergence_factor = 1e6;
    double termination_tol = 1e-8;
    std::uint64_t seed = 0;

    void set_step(double eta) { step_w = step_u = step_v = eta; }
    void validate(Index d) const;
};

/// (1/2n) ||X^T w + A(M_state) - y||^2.
double loss(const MiniBatch& batch, const ModelState& state);

struct GdGradients {
    Vector w;
    Matrix u;
    Matrix v;
};

/// Gradients of `loss` at a single point:
///   g_w = X r / n,  g_U = (1/n) sum r_i x_i x_i^T V,  g_V = (1/n) sum r_i x_i x_i^T U
/// with the rows additionally reduced by D((X o X) r / n) when the state is
/// diagonal-free.
GdGradients gradients(const MiniBatch& batch, const ModelState& state);

/// Closed-form E[g_V] for coordinate-i.i.d. standardized features:
///   (dM + dM^T) U + tr(dM) U + D(phi - 3) D(dM) U + D(kappa o dw) U
/// where dM = U V^T - M*, dw = w - w*. For symmetric dM this is
/// 2 dM U + F U. The state must not be diagonal-free.
Matrix expected_gradient_v(const ModelState& state, const GroundTruth& gt, const Vector& kappa, const Vector& phi);

/// One alternating update: w, then U, then V, each against the residual of
/// the partially updated state.
ModelState gd_step(const ModelState& state, const MiniBatch& batch, const GdConfig& config);

struct GdRun {
    ModelState state;
    std::vector<TraceRecord> trace;
    Index samples_consumed = 0;
    double final_step = 0.0;  // step size in effect at the end (after halvings)
    bool truncated = false;
    bool diverged = false;
    bool early_stopped = false;
};

/// Consumes one init batch and up to max_steps iteration batches.
GdRun run_gd(BatchSource& source, const GdConfig& config, const GroundTruth* gt = nullptr,
             const StepObserver& observer = {});

struct GdGridPoint {
    double step = 0.0;
    double final_error = 0.0;  // final eps with ground truth, else final training residual
    bool diverged = false;
};

struct GdTuning {
    GdRun best;
    double best_step = 0.0;
    std::vector<GdGridPoint> grid;
};

inline const std::vector<double>& default_gd_grid() {
    static const std::vector<double> grid{1.0, 0.5, 0.1, 0.01};
    return grid;
}

/// Runs GD once per grid value (without halving, so each point is tested as
/// given) on identical data from `make_source`, keeping the best final error.
GdTuning tune_gd(const std::function<std::unique_ptr<BatchSource>()>& make_source, const GdConfig& base,
                 const std::vector<double>& grid, const GroundTruth* gt = nullptr, const StepObserver& observer = {});

}  // namespace slm
