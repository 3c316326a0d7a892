#pragma once

#include "slm/distributions.hpp"
#include "slm/linalg.hpp"
#include "slm/moments.hpp"
#include "slm/sensing.hpp"
#include "slm/stream.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace slm {

/// mip: the moment systems are invertible and the full correction is used.
/// non_mip: diagonal-free model, no moment inversion.
enum class SolverMode { mip, non_mip };

/// power: factor update with an exact fixed point at the truth.
/// verbatim: U_hat = V - M(z) U, V+ = V R^T, kept for fidelity studies.
enum class UpdateRule { power, verbatim };

std::string_view to_string(SolverMode mode);
std::string_view to_string(UpdateRule rule);
SolverMode parse_solver_mode(std::string_view name);
UpdateRule parse_update_rule(std::string_view name);

/// Iterate {w, U, V}. The represented second-order matrix is U V^T, with its
/// diagonal dropped in non_mip mode.
struct ModelState {
    Vector w;
    Matrix u;  // d x k, orthonormal columns
    Matrix v;  // d x k
    Index step = 0;
    SolverMode mode = SolverMode::mip;

    Index dim() const noexcept { return u.rows(); }
    Index rank() const noexcept { return u.cols(); }

    /// X^T w + A(M_state).
    Vector predict(const Matrix& x) const;
    /// Dense effective matrix; small-d oracles only.
    Matrix dense_matrix() const;
};

struct SolverConfig {
    Index rank = 1;
    Index batch_size = 1;
    Index max_steps = 50;
    SolverMode mode = SolverMode::mip;
    UpdateRule update_rule = UpdateRule::power;
    bool trace_correction = true;
    MomentSource moment_source = MomentSource::estimated;
    double tau_tol = kDefaultTauTol;
    /// Stop once the training residual moves by less than this between two
    /// steps. Zero disables early stopping.
    double termination_tol = 1e-8;
    int init_sweeps = 30;
    std::uint64_t seed = 0;

    void validate(Index d) const;
};

/// Spectral initialization: dominant-k eigenvectors (by |eigenvalue|) of
/// H(y) for the init batch, via subspace iteration on factor products.
Matrix init_factors(const MiniBatch& batch, Index k, Rng& rng, int sweeps = 30);

/// w = 0, V = 0 and U from init_factors.
ModelState initial_state(const MiniBatch& batch, Index k, SolverMode mode, Rng& rng, int sweeps = 30);

/// Moment-corrected estimates built from one batch and one residual
/// z = y_hat - y. Statistics of z are computed once; apply_m can then be
/// evaluated against several factors at O(n d k) each.
///
///   mip:      M(z) = H(z) - D(G1 o p1)/2 - D(G2 o p2)/2 [- p0 I / 2]
///             W(z) = H1 o p1 + H2 o p2
///   non_mip:  M(z) = H(z) - D(p2)/2,   W(z) = p1
class CorrectionOperators {
public:
    CorrectionOperators(const MiniBatch& batch, Vector z, const MomentProfile& profile, SolverMode mode,
                        bool trace_correction);

    Matrix apply_m(const Matrix& u) const;
    const Vector& w_correction() const noexcept { return w_correction_; }
    const PStats& stats() const noexcept { return stats_; }

private:
    const Matrix* x_;
    Vector z_;
    PStats stats_;
    Vector diag_shift_;
    Vector w_correction_;
};

Matrix apply_M_operator(const MiniBatch& batch, const Vector& z, const Matrix& u, const MomentProfile& profile,
                        SolverMode mode, bool trace_correction);
Vector apply_W_operator(const MiniBatch& batch, const Vector& z, const MomentProfile& profile, SolverMode mode);

/// Factor and w update given the action of M(z) and the value of W(z).
/// Exposed separately so tests can inject exact operators.
///
/// power:    S = sym(U V^T) - M(z);  U+ = qr(S U);  V+ = S U+
/// verbatim: U+ R = qr(V - M(z) U);  V+ = V R^T
/// both:     w+ = w - W(z)
ModelState advance(const ModelState& state, const SymmetricAction& m_times, const Vector& w_correction,
                   UpdateRule rule, bool* rank_deficient = nullptr);

struct StepInfo {
    double train_residual = 0.0;  // ||y_hat - y|| / ||y|| on the step's batch, before the update
    bool rank_deficient = false;
};

ModelState mes_step(const ModelState& state, const MiniBatch& batch, const MomentProfile& profile,
                    const SolverConfig& config, StepInfo* info = nullptr);

struct RecoveryError {
    double beta = 0.0;   // ||w - w*||_2
    double gamma = 0.0;  // ||M - M*||_2
    double eps = 0.0;    // beta + gamma
};

/// Spectral error evaluated through factors (rank <= 2k plus a diagonal).
RecoveryError recovery_error(const ModelState& state, const GroundTruth& gt);

/// Called after every recorded state (step 0 = initialization) so that the
/// caller can attach e.g. test NMSE. Not included in wall time.
using StepObserver = std::function<void(const ModelState&, TraceRecord&)>;

struct MesRun {
    ModelState state;
    MomentProfile profile;
    std::vector<TraceRecord> trace;
    Index samples_consumed = 0;
    bool truncated = false;
    bool early_stopped = false;
};

/// One pass over `source`: one moment batch, one init batch, then up to
/// max_steps iteration batches of batch_size each. The moment batch is drawn
/// even when analytic moments are used, so sample accounting is identical.
MesRun run_mes(BatchSource& source, const SolverConfig& config, const GroundTruth* gt = nullptr,
               const std::optional<MomentProfile>& analytic = std::nullopt, const StepObserver& observer = {});

}  // namespace slm
