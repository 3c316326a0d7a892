#include "slm/mes_solver.hpp"

#include <chrono>
#include <cmath>

namespace slm {

std::string_view to_string(SolverMode mode) { return mode == SolverMode::mip ? "mip" : "non_mip"; }

std::string_view to_string(UpdateRule rule) { return rule == UpdateRule::power ? "power" : "verbatim"; }

SolverMode parse_solver_mode(std::string_view name) {
    if (name == "mip") return SolverMode::mip;
    if (name == "non_mip") return SolverMode::non_mip;
    throw ConfigError("mode must be 'mip' or 'non_mip'", "mode");
}

UpdateRule parse_update_rule(std::string_view name) {
    if (name == "power") return UpdateRule::power;
    if (name == "verbatim") return UpdateRule::verbatim;
    throw ConfigError("update rule must be 'power' or 'verbatim'", "update_rule");
}

Vector ModelState::predict(const Matrix& x) const {
    return apply_sensing(x, w, u, v, mode == SolverMode::non_mip);
}

Matrix ModelState::dense_matrix() const {
    Matrix m = u * v.transpose();
    if (mode == SolverMode::non_mip) m.diagonal().setZero();
    return m;
}

void SolverConfig::validate(Index d) const {
    if (rank < 1) throw ConfigError("must be at least 1", "rank");
    if (rank > d) throw ConfigError("must not exceed the dimension", "rank");
    if (batch_size < 1) throw ConfigError("must be positive", "batch_size");
    if (max_steps < 0) throw ConfigError("must be nonnegative", "max_steps");
    if (!(tau_tol > 0.0)) throw ConfigError("must be positive", "tau_tol");
    if (!(termination_tol >= 0.0)) throw ConfigError("must be nonnegative", "termination_tol");
    if (init_sweeps < 1) throw ConfigError("must be positive", "init_sweeps");
}

Matrix init_factors(const MiniBatch& batch, Index k, Rng& rng, int sweeps) {
    batch.validate();
    const SymmetricAction apply = [&](const Matrix& q) { return h_times_factor(batch.x, batch.y, q); };
    SubspaceOptions opts;
    opts.sweeps = sweeps;
    return dominant_subspace(apply, batch.dim(), k, rng, opts);
}

ModelState initial_state(const MiniBatch& batch, Index k, SolverMode mode, Rng& rng, int sweeps) {
    ModelState s;
    s.u = init_factors(batch, k, rng, sweeps);
    s.v = Matrix::Zero(batch.dim(), k);
    s.w = Vector::Zero(batch.dim());
    s.mode = mode;
    return s;
}

CorrectionOperators::CorrectionOperators(const MiniBatch& batch, Vector z, const MomentProfile& profile,
                                         SolverMode mode, bool trace_correction)
    : x_(&batch.x), z_(std::move(z)) {
    stats_ = p_stats(batch.x, z_);
    const Index d = batch.dim();
    if (mode == SolverMode::non_mip) {
        diag_shift_ = 0.5 * stats_.p2;
        w_correction_ = stats_.p1;
        return;
    }
    if (profile.dim() != d) throw DimensionError("CorrectionOperators: moment profile dimension mismatch");
    if (!profile.has_tables()) throw ConfigError("mip mode needs correction tables in the moment profile", "mode");
    const Matrix& g = profile.g;
    const Matrix& h = profile.h;
    diag_shift_ = 0.5 * (g.col(0).cwiseProduct(stats_.p1) + g.col(1).cwiseProduct(stats_.p2));
    if (trace_correction) diag_shift_.array() += 0.5 * stats_.p0;
    w_correction_ = h.col(0).cwiseProduct(stats_.p1) + h.col(1).cwiseProduct(stats_.p2);
}

Matrix CorrectionOperators::apply_m(const Matrix& u) const {
    Matrix out = h_times_factor(*x_, z_, u);
    out.noalias() -= diag_shift_.asDiagonal() * u;
    return out;
}

Matrix apply_M_operator(const MiniBatch& batch, const Vector& z, const Matrix& u, const MomentProfile& profile,
                        SolverMode mode, bool trace_correction) {
    return CorrectionOperators(batch, z, profile, mode, trace_correction).apply_m(u);
}

Vector apply_W_operator(const MiniBatch& batch, const Vector& z, const MomentProfile& profile, SolverMode mode) {
    return CorrectionOperators(batch, z, profile, mode, false).w_correction();
}

ModelState advance(const ModelState& state, const SymmetricAction& m_times, const Vector& w_correction,
                   UpdateRule rule, bool* rank_deficient) {
    const Index d = state.dim();
    if (state.v.rows() != d || state.v.cols() != state.rank() || state.w.size() != d || w_correction.size() != d)
        throw DimensionError("advance: state shapes are inconsistent");

    ModelState next;
    next.mode = state.mode;
    next.step = state.step + 1;
    next.w = state.w - w_correction;

    const Matrix& u = state.u;
    const Matrix& v = state.v;
    ThinQr qr;
    if (rule == UpdateRule::power) {
        // sym(U V^T) B = (U (V^T B) + V (U^T B)) / 2; the antisymmetric part of
        // U V^T is invisible to the measurements, so it is not propagated.
        const auto sym_times = [&](const Matrix& b) -> Matrix {
            Matrix out = u * (v.transpose() * b);
            out.noalias() += v * (u.transpose() * b);
            out *= 0.5;
            return out;
        };
        Matrix u_hat = sym_times(u);
        u_hat -= m_times(u);
        qr = thin_qr(u_hat);
        u_hat.resize(0, 0);
        next.v = sym_times(qr.q);
        next.v -= m_times(qr.q);
        next.u = std::move(qr.q);
    } else {
        Matrix u_hat = v;
        u_hat -= m_times(u);
        qr = thin_qr(u_hat);
        next.v.noalias() = v * qr.r.transpose();
        next.u = std::move(qr.q);
    }
    if (rank_deficient) *rank_deficient = qr.rank_deficient;
    return next;
}

ModelState mes_step(const ModelState& state, const MiniBatch& batch, const MomentProfile& profile,
                    const SolverConfig& config, StepInfo* info) {
    batch.validate();
    if (batch.dim() != state.dim()) throw DimensionError("mes_step: batch dimension differs from the state");
    if (state.mode != config.mode) throw ConfigError("state mode differs from the solver mode", "mode");

    Vector z = state.predict(batch.x);
    z -= batch.y;
    const double y_norm = batch.y.norm();
    const double residual = y_norm > 0.0 ? z.norm() / y_norm : z.norm();

    const CorrectionOperators ops(batch, std::move(z), profile, config.mode, config.trace_correction);
    bool deficient = false;
    ModelState next = advance(state, [&](const Matrix& b) { return ops.apply_m(b); }, ops.w_correction(),
                              config.update_rule, &deficient);
    if (info) {
        info->train_residual = residual;
        info->rank_deficient = deficient;
    }
    return next;
}

RecoveryError recovery_error(const ModelState& state, const GroundTruth& gt) {
    const Index d = state.dim();
    const Index k = state.rank();
    const Index r = gt.rank();
    if (gt.dim() != d) throw DimensionError("recovery_error: ground truth dimension differs from the state");

    RecoveryError e;
    e.beta = (state.w - gt.w_star).norm();

    Matrix left(d, k + r), right(d, k + r);
    left << state.u, -gt.factor;
    right << state.v, gt.factor;
    Vector diag = Vector::Zero(d);
    if (state.mode == SolverMode::non_mip) diag -= state.u.cwiseProduct(state.v).rowwise().sum();
    if (gt.diag_free) diag += gt.factor_diagonal();
    e.gamma = spectral_norm_factored(left, right, diag);
    e.eps = e.beta + e.gamma;
    return e;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

MesRun run_mes(BatchSource& source, const SolverConfig& config, const GroundTruth* gt,
               const std::optional<MomentProfile>& analytic, const StepObserver& observer) {
    MesRun run;
    const auto first = source.next(config.batch_size);
    if (!first) throw ConfigError("sample budget does not cover the moment batch", "total_samples");
    const Index d = first->dim();
    config.validate(d);
    if (gt && gt->dim() != d) throw DimensionError("run_mes: ground truth dimension differs from the data");

    const bool with_tables = config.mode == SolverMode::mip;
    if (config.moment_source == MomentSource::estimated) {
        run.profile = estimated_profile(first->x, with_tables, config.tau_tol);
    } else {
        if (!analytic) throw ConfigError("analytic moments requested but no analytic profile given", "moment_source");
        if (analytic->dim() != d) throw DimensionError("run_mes: analytic profile dimension differs from the data");
        if (with_tables && !analytic->has_tables())
            throw ConfigError("analytic profile lacks correction tables", "moment_source");
        run.profile = *analytic;
    }

    const auto init_batch = source.next(config.batch_size);
    if (!init_batch) throw ConfigError("sample budget does not cover the initialization batch", "total_samples");
    auto start = std::chrono::steady_clock::now();
    Rng init_rng = make_rng(config.seed, {tag(Stream::init)});
    run.state = initial_state(*init_batch, config.rank, config.mode, init_rng, config.init_sweeps);

    const auto record = [&](TraceRecord& rec) {
        if (gt) {
            const RecoveryError e = recovery_error(run.state, *gt);
            rec.beta = e.beta;
            rec.gamma = e.gamma;
            rec.eps = e.eps;
        }
        if (observer) observer(run.state, rec);
        run.trace.push_back(std::move(rec));
    };

    TraceRecord rec0;
    rec0.wall_ms = elapsed_ms(start);
    rec0.add_flag("init");
    record(rec0);

    double previous_residual = std::numeric_limits<double>::quiet_NaN();
    for (Index t = 1; t <= config.max_steps; ++t) {
        auto batch = source.next(config.batch_size);
        if (!batch) {
            run.truncated = true;
            if (!run.trace.empty()) run.trace.back().add_flag("truncated");
            break;
        }
        if (batch->dim() != d) throw DimensionError("run_mes: batch dimension changed mid-stream");
        start = std::chrono::steady_clock::now();
        StepInfo info;
        run.state = mes_step(run.state, *batch, run.profile, config, &info);
        TraceRecord rec;
        rec.step = t;
        rec.wall_ms = elapsed_ms(start);
        rec.train_residual = info.train_residual;
        if (info.rank_deficient) rec.add_flag("rank_deficient");
        const bool finite = run.state.u.allFinite() && run.state.v.allFinite() && run.state.w.allFinite();
        if (!finite) rec.add_flag("non_finite");
        const bool stalled = config.termination_tol > 0.0 && std::isfinite(previous_residual) &&
                             std::abs(previous_residual - info.train_residual) < config.termination_tol;
        if (stalled) rec.add_flag("early_stop");
        previous_residual = info.train_residual;
        record(rec);
        if (stalled) {
            run.early_stopped = true;
            break;
        }
        if (!finite) break;
    }
    run.samples_consumed = source.consumed();
    return run;
}

}  // namespace slm
