#include "slm/gd_baseline.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace slm {

std::string_view to_string(GdInit init) { return init == GdInit::spectral ? "spectral" : "random_scaled"; }

GdInit parse_gd_init(std::string_view name) {
    if (name == "spectral") return GdInit::spectral;
    if (name == "random_scaled") return GdInit::random_scaled;
    throw ConfigError("init must be 'spectral' or 'random_scaled'", "gd.init");
}

void GdConfig::validate(Index d) const {
    // zero steps are accepted (frozen state); negative ones are not
    if (!(step_w >= 0.0) || !std::isfinite(step_w)) throw ConfigError("must be a nonnegative number", "gd.step_w");
    if (!(step_u >= 0.0) || !std::isfinite(step_u)) throw ConfigError("must be a nonnegative number", "gd.step_u");
    if (!(step_v >= 0.0) || !std::isfinite(step_v)) throw ConfigError("must be a nonnegative number", "gd.step_v");
    if (rank < 1 || rank > d) throw ConfigError("must lie in [1, d]", "rank");
    if (batch_size < 1) throw ConfigError("must be positive", "batch_size");
    if (max_steps < 0) throw ConfigError("must be nonnegative", "gd.max_steps");
    if (init_sweeps < 1) throw ConfigError("must be positive", "gd.init_sweeps");
    if (max_halvings < 0) throw ConfigError("must be nonnegative", "gd.max_halvings");
    if (!(divergence_factor > 1.0)) throw ConfigError("must exceed 1", "gd.divergence_factor");
    if (!(termination_tol >= 0.0)) throw ConfigError("must be nonnegative", "gd.termination_tol");
}

namespace {

Vector residual(const MiniBatch& batch, const ModelState& state) {
    Vector r = state.predict(batch.x);
    r -= batch.y;
    return r;
}

// (1/n) sum r_i (x_i x_i^T [- D(x_i o x_i)]) F
Matrix factor_gradient(const MiniBatch& batch, const Vector& r, const Matrix& f, bool diag_free) {
    Matrix g = 2.0 * h_times_factor(batch.x, r, f);
    if (diag_free) g.noalias() -= (2.0 * h_diag(batch.x, r)).asDiagonal() * f;
    return g;
}

bool diag_free(const ModelState& s) { return s.mode == SolverMode::non_mip; }

}  // namespace

double loss(const MiniBatch& batch, const ModelState& state) {
    batch.validate();
    return 0.5 * residual(batch, state).squaredNorm() / static_cast<double>(batch.size());
}

GdGradients gradients(const MiniBatch& batch, const ModelState& state) {
    batch.validate();
    const Vector r = residual(batch, state);
    GdGradients g;
    g.w = batch.x * r / static_cast<double>(batch.size());
    g.u = factor_gradient(batch, r, state.v, diag_free(state));
    g.v = factor_gradient(batch, r, state.u, diag_free(state));
    return g;
}

Matrix expected_gradient_v(const ModelState& state, const GroundTruth& gt, const Vector& kappa, const Vector& phi) {
    const Index d = state.dim();
    if (gt.dim() != d || kappa.size() != d || phi.size() != d)
        throw DimensionError("expected_gradient_v: dimensions disagree");
    if (diag_free(state)) throw ConfigError("expected gradient is defined for the full U V^T model", "mode");

    const Matrix& u = state.u;
    const Matrix& b = gt.factor;
    Vector dm_diag = u.cwiseProduct(state.v).rowwise().sum() - b.cwiseProduct(b).rowwise().sum();
    Vector extra_diag = Vector::Zero(d);  // diagonal part of dM not carried by the factors
    if (gt.diag_free) {
        extra_diag = gt.factor_diagonal();
        dm_diag += extra_diag;
    }
    const Matrix btu = b.transpose() * u;
    Matrix g = u * (state.v.transpose() * u) + state.v * (u.transpose() * u) - 2.0 * b * btu;
    g.noalias() += (2.0 * extra_diag).asDiagonal() * u;
    g += dm_diag.sum() * u;
    const Vector scale =
        (phi.array() - 3.0) * dm_diag.array() + kappa.array() * (state.w - gt.w_star).array();
    g.noalias() += scale.asDiagonal() * u;
    return g;
}

ModelState gd_step(const ModelState& state, const MiniBatch& batch, const GdConfig& config) {
    batch.validate();
    if (batch.dim() != state.dim()) throw DimensionError("gd_step: batch dimension differs from the state");
    const double n = static_cast<double>(batch.size());
    const bool df = diag_free(state);

    ModelState next = state;
    next.step = state.step + 1;
    Vector r = residual(batch, next);
    next.w.noalias() -= (config.step_w / n) * (batch.x * r);
    r = residual(batch, next);
    next.u -= config.step_u * factor_gradient(batch, r, next.v, df);
    r = residual(batch, next);
    next.v -= config.step_v * factor_gradient(batch, r, next.u, df);
    return next;
}

GdRun run_gd(BatchSource& source, const GdConfig& config, const GroundTruth* gt, const StepObserver& observer) {
    GdRun run;
    const auto init_batch = source.next(config.batch_size);
    if (!init_batch) throw ConfigError("sample budget does not cover the initialization batch", "total_samples");
    const Index d = init_batch->dim();
    config.validate(d);
    if (gt && gt->dim() != d) throw DimensionError("run_gd: ground truth dimension differs from the data");

    const SolverMode mode = config.diag_free ? SolverMode::non_mip : SolverMode::mip;
    auto start = std::chrono::steady_clock::now();
    Rng init_rng = make_rng(config.seed, {tag(Stream::init)});
    ModelState initial;
    if (config.init == GdInit::spectral) {
        initial = initial_state(*init_batch, config.rank, mode, init_rng, config.init_sweeps);
    } else {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
        initial.u = Matrix::NullaryExpr(d, config.rank, [&] { return normal(init_rng); });
        initial.v = Matrix::Zero(d, config.rank);
        initial.w = Vector::Zero(d);
        initial.mode = mode;
    }
    run.state = initial;

    const auto since = [](std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
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
    rec0.wall_ms = since(start);
    rec0.add_flag("init");
    record(rec0);

    GdConfig cfg = config;
    int halvings = 0;
    double initial_loss = std::numeric_limits<double>::quiet_NaN();
    double previous_residual = std::numeric_limits<double>::quiet_NaN();
    for (Index t = 1; t <= config.max_steps; ++t) {
        auto batch = source.next(config.batch_size);
        if (!batch) {
            run.truncated = true;
            run.trace.back().add_flag("truncated");
            break;
        }
        if (batch->dim() != d) throw DimensionError("run_gd: batch dimension changed mid-stream");
        start = std::chrono::steady_clock::now();
        TraceRecord rec;
        rec.step = t;

        const double l = loss(*batch, run.state);
        if (std::isnan(initial_loss)) initial_loss = l;
        const double y_norm = batch->y.norm();
        const double res = std::sqrt(2.0 * l * static_cast<double>(batch->size()));
        rec.train_residual = y_norm > 0.0 ? res / y_norm : res;

        const bool blown = !std::isfinite(l) || l > config.divergence_factor * std::max(initial_loss, 1e-300);
        if (blown) {
            if (config.halve_on_divergence && halvings < config.max_halvings) {
                ++halvings;
                cfg.step_w *= 0.5;
                cfg.step_u *= 0.5;
                cfg.step_v *= 0.5;
                run.state = initial;
                run.state.step = t;
                rec.add_flag("halved");
                rec.wall_ms = since(start);
                previous_residual = std::numeric_limits<double>::quiet_NaN();
                record(rec);
                continue;
            }
            run.diverged = true;
            rec.add_flag("diverged");
            rec.wall_ms = since(start);
            record(rec);
            break;
        }

        run.state = gd_step(run.state, *batch, cfg);
        rec.wall_ms = since(start);
        const bool stalled = cfg.termination_tol > 0.0 && std::isfinite(previous_residual) &&
                             std::abs(previous_residual - rec.train_residual) < cfg.termination_tol;
        previous_residual = rec.train_residual;
        if (stalled) rec.add_flag("early_stop");
        record(rec);
        if (stalled) {
            run.early_stopped = true;
            break;
        }
    }
    run.final_step = cfg.step_v;
    run.samples_consumed = source.consumed();
    return run;
}

GdTuning tune_gd(const std::function<std::unique_ptr<BatchSource>()>& make_source, const GdConfig& base,
                 const std::vector<double>& grid, const GroundTruth* gt, const StepObserver& observer) {
    if (grid.empty()) throw ConfigError("step grid must not be empty", "gd.step_grid");
    GdTuning tuning;
    double best = std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (double eta : grid) {
        GdConfig cfg = base;
        cfg.set_step(eta);
        cfg.halve_on_divergence = false;
        auto source = make_source();
        GdRun run = run_gd(*source, cfg, gt, observer);
        const TraceRecord& last = run.trace.back();
        double err = gt ? last.eps : last.train_residual;
        if (run.diverged || !std::isfinite(err)) err = std::numeric_limits<double>::infinity();
        tuning.grid.push_back({eta, err, run.diverged});
        if (!have_best || err < best) {
            best = err;
            have_best = true;
            tuning.best_step = eta;
            tuning.best = std::move(run);
        }
    }
    return tuning;
}

}  // namespace slm
