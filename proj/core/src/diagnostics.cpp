#include "slm/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace slm {

TheoryBounds theory_bounds(const GroundTruth& gt, const Vector& kappa, const Vector& phi, Index k, double delta,
                           double constant, SolverMode mode) {
    const Index d = gt.dim();
    if (kappa.size() != d || phi.size() != d) throw DimensionError("theory_bounds: moment vectors have wrong length");
    if (k < 1 || k > gt.rank()) throw ConfigError("must lie in [1, rank of the ground truth]", "rank");
    if (!(constant > 0.0)) throw ConfigError("must be positive", "bounds.constant");

    TheoryBounds b;
    b.p = std::max({1.0, kappa.cwiseAbs().maxCoeff(), (phi.array() - 3.0).abs().maxCoeff(),
                    (phi.array() - 1.0).abs().maxCoeff()});
    b.tau = mip_constant(kappa, phi);
    b.tau_term_used = mode == SolverMode::mip;
    if (b.tau_term_used && b.tau < kDefaultTauTol) {
        Index j = 0;
        (phi.array() - 1.0 - kappa.array().square()).abs().minCoeff(&j);
        throw MomentSystemSingular(j, kappa(j), phi(j), b.tau);
    }

    // singular values of B B^T are the squared singular values of B
    const Eigen::JacobiSVD<Matrix> svd(gt.factor);
    const Vector s = svd.singularValues();
    b.sigma_1 = s(0) * s(0);
    b.sigma_k = s(k - 1) * s(k - 1);
    if (!(b.sigma_k > 0.0)) throw ConfigError("sigma_k of the target must be positive", "rank");
    b.w_norm_sq = gt.w_star.squaredNorm();

    const double r5 = 4.0 * std::sqrt(5.0);
    b.delta_max = (r5 * b.sigma_1 / b.sigma_k + 3.0) * b.sigma_k / (r5 * b.sigma_1 + 3.0 * b.sigma_k + r5 * b.w_norm_sq);
    b.delta = delta > 0.0 ? delta : b.delta_max;

    const double dim_term = static_cast<double>(k) * static_cast<double>(k) * static_cast<double>(d);
    const double inner = b.tau_term_used ? std::max(b.p / (b.tau * b.tau), dim_term) : dim_term;
    const double n = constant * (b.p + 1.0) * (b.p + 1.0) / (b.delta * b.delta) * inner;
    // shave rounding noise so exact products (e.g. 90000) do not round up
    const double shaved = n * (1.0 - 8.0 * std::numeric_limits<double>::epsilon());
    b.n_recommended = std::max<Index>(1, static_cast<Index>(std::ceil(shaved)));
    return b;
}

double fitted_exponent(const std::vector<VerifierRow>& rows) {
    if (rows.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : rows) {
        if (!(r.mean_dev > 0.0) || r.n < 1) return std::numeric_limits<double>::quiet_NaN();
        const double x = std::log(static_cast<double>(r.n));
        const double y = std::log(r.mean_dev);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(rows.size());
    const double den = m * sxx - sx * sx;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (m * sxy - sx * sy) / den;
}

void write_verifier_csv(const VerifierTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "n,mean_dev,stderr,fitted_exponent\n";
    char line[160];
    for (const auto& r : table.rows) {
        std::snprintf(line, sizeof line, "%lld,%.10g,%.10g,%.6g\n", static_cast<long long>(r.n), r.mean_dev,
                      r.stderr_dev, table.fitted_exponent);
        out << line;
    }
    if (!out) throw Error("failed writing " + path);
}

namespace {

void check_verifier_inputs(const DistributionSpec& spec, Index d, const VerifierOptions& opt) {
    spec.validate();
    if (!spec.standardize) throw ConfigError("verifiers assume standardized features", "distribution.standardize");
    if (d < 1) throw DimensionError("verifier: empty dimension");
    if (d > opt.max_dim)
        throw ConfigError("verifiers form dense d x d matrices; d = " + std::to_string(d) + " exceeds the limit " +
                              std::to_string(opt.max_dim),
                          "dimension");
    if (opt.trials < 1) throw ConfigError("must be positive", "trials");
    if (opt.n_list.empty()) throw ConfigError("must not be empty", "n_list");
    for (Index n : opt.n_list)
        if (n < 1) throw ConfigError("entries must be positive", "n_list");
}

double spectral_norm_symmetric(const Matrix& a) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

// (1/n) sum_i z_i x_i x_i^T
Matrix weighted_outer(const Matrix& x, const Vector& z) {
    Matrix out = Matrix::Zero(x.rows(), x.rows());
    for (Index start = 0; start < x.cols(); start += kSensingBlock) {
        const Index len = std::min(kSensingBlock, x.cols() - start);
        const auto block = x.middleCols(start, len);
        out.noalias() += block * z.segment(start, len).asDiagonal() * block.transpose();
    }
    return out / static_cast<double>(x.cols());
}

Vector quadratic_forms(const Matrix& x, const Matrix& m) { return (x.cwiseProduct(m * x)).colwise().sum().transpose(); }

// Runs `trial_stats` for every (n, trial) pair and reduces each of `count`
// statistics to mean and standard error per n.
std::vector<VerifierTable> run_trials(const VerifierOptions& opt, std::size_t count,
                                      const std::function<std::vector<double>(Index n, Rng&)>& trial_stats) {
    std::vector<VerifierTable> tables(count);
    for (std::size_t ni = 0; ni < opt.n_list.size(); ++ni) {
        const Index n = opt.n_list[ni];
        std::vector<std::vector<double>> per_trial(static_cast<std::size_t>(opt.trials));
        parallel_for(opt.trials, opt.threads, [&](Index t) {
            Rng rng = make_rng(opt.seed, {tag(Stream::verifier), static_cast<std::uint64_t>(ni),
                                          static_cast<std::uint64_t>(t)});
            per_trial[static_cast<std::size_t>(t)] = trial_stats(n, rng);
        });
        const double m = static_cast<double>(opt.trials);
        for (std::size_t s = 0; s < count; ++s) {
            double sum = 0, sq = 0;
            for (const auto& v : per_trial) {
                sum += v[s];
                sq += v[s] * v[s];
            }
            const double mean = sum / m;
            const double var = opt.trials > 1 ? std::max(0.0, (sq - m * mean * mean) / (m - 1.0)) : 0.0;
            tables[s].rows.push_back({n, mean, std::sqrt(var / m)});
        }
    }
    for (auto& t : tables) t.fitted_exponent = fitted_exponent(t.rows);
    return tables;
}

std::string precondition_note(const DistributionSpec& spec, Index d) {
    const CoordinateMoments cm = analytic_moments(spec);
    const double need = (2.0 + std::abs(cm.phi - 3.0)) * (2.0 + std::abs(cm.phi - 3.0));
    if (static_cast<double>(d) >= need) return {};
    char buf[160];
    std::snprintf(buf, sizeof buf, "dimension %lld below (2 + |phi - 3|)^2 = %.4g; the expectation identity still holds",
                  static_cast<long long>(d), need);
    return buf;
}

}  // namespace

VerifierTable verify_shifted_cirip(const DistributionSpec& spec, const Matrix& m, const VerifierOptions& options) {
    const Index d = m.rows();
    if (m.cols() != d) throw DimensionError("verify_shifted_cirip: M must be square");
    check_verifier_inputs(spec, d, options);
    const CoordinateMoments cm = analytic_moments(spec);

    Matrix expected = m + m.transpose();
    expected.diagonal().array() += m.trace() + (cm.phi - 3.0) * m.diagonal().array();

    auto tables = run_trials(options, 1, [&](Index n, Rng& rng) {
        const Matrix x = sample_batch(spec, d, n, rng);
        const Vector z = quadratic_forms(x, m);
        return std::vector<double>{spectral_norm_symmetric(weighted_outer(x, z) - expected)};
    });
    VerifierTable table = std::move(tables.front());
    table.statistic = "shifted_cirip";
    if (auto note = precondition_note(spec, d); !note.empty()) table.notes.push_back(note);
    return table;
}

std::vector<VerifierTable> verify_p_concentration(const DistributionSpec& spec, const Vector& w, const Matrix& m,
                                                  const VerifierOptions& options) {
    const Index d = m.rows();
    if (m.cols() != d || w.size() != d) throw DimensionError("verify_p_concentration: shapes are inconsistent");
    check_verifier_inputs(spec, d, options);
    const CoordinateMoments cm = analytic_moments(spec);

    const double t0 = m.trace();
    const Vector t1 = cm.kappa * m.diagonal() + w;
    const Vector t2 = (cm.phi - 1.0) * m.diagonal() + cm.kappa * w;
    const Vector t3 = cm.kappa * w;  // diagonal of the adjoint target

    auto tables = run_trials(options, 4, [&](Index n, Rng& rng) {
        const Matrix x = sample_batch(spec, d, n, rng);
        const Vector linear = x.transpose() * w;
        const Vector z = linear + quadratic_forms(x, m);
        const PStats p = p_stats(x, z);
        Matrix adj = weighted_outer(x, linear);
        adj.diagonal() -= t3;
        return std::vector<double>{std::abs(p.p0 - t0), (p.p1 - t1).norm(), (p.p2 - t2).norm(),
                                   spectral_norm_symmetric(adj)};
    });
    const char* names[] = {"p0", "p1", "p2", "adjoint_linear"};
    for (std::size_t i = 0; i < tables.size(); ++i) tables[i].statistic = names[i];
    if (auto note = precondition_note(spec, d); !note.empty())
        for (auto& t : tables) t.notes.push_back(note);
    return tables;
}

}  // namespace slm
