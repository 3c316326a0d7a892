#include "slm/moments.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace slm {

namespace {

std::string singular_message(Index j, double kappa, double phi, double gap) {
    std::ostringstream os;
    os << "moment system singular at coordinate " << j << " (kappa=" << kappa << ", phi=" << phi
       << ", gap=" << gap << "); the feature distribution is not moment invertible, use the non_mip mode";
    return os.str();
}

}  // namespace

MomentSystemSingular::MomentSystemSingular(Index coordinate, double kappa, double phi, double gap)
    : Error(singular_message(coordinate, kappa, phi, gap)),
      coordinate_(coordinate),
      kappa_(kappa),
      phi_(phi),
      gap_(gap) {}

std::string_view to_string(MomentSource source) {
    return source == MomentSource::analytic ? "analytic" : "estimated";
}

MomentSource parse_moment_source(std::string_view name) {
    if (name == "analytic") return MomentSource::analytic;
    if (name == "estimated") return MomentSource::estimated;
    throw ConfigError("moment source must be 'analytic' or 'estimated'", "moment_source");
}

MomentEstimates estimate_moments(const Matrix& x) {
    if (x.cols() < 1) throw DimensionError("estimate_moments: empty batch");
    const double n = static_cast<double>(x.cols());
    MomentEstimates m{Vector::Zero(x.rows()), Vector::Zero(x.rows())};
    for (Index i = 0; i < x.cols(); ++i) {
        const auto col = x.col(i).array();
        const auto sq = col.square();
        m.kappa.array() += sq * col;
        m.phi.array() += sq.square();
    }
    m.kappa /= n;
    m.phi /= n;
    return m;
}

double standardized_pearson_gap(const Matrix& x, Index* coordinate) {
    if (x.cols() < 1) throw DimensionError("standardized_pearson_gap: empty batch");
    const double n = static_cast<double>(x.cols());
    double best = std::numeric_limits<double>::infinity();
    Index arg = 0;
    for (Index j = 0; j < x.rows(); ++j) {
        const auto row = x.row(j).array();
        const double mean = row.mean();
        const auto centered = row - mean;
        const double m2 = centered.square().sum() / n;
        double gap = 0.0;
        if (m2 > 0.0) {
            const double m3 = (centered.square() * centered).sum() / n;
            const double m4 = centered.square().square().sum() / n;
            const double skew = m3 / std::pow(m2, 1.5);
            gap = m4 / (m2 * m2) - 1.0 - skew * skew;
        }
        if (gap < best) {
            best = gap;
            arg = j;
        }
    }
    if (coordinate) *coordinate = arg;
    return best;
}

CorrectionTables solve_moment_systems(const Vector& kappa, const Vector& phi, double tau_tol) {
    if (kappa.size() != phi.size()) throw DimensionError("solve_moment_systems: kappa and phi lengths differ");
    const Index d = kappa.size();
    CorrectionTables t{Matrix(d, 2), Matrix(d, 2)};
    for (Index j = 0; j < d; ++j) {
        const double k = kappa(j);
        const double f = phi(j);
        const double det = f - 1.0 - k * k;
        if (!(std::abs(det) >= tau_tol)) throw MomentSystemSingular(j, k, f, std::abs(det));
        // inverse of [[1, k], [k, f - 1]] is [[f - 1, -k], [-k, 1]] / det
        t.g(j, 0) = ((f - 1.0) * k - k * (f - 3.0)) / det;
        t.g(j, 1) = (-k * k + (f - 3.0)) / det;
        t.h(j, 0) = (f - 1.0) / det;
        t.h(j, 1) = -k / det;
    }
    return t;
}

double mip_constant(const Vector& kappa, const Vector& phi) {
    if (kappa.size() != phi.size()) throw DimensionError("mip_constant: kappa and phi lengths differ");
    if (kappa.size() == 0) return 0.0;
    return (phi.array() - 1.0 - kappa.array().square()).abs().minCoeff();
}

MomentProfile analytic_profile(const DistributionSpec& spec, Index d, bool with_tables, double tau_tol) {
    if (d < 1) throw DimensionError("analytic_profile: d must be positive");
    const CoordinateMoments m = analytic_moments(spec);
    MomentProfile p;
    p.kappa = Vector::Constant(d, m.kappa);
    p.phi = Vector::Constant(d, m.phi);
    p.tau_hat = m.tau;
    p.source = MomentSource::analytic;
    if (with_tables) {
        auto tables = solve_moment_systems(p.kappa, p.phi, tau_tol);
        p.g = std::move(tables.g);
        p.h = std::move(tables.h);
    }
    return p;
}

MomentProfile estimated_profile(const Matrix& x, bool with_tables, double tau_tol) {
    auto est = estimate_moments(x);
    MomentProfile p;
    p.tau_hat = mip_constant(est.kappa, est.phi);
    p.kappa = std::move(est.kappa);
    p.phi = std::move(est.phi);
    p.source = MomentSource::estimated;
    p.n_used = x.cols();
    if (with_tables) {
        Index j = 0;
        const double gap = standardized_pearson_gap(x, &j);
        if (!(gap >= tau_tol)) throw MomentSystemSingular(j, p.kappa(j), p.phi(j), gap);
        auto tables = solve_moment_systems(p.kappa, p.phi, tau_tol);
        p.g = std::move(tables.g);
        p.h = std::move(tables.h);
    }
    return p;
}

}  // namespace slm
