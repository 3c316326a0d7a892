#include "slm/distributions.hpp"

#include "slm/linalg.hpp"
#include "slm/sensing.hpp"

#include <cmath>
#include <numbers>

namespace slm {

std::string_view to_string(Family family) {
    switch (family) {
        case Family::gaussian: return "gaussian";
        case Family::truncated_gaussian: return "truncated_gaussian";
        case Family::bernoulli: return "bernoulli";
        case Family::rademacher: return "rademacher";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    if (name == "gaussian") return Family::gaussian;
    if (name == "truncated_gaussian") return Family::truncated_gaussian;
    if (name == "bernoulli") return Family::bernoulli;
    if (name == "rademacher") return Family::rademacher;
    throw ConfigError("unsupported distribution family '" + std::string(name) + "'", "family");
}

void DistributionSpec::validate() const {
    switch (family) {
        case Family::gaussian:
        case Family::rademacher:
            return;
        case Family::truncated_gaussian:
            if (!std::isfinite(truncation)) throw ConfigError("truncation level must be finite", "a");
            return;
        case Family::bernoulli:
            if (!(success_prob > 0.0 && success_prob < 1.0))
                throw ConfigError("success probability must lie strictly inside (0, 1)", "q");
            return;
    }
    throw ConfigError("unsupported distribution family", "family");
}

std::array<double, 5> truncated_gaussian_raw_moments(double a) {
    const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);

    // Partial moments I_m = int_{-inf}^{a} t^m phi(t) dt, by I_m = -a^{m-1} phi(a) + (m-1) I_{m-2}.
    std::array<double, 5> partial{};
    partial[0] = cdf;
    partial[1] = -pdf;
    for (int m = 2; m <= 4; ++m) partial[m] = -std::pow(a, m - 1) * pdf + (m - 1) * partial[m - 2];

    // Mass 1 - cdf sits at the truncation point.
    std::array<double, 5> raw{};
    for (int m = 0; m <= 4; ++m) raw[m] = std::pow(a, m) * (1.0 - cdf) + partial[m];
    return raw;
}

Standardization raw_standardization(const DistributionSpec& spec) {
    spec.validate();
    switch (spec.family) {
        case Family::gaussian:
        case Family::rademacher:
            return {0.0, 1.0};
        case Family::bernoulli: {
            const double q = spec.success_prob;
            return {q, std::sqrt(q * (1.0 - q))};
        }
        case Family::truncated_gaussian: {
            const auto raw = truncated_gaussian_raw_moments(spec.truncation);
            return {raw[1], std::sqrt(raw[2] - raw[1] * raw[1])};
        }
    }
    throw ConfigError("unsupported distribution family", "family");
}

CoordinateMoments analytic_moments(const DistributionSpec& spec) {
    spec.validate();
    CoordinateMoments m;
    switch (spec.family) {
        case Family::gaussian:
            m.kappa = 0.0;
            m.phi = 3.0;
            break;
        case Family::rademacher:
            m.kappa = 0.0;
            m.phi = 1.0;
            break;
        case Family::bernoulli: {
            const double q = spec.success_prob;
            if (spec.standardize) {
                const double var = q * (1.0 - q);
                m.kappa = (1.0 - 2.0 * q) / std::sqrt(var);
                m.phi = (1.0 - 3.0 * q + 3.0 * q * q) / var;
            } else {
                m.kappa = q;
                m.phi = q;
            }
            break;
        }
        case Family::truncated_gaussian: {
            const auto raw = truncated_gaussian_raw_moments(spec.truncation);
            if (spec.standardize) {
                const double mu = raw[1];
                const double c2 = raw[2] - mu * mu;
                const double c3 = raw[3] - 3.0 * mu * raw[2] + 2.0 * mu * mu * mu;
                const double c4 = raw[4] - 4.0 * mu * raw[3] + 6.0 * mu * mu * raw[2] - 3.0 * mu * mu * mu * mu;
                m.kappa = c3 / std::pow(c2, 1.5);
                m.phi = c4 / (c2 * c2);
            } else {
                m.kappa = raw[3];
                m.phi = raw[4];
            }
            break;
        }
    }
    m.tau = std::abs(m.phi - 1.0 - m.kappa * m.kappa);
    return m;
}

FeatureSampler::FeatureSampler(const DistributionSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.standardize) shift_ = raw_standardization(spec_);
}

double FeatureSampler::operator()(Rng& rng) const {
    double raw = 0.0;
    switch (spec_.family) {
        case Family::gaussian:
            return std::normal_distribution<double>{}(rng);
        case Family::rademacher:
            return std::bernoulli_distribution{0.5}(rng) ? 1.0 : -1.0;
        case Family::truncated_gaussian:
            raw = std::min(std::normal_distribution<double>{}(rng), spec_.truncation);
            break;
        case Family::bernoulli:
            raw = std::bernoulli_distribution{spec_.success_prob}(rng) ? 1.0 : 0.0;
            break;
    }
    return spec_.standardize ? (raw - shift_.mean) / shift_.sd : raw;
}

Matrix sample_batch(const DistributionSpec& spec, Index d, Index n, Rng& rng) {
    if (d < 1 || n < 1) throw DimensionError("sample_batch: need d >= 1 and n >= 1");
    const FeatureSampler draw(spec);
    Matrix x(d, n);
    double* data = x.data();
    for (Index i = 0, size = d * n; i < size; ++i) data[i] = draw(rng);
    return x;
}

Vector GroundTruth::factor_diagonal() const { return factor.rowwise().squaredNorm(); }

Matrix GroundTruth::dense_matrix() const {
    Matrix m = factor * factor.transpose();
    if (diag_free) m.diagonal().setZero();
    return m;
}

GroundTruth make_ground_truth(Index d, Index k, bool diag_free, Rng& rng, double noise_level) {
    if (k < 1 || k > d) throw DimensionError("make_ground_truth: need 1 <= k <= d");
    if (!(noise_level >= 0.0)) throw ConfigError("noise level must be nonnegative", "noise_level");

    std::normal_distribution<double> normal;
    Matrix g(d, k);
    for (Index c = 0; c < k; ++c)
        for (Index r = 0; r < d; ++r) g(r, c) = normal(rng);

    GroundTruth gt;
    gt.factor = thin_qr(g).q;
    gt.w_star.resize(d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (Index r = 0; r < d; ++r) gt.w_star(r) = scale * normal(rng);
    gt.diag_free = diag_free;
    gt.noise_level = noise_level;
    return gt;
}

Vector label_batch(const GroundTruth& gt, const Matrix& x, Rng& rng) {
    if (x.rows() != gt.dim()) throw DimensionError("label_batch: feature dimension does not match ground truth");
    Vector y = apply_sensing(x, gt.w_star, gt.factor, gt.factor, gt.diag_free);
    if (gt.noise_level > 0.0) {
        std::normal_distribution<double> normal;
        for (Index i = 0; i < y.size(); ++i) y(i) += gt.noise_level * normal(rng);
    }
    return y;
}

}  // namespace slm
