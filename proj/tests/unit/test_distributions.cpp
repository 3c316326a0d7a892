#include "oracles/dense_oracle.hpp"
#include "slm/distributions.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

namespace {

using slm::DistributionSpec;
using slm::Matrix;
using slm::Vector;

struct SampleMoments {
    double mean, var, m3, m4;
    double se_mean, se_var, se_m3, se_m4;
};

// Sample raw moments of all entries, with standard errors from the sample
// itself (sd of x^m over sqrt N).
SampleMoments sample_moments(const Matrix& x) {
    const auto a = x.reshaped().array();
    const double n = static_cast<double>(a.size());
    const auto se = [&](const Eigen::ArrayXd& v) {
        const double m = v.mean();
        return std::sqrt(((v - m).square().sum() / (n - 1.0)) / n);
    };
    const Eigen::ArrayXd x1 = a, x2 = a.square(), x3 = x2 * a, x4 = x2.square();
    return {x1.mean(), x2.mean() - x1.mean() * x1.mean(), x3.mean(), x4.mean(), se(x1), se(x2), se(x3), se(x4)};
}

TEST(AnalyticMoments, Gaussian) {
    const auto m = slm::analytic_moments(DistributionSpec::gaussian());
    EXPECT_EQ(m.kappa, 0.0);
    EXPECT_EQ(m.phi, 3.0);
    EXPECT_EQ(m.tau, 2.0);
}

TEST(AnalyticMoments, Rademacher) {
    const auto m = slm::analytic_moments(DistributionSpec::rademacher());
    EXPECT_EQ(m.kappa, 0.0);
    EXPECT_EQ(m.phi, 1.0);
    EXPECT_EQ(m.tau, 0.0);
}

TEST(AnalyticMoments, StandardizedBernoulliTenPercent) {
    const auto m = slm::analytic_moments(DistributionSpec::bernoulli(0.1));
    EXPECT_NEAR(m.kappa, 8.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.phi, 73.0 / 9.0, 1e-12);
    EXPECT_NEAR(m.tau, 0.0, 1e-12);
}

TEST(AnalyticMoments, BernoulliGapVanishesIdenticallyInExactArithmetic) {
    for (std::int64_t b = 2; b <= 300; ++b)
        for (std::int64_t a = 1; a < b; ++a) ASSERT_EQ(oracle::bernoulli_gap_numerator(a, b), 0) << a << "/" << b;
    for (double q : {0.01, 0.1, 0.25, 0.5, 0.9}) {
        const auto m = slm::analytic_moments(DistributionSpec::bernoulli(q));
        EXPECT_LT(m.tau, 1e-10 * m.phi) << "q=" << q;
    }
}

TEST(AnalyticMoments, TauIsTheGapOfTheReturnedPair) {
    for (const auto& spec : {DistributionSpec::gaussian(), DistributionSpec::rademacher(), DistributionSpec::truncated(0.0),
                             DistributionSpec::truncated(0.1), DistributionSpec::bernoulli(0.3)}) {
        const auto m = slm::analytic_moments(spec);
        EXPECT_EQ(m.tau, std::abs(m.phi - 1.0 - m.kappa * m.kappa));
    }
}

TEST(TruncatedGaussian, RawMomentsMatchQuadrature) {
    for (double a : {0.0, 1e-3, 0.01, 0.1, -1.0, 1.5}) {
        const auto raw = slm::truncated_gaussian_raw_moments(a);
        for (int m = 0; m <= 4; ++m) EXPECT_NEAR(raw[m], oracle::truncated_moment(a, m), 1e-9) << "a=" << a << " m=" << m;
    }
}

TEST(TruncatedGaussian, ZeroLevelStandardization) {
    const auto s = slm::raw_standardization(DistributionSpec::truncated(0.0));
    EXPECT_NEAR(s.mean, -1.0 / std::sqrt(2.0 * M_PI), 1e-12);  // -0.39894
    EXPECT_NEAR(s.sd * s.sd, 0.5 - 1.0 / (2.0 * M_PI), 1e-12);  // 0.3408
    EXPECT_NEAR(s.mean, -0.3989, 1e-4);
    EXPECT_NEAR(s.sd * s.sd, 0.3408, 1e-4);
}

TEST(TruncatedGaussian, ZeroLevelRawMomentsMatchMonteCarlo) {
    slm::Rng rng(2024);
    const Matrix x = slm::sample_batch(DistributionSpec::truncated(0.0, false), 1, 10'000'000, rng);
    const auto s = sample_moments(x);
    const auto st = slm::raw_standardization(DistributionSpec::truncated(0.0));
    EXPECT_NEAR(s.mean, st.mean, 5 * s.se_mean);
    EXPECT_NEAR(s.var, st.sd * st.sd, 5 * s.se_var);
}

TEST(SampleBatch, RademacherSupport) {
    slm::Rng rng(7);
    const Matrix x = slm::sample_batch(DistributionSpec::rademacher(), 3, 4, rng);
    for (double v : x.reshaped()) EXPECT_TRUE(v == 1.0 || v == -1.0);
}

TEST(SampleBatch, Deterministic) {
    for (const auto& spec : {DistributionSpec::gaussian(), DistributionSpec::bernoulli(0.2), DistributionSpec::truncated(0.0)}) {
        slm::Rng a(99), b(99);
        const Matrix x = slm::sample_batch(spec, 7, 50, a);
        const Matrix y = slm::sample_batch(spec, 7, 50, b);
        EXPECT_EQ(0, std::memcmp(x.data(), y.data(), sizeof(double) * 350));
    }
}

TEST(SampleBatch, GaussianCoordinateMeansAndVariances) {
    slm::Rng rng(5);
    const Matrix x = slm::sample_batch(DistributionSpec::gaussian(), 100, 100'000, rng);
    const Vector mean = x.rowwise().mean();
    const Vector var = (x.colwise() - mean).rowwise().squaredNorm() / 100'000.0;
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.02);
    EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 0.02);
}

TEST(SampleBatch, StandardizedFamiliesHaveUnitMoments) {
    const double n = 1e5;
    for (const auto& spec : {DistributionSpec::gaussian(), DistributionSpec::rademacher(), DistributionSpec::truncated(0.0),
                             DistributionSpec::truncated(0.1), DistributionSpec::bernoulli(0.1),
                             DistributionSpec::bernoulli(0.5)}) {
        slm::Rng rng(17);
        const auto s = sample_moments(slm::sample_batch(spec, 1, static_cast<slm::Index>(n), rng));
        EXPECT_LE(std::abs(s.mean), 4 / std::sqrt(n)) << slm::to_string(spec.family);
        EXPECT_LE(std::abs(s.var - 1.0), 8 / std::sqrt(n)) << slm::to_string(spec.family);
    }
}

TEST(SampleBatch, EmpiricalMomentsMatchAnalyticWithinFiveStandardErrors) {
    for (const auto& spec : {DistributionSpec::gaussian(), DistributionSpec::rademacher(), DistributionSpec::truncated(0.0),
                             DistributionSpec::truncated(0.01), DistributionSpec::bernoulli(0.01),
                             DistributionSpec::bernoulli(0.1)}) {
        slm::Rng rng(23);
        const auto s = sample_moments(slm::sample_batch(spec, 1, 100'000, rng));
        const auto m = slm::analytic_moments(spec);
        const std::string name(slm::to_string(spec.family));
        EXPECT_NEAR(s.mean, 0.0, 5 * s.se_mean) << name;
        EXPECT_NEAR(s.var + s.mean * s.mean, 1.0, 5 * s.se_var + 1e-12) << name;
        EXPECT_NEAR(s.m3, m.kappa, 5 * s.se_m3 + 1e-12) << name;
        EXPECT_NEAR(s.m4, m.phi, 5 * s.se_m4 + 1e-12) << name;
    }
}

TEST(DistributionSpec, RejectsInvalidParameters) {
    EXPECT_THROW(DistributionSpec::bernoulli(0.0).validate(), slm::ConfigError);
    EXPECT_THROW(DistributionSpec::bernoulli(1.0).validate(), slm::ConfigError);
    EXPECT_THROW(DistributionSpec::truncated(std::nan("")).validate(), slm::ConfigError);
    try {
        DistributionSpec::bernoulli(1.5).validate();
        FAIL();
    } catch (const slm::ConfigError& e) {
        EXPECT_EQ(e.field(), "q");
    }
    EXPECT_THROW(slm::parse_family("cauchy"), slm::ConfigError);
}

TEST(GroundTruth, OrthonormalFactor) {
    slm::Rng rng(1);
    const auto gt = slm::make_ground_truth(5, 2, false, rng);
    EXPECT_LT((gt.factor.transpose() * gt.factor - Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(GroundTruth, UnitSpectrum) {
    slm::Rng rng(2);
    const auto gt = slm::make_ground_truth(1000, 10, false, rng);
    const Eigen::JacobiSVD<Matrix> svd(gt.factor);
    // singular values of B B^T are squares of those of B
    EXPECT_NEAR(svd.singularValues()(0) * svd.singularValues()(0), 1.0, 1e-12);
    EXPECT_NEAR(svd.singularValues()(9) * svd.singularValues()(9), 1.0, 1e-12);
}

TEST(GroundTruth, DiagonalFreeHasZeroDiagonal) {
    slm::Rng rng(3);
    const auto gt = slm::make_ground_truth(5, 2, true, rng);
    const Matrix m = gt.dense_matrix();
    for (int j = 0; j < 5; ++j) EXPECT_EQ(m(j, j), 0.0);
    EXPECT_LT((m - m.transpose()).norm(), 1e-15);
}

TEST(GroundTruth, PsdWhenNotDiagonalFree) {
    slm::Rng rng(4);
    const auto gt = slm::make_ground_truth(8, 3, false, rng);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(gt.dense_matrix());
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(GroundTruth, RejectsRankAboveDimension) {
    slm::Rng rng(5);
    EXPECT_THROW(slm::make_ground_truth(3, 4, false, rng), slm::DimensionError);
}

TEST(GroundTruth, FirstOrderVarianceIsOneOverD) {
    slm::Rng rng(6);
    double sum = 0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) sum += slm::make_ground_truth(1000, 1, false, rng).w_star.squaredNorm();
    // E |w*|^2 = 1 with sd sqrt(2/d) per draw
    EXPECT_NEAR(sum / reps, 1.0, 5 * std::sqrt(2.0 / 1000.0 / reps));
}

slm::GroundTruth fixed_truth(Vector w, Matrix b, bool diag_free) {
    slm::GroundTruth gt;
    gt.w_star = std::move(w);
    gt.factor = std::move(b);
    gt.diag_free = diag_free;
    return gt;
}

TEST(LabelBatch, HandExamples) {
    slm::Rng rng(0);
    Matrix x(2, 1);
    x << 1, 2;
    const Matrix e1 = Vector::Unit(2, 0);
    EXPECT_DOUBLE_EQ(slm::label_batch(fixed_truth(Vector::Zero(2), e1, false), x, rng)(0), 1.0);
    EXPECT_DOUBLE_EQ(slm::label_batch(fixed_truth(Vector::Unit(2, 0), e1, false), x, rng)(0), 2.0);
    EXPECT_DOUBLE_EQ(slm::label_batch(fixed_truth(Vector::Zero(2), e1, true), x, rng)(0), 0.0);
}

TEST(LabelBatch, FactorFormMatchesDenseOracle) {
    for (bool diag_free : {false, true}) {
        slm::Rng rng(8);
        const auto gt = slm::make_ground_truth(20, 3, diag_free, rng);
        const Matrix x = slm::sample_batch(DistributionSpec::truncated(0.0), 20, 40, rng);
        const Vector y = slm::label_batch(gt, x, rng);
        const Vector ref = oracle::sense(x, gt.w_star, gt.dense_matrix());
        EXPECT_LT((y - ref).norm(), 1e-10 * ref.norm());
    }
}

TEST(LabelBatch, NoiseHasRequestedLevel) {
    slm::Rng rng(9);
    auto gt = slm::make_ground_truth(10, 2, false, rng, 1.0);
    const Matrix x = slm::sample_batch(DistributionSpec::gaussian(), 10, 50'000, rng);
    const Vector noisy = slm::label_batch(gt, x, rng);
    const Vector clean = oracle::sense(x, gt.w_star, gt.dense_matrix());
    const double var = (noisy - clean).squaredNorm() / 50'000.0;
    EXPECT_NEAR(var, 1.0, 5 * std::sqrt(2.0 / 50'000.0));
}

}  // namespace
