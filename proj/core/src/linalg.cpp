#include "slm/linalg.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <vector>

namespace slm {

ThinQr thin_qr(const Matrix& a) {
    const Index d = a.rows();
    const Index k = a.cols();
    require(k <= d, "thin_qr: more columns than rows");

    Eigen::HouseholderQR<Matrix> qr(a);
    ThinQr out;
    out.q = qr.householderQ() * Matrix::Identity(d, k);
    out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();

    double largest = 0.0;
    for (Index c = 0; c < k; ++c) {
        if (out.r(c, c) < 0.0) {
            out.q.col(c) *= -1.0;
            out.r.row(c) *= -1.0;
        }
        largest = std::max(largest, out.r(c, c));
    }
    for (Index c = 0; c < k; ++c) {
        if (out.r(c, c) <= 1e-12 * largest || largest == 0.0) out.rank_deficient = true;
    }
    return out;
}

Matrix dominant_subspace(const SymmetricAction& apply, Index d, Index k, Rng& rng,
                         const SubspaceOptions& options) {
    if (k < 1 || k > d) throw DimensionError("dominant_subspace: need 1 <= k <= d");
    const Index block = std::min(d, k + std::max<Index>(options.oversample, 0));

    std::normal_distribution<double> normal;
    Matrix q(d, block);
    for (Index c = 0; c < block; ++c)
        for (Index r = 0; r < d; ++r) q(r, c) = normal(rng);
    q = thin_qr(q).q;

    for (int sweep = 0; sweep < options.sweeps; ++sweep) q = thin_qr(apply(q)).q;

    // Rayleigh-Ritz on the captured subspace.
    Matrix projected = q.transpose() * apply(q);
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(projected);
    std::vector<Index> order(static_cast<std::size_t>(block));
    std::iota(order.begin(), order.end(), Index{0});
    const Vector& values = eig.eigenvalues();
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(values(a)) > std::abs(values(b)); });

    Matrix ritz(block, k);
    for (Index c = 0; c < k; ++c) ritz.col(c) = eig.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    return thin_qr(q * ritz).q;
}

namespace {

double largest_singular_value(const Matrix& tall) {
    if (tall.cols() == 0) return 0.0;
    if (tall.rows() <= tall.cols()) {
        Eigen::JacobiSVD<Matrix> svd(tall);
        return svd.singularValues()(0);
    }
    Eigen::HouseholderQR<Matrix> qr(tall);
    Matrix r = qr.matrixQR().topRows(tall.cols()).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(r);
    return svd.singularValues()(0);
}

}  // namespace

double spectral_norm_factored(const Matrix& left, const Matrix& right, const Vector& diag, double tol) {
    require(left.rows() == right.rows() && left.cols() == right.cols(), "spectral_norm_factored: factor shapes");
    const Index d = left.rows();
    const Index r = left.cols();
    const bool has_diag = diag.size() > 0 && diag.cwiseAbs().maxCoeff() > 0.0;
    if (has_diag) require(diag.size() == d, "spectral_norm_factored: diagonal length");

    if (d <= 2 * r + 2) {
        Matrix dense = left * right.transpose();
        if (has_diag) dense.diagonal() += diag;
        Eigen::JacobiSVD<Matrix> svd(dense);
        return svd.singularValues()(0);
    }

    if (!has_diag) {
        // ||L R^T|| = ||R_L R_R^T|| for L = Q_L R_L, R = Q_R R_R.
        Eigen::HouseholderQR<Matrix> ql(left);
        Eigen::HouseholderQR<Matrix> qr(right);
        Matrix rl = ql.matrixQR().topRows(r).triangularView<Eigen::Upper>();
        Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
        Eigen::JacobiSVD<Matrix> svd(rl * rr.transpose());
        return svd.singularValues()(0);
    }

    auto apply = [&](const Matrix& x) -> Matrix {
        Matrix y = left * (right.transpose() * x);
        y += diag.asDiagonal() * x;
        return y;
    };
    auto apply_t = [&](const Matrix& x) -> Matrix {
        Matrix y = right * (left.transpose() * x);
        y += diag.asDiagonal() * x;
        return y;
    };

    // Start from the row space of L R^T plus a few fixed probe directions.
    Rng rng(0x5eed);
    std::normal_distribution<double> normal;
    Matrix start(d, r + 2);
    start.leftCols(r) = right;
    for (Index c = r; c < r + 2; ++c)
        for (Index i = 0; i < d; ++i) start(i, c) = normal(rng);
    Matrix x = thin_qr(start).q;

    double previous = -1.0;
    double sigma = 0.0;
    for (int it = 0; it < 2000; ++it) {
        Matrix ax = apply(x);
        sigma = largest_singular_value(ax);
        if (previous >= 0.0 && std::abs(sigma - previous) <= tol * std::max(sigma, 1e-300)) break;
        previous = sigma;
        x = thin_qr(apply_t(ax)).q;
    }
    return sigma;
}

void parallel_for(Index count, int threads, const std::function<void(Index)>& fn) {
    if (count <= 0) return;
    const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), count));
    if (workers <= 1) {
        for (Index i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<Index> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (Index i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace slm
