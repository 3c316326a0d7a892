#include "slm/sensing.hpp"

#include <algorithm>

namespace slm {

namespace {

template <typename Fn>
void for_each_block(Index n, Fn&& fn) {
    for (Index start = 0; start < n; start += kSensingBlock) fn(start, std::min(kSensingBlock, n - start));
}

void check_residual(const Matrix& x, const Vector& z, const char* where) {
    if (z.size() != x.cols()) throw DimensionError(std::string(where) + ": residual length does not match batch size");
    if (x.cols() < 1) throw DimensionError(std::string(where) + ": empty batch");
}

}  // namespace

void MiniBatch::validate() const {
    if (x.cols() < 1) throw DimensionError("MiniBatch: needs at least one instance");
    if (x.cols() != y.size()) throw DimensionError("MiniBatch: label count does not match instance count");
}

Vector apply_sensing(const Matrix& x, const Vector& w, const Matrix& left, const Matrix& right,
                     bool diag_free) {
    const Index d = x.rows();
    if (w.size() != d || left.rows() != d || right.rows() != d || left.cols() != right.cols())
        throw DimensionError("apply_sensing: shapes are inconsistent");

    Vector out = x.transpose() * w;
    Vector diagonal;
    if (diag_free) diagonal = left.cwiseProduct(right).rowwise().sum();

    Matrix proj_left, proj_right;
    for_each_block(x.cols(), [&](Index start, Index len) {
        const auto block = x.middleCols(start, len);
        proj_left.noalias() = block.transpose() * left;
        proj_right.noalias() = block.transpose() * right;
        out.segment(start, len) += proj_left.cwiseProduct(proj_right).rowwise().sum();
        if (diag_free)
            for (Index i = 0; i < len; ++i) out(start + i) -= block.col(i).cwiseAbs2().dot(diagonal);
    });
    return out;
}

PStats p_stats(const Matrix& x, const Vector& z) {
    check_residual(x, z, "p_stats");
    const double n = static_cast<double>(x.cols());

    PStats s;
    s.p0 = z.sum() / n;
    s.p1 = x * z / n;
    // column by column: a product with cwiseAbs2() would materialize a d x block temporary
    s.p2 = Vector::Zero(x.rows());
    for (Index i = 0; i < x.cols(); ++i) s.p2 += z(i) * x.col(i).cwiseAbs2();
    s.p2 = (s.p2 / n).array() - s.p0;
    return s;
}

Matrix h_times_factor(const Matrix& x, const Vector& z, const Matrix& u) {
    check_residual(x, z, "h_times_factor");
    if (u.rows() != x.rows()) throw DimensionError("h_times_factor: factor row count does not match dimension");

    Matrix out = Matrix::Zero(x.rows(), u.cols());
    Matrix proj;
    for_each_block(x.cols(), [&](Index start, Index len) {
        const auto block = x.middleCols(start, len);
        proj.noalias() = block.transpose() * u;
        proj = z.segment(start, len).asDiagonal() * proj;
        out.noalias() += block * proj;
    });
    out /= 2.0 * static_cast<double>(x.cols());
    return out;
}

Vector h_diag(const Matrix& x, const Vector& z) {
    check_residual(x, z, "h_diag");
    Vector out = Vector::Zero(x.rows());
    for (Index i = 0; i < x.cols(); ++i) out += z(i) * x.col(i).cwiseAbs2();
    out /= 2.0 * static_cast<double>(x.cols());
    return out;
}

}  // namespace slm
