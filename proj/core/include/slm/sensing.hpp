#pragma once

#include "slm/types.hpp"

namespace slm {

/// A block of instances (columns of x) with their labels.
struct MiniBatch {
    Matrix x;  // d x n
    Vector y;  // n

    Index dim() const noexcept { return x.rows(); }
    Index size() const noexcept { return x.cols(); }
    void validate() const;
};

/// Moment statistics of a residual vector z over a batch:
///   p0 = 1^T z / n,  p1 = X z / n,  p2 = (X o X) z / n - p0.
struct PStats {
    double p0 = 0.0;
    Vector p1;
    Vector p2;
};

/// Columns are processed in blocks of this many instances; scratch memory is
/// O(block * k) on top of the outputs.
inline constexpr Index kSensingBlock = 256;

/// X^T w + A(M) for M = left * right^T (with its diagonal removed when
/// diag_free), never forming M. Cost O(n d k).
Vector apply_sensing(const Matrix& x, const Vector& w, const Matrix& left, const Matrix& right,
                     bool diag_free);

PStats p_stats(const Matrix& x, const Vector& z);

/// H(z) U with H(z) = (1/2n) sum_i z_i x_i x_i^T, the adjoint of the
/// sensing operator applied to z and halved. Cost O(n d k), memory O(d k).
Matrix h_times_factor(const Matrix& x, const Vector& z, const Matrix& u);

/// diag(H(z)) = (1/2n) sum_i z_i (x_i o x_i).
Vector h_diag(const Matrix& x, const Vector& z);

}  // namespace slm
