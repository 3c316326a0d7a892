#pragma once

#include "slm/random.hpp"
#include "slm/types.hpp"

#include <functional>

namespace slm {

struct ThinQr {
    Matrix q;  // d x k, orthonormal columns
    Matrix r;  // k x k, upper triangular with nonnegative diagonal
    bool rank_deficient = false;
};

/// Householder thin QR with R's diagonal forced nonnegative. When the input
/// is rank deficient Q still has orthonormal columns (the Householder basis
/// completes them) and the flag is raised.
ThinQr thin_qr(const Matrix& a);

/// Action of a symmetric d x d operator on a d x m block.
using SymmetricAction = std::function<Matrix(const Matrix&)>;

struct SubspaceOptions {
    int sweeps = 30;
    Index oversample = 5;
};

/// Orthonormal basis of the dominant-k invariant subspace of a symmetric
/// operator, ordered by decreasing |eigenvalue|. Randomized subspace
/// iteration followed by a Rayleigh-Ritz projection; only `apply` touches
/// the operator, so memory stays O(d (k + oversample)).
Matrix dominant_subspace(const SymmetricAction& apply, Index d, Index k, Rng& rng,
                         const SubspaceOptions& options = {});

/// Spectral norm of L R^T + diag(D) without forming the d x d matrix.
/// Exact (via small QR factors) when D is zero, otherwise block power
/// iteration on A^T A until the leading Ritz value settles to `tol`.
double spectral_norm_factored(const Matrix& left, const Matrix& right, const Vector& diag,
                              double tol = 1e-10);

/// Runs fn(i) for i in [0, count) on up to `threads` worker threads. Each
/// index is processed exactly once; callers keep results indexed by i so the
/// outcome does not depend on the thread count.
void parallel_for(Index count, int threads, const std::function<void(Index)>& fn);

}  // namespace slm
