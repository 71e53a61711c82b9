#pragma once

#include "upanets/shape.hpp"

namespace upanets::kernels {

enum class Trans { No, Yes };

/// Row-major C = alpha * op(A) * op(B) + beta * C with op(A): m x k, op(B): k x n.
/// Cache-blocked with packed panels; single-threaded (callers parallelize over batch items).
template <typename T>
void gemm(Trans trans_a, Trans trans_b, Index m, Index n, Index k, T alpha, const T* a, Index lda, const T* b,
          Index ldb, T beta, T* c, Index ldc);

namespace reference {

/// Triple-loop product with the same contract as kernels::gemm.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, Index m, Index n, Index k, T alpha, const T* a, Index lda, const T* b,
          Index ldb, T beta, T* c, Index ldc);

}  // namespace reference

}  // namespace upanets::kernels
