#pragma once

#include <cstddef>

namespace micc {

// Dense row-major matrix multiply: C = alpha * op(A) * op(B) + beta * C with
// op(A) (m x k) and op(B) (k x n). Cache-blocked with a 4-row register tile;
// loop order is fixed, so results are bit-identical across runs. Written
// in-tree after the platform BLAS failed the triple-loop oracle on several
// shapes (see the numerics tests, which pin those shapes).
void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, double alpha, const double* a, size_t lda, const double* b,
          size_t ldb, double beta, double* c, size_t ldc);

}  // namespace micc
