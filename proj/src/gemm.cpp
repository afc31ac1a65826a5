#include "micc/gemm.hpp"

#include <algorithm>
#include <vector>

namespace micc {

namespace {

constexpr size_t kNB = 128;  // C/B column strip, keeps 4 C rows in L1
constexpr size_t kKB = 320;  // K panel, keeps the B block L2-resident

// C (m x n) += alpha * A (m x k) * B (k x n); C must already be beta-scaled.
void gemm_nn_accum(size_t m, size_t n, size_t k, double alpha, const double* a, size_t lda, const double* b, size_t ldb,
                   double* c, size_t ldc) {
    for (size_t jc = 0; jc < n; jc += kNB) {
        const size_t nb = std::min(kNB, n - jc);
        for (size_t pc = 0; pc < k; pc += kKB) {
            const size_t kb = std::min(kKB, k - pc);
            size_t i = 0;
            for (; i + 4 <= m; i += 4) {
                double* c0 = c + (i + 0) * ldc + jc;
                double* c1 = c + (i + 1) * ldc + jc;
                double* c2 = c + (i + 2) * ldc + jc;
                double* c3 = c + (i + 3) * ldc + jc;
                for (size_t p = 0; p < kb; ++p) {
                    const double* brow = b + (pc + p) * ldb + jc;
                    const double a0 = alpha * a[(i + 0) * lda + pc + p];
                    const double a1 = alpha * a[(i + 1) * lda + pc + p];
                    const double a2 = alpha * a[(i + 2) * lda + pc + p];
                    const double a3 = alpha * a[(i + 3) * lda + pc + p];
                    for (size_t j = 0; j < nb; ++j) {
                        c0[j] += a0 * brow[j];
                        c1[j] += a1 * brow[j];
                        c2[j] += a2 * brow[j];
                        c3[j] += a3 * brow[j];
                    }
                }
            }
            for (; i < m; ++i) {
                double* cr = c + i * ldc + jc;
                for (size_t p = 0; p < kb; ++p) {
                    const double* brow = b + (pc + p) * ldb + jc;
                    const double a0 = alpha * a[i * lda + pc + p];
                    for (size_t j = 0; j < nb; ++j) cr[j] += a0 * brow[j];
                }
            }
        }
    }
}

// Scratch for materialized transposes; reused across calls.
thread_local std::vector<double> scratch_a, scratch_b;

const double* materialize_t(const double* x, size_t rows, size_t cols, size_t ldx, std::vector<double>& scratch) {
    scratch.resize(rows * cols);
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) scratch[i * cols + j] = x[j * ldx + i];
    return scratch.data();
}

}  // namespace

void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, double alpha, const double* a, size_t lda, const double* b,
          size_t ldb, double beta, double* c, size_t ldc) {
    if (beta == 0.0) {
        for (size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    } else if (beta != 1.0) {
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) c[i * ldc + j] *= beta;
    }
    // stored A is (k x m) when transposed, (m x k) otherwise; same for B
    const double* an = trans_a ? materialize_t(a, m, k, lda, scratch_a) : a;
    const size_t lda_n = trans_a ? k : lda;
    const double* bn = trans_b ? materialize_t(b, k, n, ldb, scratch_b) : b;
    const size_t ldb_n = trans_b ? n : ldb;
    gemm_nn_accum(m, n, k, alpha, an, lda_n, bn, ldb_n, c, ldc);
}

}  // namespace micc
