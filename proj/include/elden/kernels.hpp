#pragma once

#include <cstddef>

namespace elden::kern {

// Runtime switch between the serial reference kernels and the OpenMP ones.
// Both produce bit-identical results: parallelism is only over output rows
// (or blocks), never over the reduction axis.
enum class Mode { Serial, Parallel };

void set_mode(Mode m);
Mode mode();

// Work sizes (multiply-adds) below this always run serial; the OpenMP
// fork/join overhead dwarfs the loop at small sizes.
inline constexpr std::size_t kParallelCutoff = 1024 * 1024;

// C(m x n) = A op B with optional logical transposes. lda/ldb/ldc are row
// strides of the stored matrices. beta=0 overwrites C, beta=1 accumulates.
namespace serial {
void dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double* c, std::size_t ldc, double beta);

// S independent small matmuls on contiguous blocks:
//   out_s (pa x pb) = A_s (pa x k) * B_s (pb x k)^T      (nt variant)
//   out_s (pa x k ) = A_s (pa x pb) * B_s (pb x k)       (nn variant)
void block_matmul_nt(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out);
void block_matmul_nn(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out);
}  // namespace serial

namespace par {
void dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double* c, std::size_t ldc, double beta);
void block_matmul_nt(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out);
void block_matmul_nn(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out);
}  // namespace par

// Dispatching entry points used by the tape.
void dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double* c, std::size_t ldc, double beta = 0.0);
void block_matmul_nt(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out);
void block_matmul_nn(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out);

}  // namespace elden::kern
