#include "elden/kernels.hpp"

#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace elden::kern {

namespace {
std::atomic<Mode> g_mode{Mode::Parallel};

// Row of the logical matrix: stored row-major, transpose handled by stride.
inline const double* row_ptr(const double* a, std::size_t lda, bool t, std::size_t i) {
  return t ? a + i : a + i * lda;
}
inline std::size_t step(std::size_t lda, bool t) { return t ? lda : 1; }

inline void gemm_row(bool ta, bool tb, std::size_t n, std::size_t k,
                     const double* a, std::size_t lda, const double* b, std::size_t ldb,
                     double* crow, std::size_t i, double beta) {
  if (beta == 0.0) std::memset(crow, 0, n * sizeof(double));
  if (!tb) {
    // c[i,:] += sum_p a[i,p] * b[p,:]  -- unit-stride over columns.
    const std::size_t sa = step(lda, ta);
    const double* arow = row_ptr(a, lda, ta, i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p * sa];
      if (av == 0.0) continue;
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    // b logically (k x n) but stored (n x k): dot products.
    const std::size_t sa = step(lda, ta);
    const double* arow = row_ptr(a, lda, ta, i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p * sa] * brow[p];
      crow[j] += acc;
    }
  }
}

inline void bmm_nt_one(std::size_t pa, std::size_t pb, std::size_t k,
                       const double* as, const double* bs, double* os) {
  for (std::size_t i = 0; i < pa; ++i) {
    const double* ai = as + i * k;
    double* oi = os + i * pb;
    for (std::size_t j = 0; j < pb; ++j) {
      const double* bj = bs + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      oi[j] = acc;
    }
  }
}

inline void bmm_nn_one(std::size_t pa, std::size_t pb, std::size_t k,
                       const double* as, const double* bs, double* os) {
  for (std::size_t i = 0; i < pa; ++i) {
    const double* ai = as + i * pb;
    double* oi = os + i * k;
    std::memset(oi, 0, k * sizeof(double));
    for (std::size_t p = 0; p < pb; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = bs + p * k;
      for (std::size_t j = 0; j < k; ++j) oi[j] += av * bp[j];
    }
  }
}
}  // namespace

void set_mode(Mode m) { g_mode.store(m); }
Mode mode() { return g_mode.load(); }

namespace serial {

void dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double* c, std::size_t ldc, double beta) {
  for (std::size_t i = 0; i < m; ++i)
    gemm_row(ta, tb, n, k, a, lda, b, ldb, c + i * ldc, i, beta);
}

void block_matmul_nt(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out) {
  for (std::size_t s = 0; s < S; ++s)
    bmm_nt_one(pa, pb, k, a + s * pa * k, b + s * pb * k, out + s * pa * pb);
}

void block_matmul_nn(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out) {
  for (std::size_t s = 0; s < S; ++s)
    bmm_nn_one(pa, pb, k, a + s * pa * pb, b + s * pb * k, out + s * pa * k);
}

}  // namespace serial

namespace par {

void dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double* c, std::size_t ldc, double beta) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < (long long)m; ++i)
    gemm_row(ta, tb, n, k, a, lda, b, ldb, c + (std::size_t)i * ldc, (std::size_t)i, beta);
}

void block_matmul_nt(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out) {
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < (long long)S; ++s)
    bmm_nt_one(pa, pb, k, a + (std::size_t)s * pa * k, b + (std::size_t)s * pb * k,
               out + (std::size_t)s * pa * pb);
}

void block_matmul_nn(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out) {
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < (long long)S; ++s)
    bmm_nn_one(pa, pb, k, a + (std::size_t)s * pa * pb, b + (std::size_t)s * pb * k,
               out + (std::size_t)s * pa * k);
}

}  // namespace par

namespace {
inline bool go_parallel(std::size_t work) {
  if (g_mode.load() != Mode::Parallel) return false;
#ifdef _OPENMP
  if (omp_in_parallel()) return false;  // member-level parallelism owns the threads
  return work >= kParallelCutoff;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
           const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double* c, std::size_t ldc, double beta) {
  if (go_parallel(m * n * k))
    par::dgemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, beta);
  else
    serial::dgemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, beta);
}

void block_matmul_nt(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out) {
  if (go_parallel(S * pa * pb * k))
    par::block_matmul_nt(S, pa, pb, k, a, b, out);
  else
    serial::block_matmul_nt(S, pa, pb, k, a, b, out);
}

void block_matmul_nn(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k,
                     const double* a, const double* b, double* out) {
  if (go_parallel(S * pa * pb * k))
    par::block_matmul_nn(S, pa, pb, k, a, b, out);
  else
    serial::block_matmul_nn(S, pa, pb, k, a, b, out);
}

}  // namespace elden::kern
