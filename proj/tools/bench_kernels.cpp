// Compares the serial reference kernels against the OpenMP ones and reports
// effective GFLOP/s. Run with no arguments for the default size sweep.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "elden/kernels.hpp"

using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <typename F>
double time_loop(F&& f, int reps) {
  f();  // warmup
  auto t0 = clk::now();
  for (int r = 0; r < reps; ++r) f();
  return seconds_since(t0) / reps;
}

void bench_dgemm(std::size_t m, std::size_t n, std::size_t k, int reps) {
  std::mt19937_64 rng(1234);
  auto a = random_vec(m * k, rng);
  auto b = random_vec(k * n, rng);
  std::vector<double> c(m * n);
  const double flops = 2.0 * m * n * k;

  double ts = time_loop(
      [&] { elden::kern::serial::dgemm(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, 0.0); },
      reps);
  double tp = time_loop(
      [&] { elden::kern::par::dgemm(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, 0.0); },
      reps);
  std::printf("dgemm  %4zux%-4zux%-4zu serial %8.2f us  %6.2f GF/s | omp %8.2f us  %6.2f GF/s | speedup %.2fx\n",
              m, n, k, ts * 1e6, flops / ts * 1e-9, tp * 1e6, flops / tp * 1e-9, ts / tp);
}

void bench_bmm(std::size_t S, std::size_t pa, std::size_t pb, std::size_t k, int reps) {
  std::mt19937_64 rng(99);
  auto a = random_vec(S * pa * k, rng);
  auto b = random_vec(S * pb * k, rng);
  std::vector<double> c(S * pa * pb);
  const double flops = 2.0 * S * pa * pb * k;

  double ts = time_loop(
      [&] { elden::kern::serial::block_matmul_nt(S, pa, pb, k, a.data(), b.data(), c.data()); },
      reps);
  double tp = time_loop(
      [&] { elden::kern::par::block_matmul_nt(S, pa, pb, k, a.data(), b.data(), c.data()); },
      reps);
  std::printf("bmm_nt S=%-5zu %2zux%-2zux%-3zu serial %8.2f us  %6.2f GF/s | omp %8.2f us  %6.2f GF/s | speedup %.2fx\n",
              S, pa, pb, k, ts * 1e6, flops / ts * 1e-9, tp * 1e6, flops / tp * 1e-9, ts / tp);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP max threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP\n");
#endif
  bench_dgemm(32, 32, 300, 2000);
  bench_dgemm(32, 64, 64, 2000);
  bench_dgemm(288, 32, 32, 1000);
  bench_dgemm(256, 256, 256, 50);
  bench_dgemm(512, 512, 512, 10);
  bench_bmm(32, 9, 9, 16, 5000);
  bench_bmm(1200, 9, 9, 16, 200);
  bench_bmm(12000, 13, 13, 8, 20);
  return 0;
}
