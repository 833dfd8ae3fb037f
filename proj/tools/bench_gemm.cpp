// Throughput probe for the GEMM kernel at the shapes the training loop
// actually produces. Usage: bench_gemm [threads]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "xmlp/matmul.hpp"
#include "xmlp/rng.hpp"

using namespace xmlp;

static void bench(int m, int n, int k, int iters) {
  Rng rng(1);
  std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
      c(static_cast<size_t>(m) * n);
  for (auto& v : a) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : b) v = rng.uniform(-1.0f, 1.0f);

  gemm_f32(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i)
    gemm_f32(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  const auto t1 = std::chrono::steady_clock::now();
  const double sec = std::chrono::duration<double>(t1 - t0).count();
  const double gflops = 2.0 * m * n * k * iters / sec / 1e9;
  std::printf("%5d x %5d x %5d : %7.2f GFLOP/s\n", m, n, k, gflops);
}

int main(int argc, char** argv) {
  if (argc > 1) set_compute_threads(std::atoi(argv[1]));
  std::printf("threads = %d\n", compute_threads());
  bench(2048, 32, 32, 400);    // width map, early layer
  bench(4096, 512, 128, 60);   // channel expand, deep layer
  bench(4096, 128, 512, 60);   // channel project, deep layer
  bench(512, 512, 4096, 15);   // weight-gradient shape
  bench(1024, 1024, 1024, 30); // square reference
  return 0;
}
