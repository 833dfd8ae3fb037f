#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "xmlp/matmul.hpp"
#include "xmlp/rng.hpp"

using namespace xmlp;

namespace {

// Frobenius-relative agreement between the fast float path and a double
// reference on the same inputs.
void compare_against_reference(bool ta, bool tb, int m, int n, int k,
                               uint64_t seed, bool accumulate) {
  Rng rng(seed);
  const int a_rows = ta ? k : m, a_cols = ta ? m : k;
  const int b_rows = tb ? n : k, b_cols = tb ? k : n;
  std::vector<float> a(static_cast<size_t>(a_rows) * a_cols);
  std::vector<float> b(static_cast<size_t>(b_rows) * b_cols);
  std::vector<float> c(static_cast<size_t>(m) * n);
  for (auto& v : a) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : b) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : c) v = rng.uniform(-1.0f, 1.0f);

  std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
  std::vector<double> cd(c.begin(), c.end());

  gemm_f32(ta, tb, m, n, k, a.data(), a_cols, b.data(), b_cols, c.data(), n,
           accumulate);
  gemm_generic<double>(ta, tb, m, n, k, ad.data(), a_cols, bd.data(), b_cols,
                       cd.data(), n, accumulate);

  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < c.size(); ++i) {
    const double d = c[i] - cd[i];
    num += d * d;
    den += cd[i] * cd[i];
  }
  const double rel = std::sqrt(num) / (std::sqrt(den) + 1e-30);
  CHECK(rel < 1e-5);
}

}  // namespace

TEST_CASE("gemm matches double reference across shapes and transposes") {
  const std::vector<std::array<int, 3>> shapes{{1, 1, 1},    {5, 7, 3},
                                               {13, 33, 17}, {64, 64, 64},
                                               {97, 130, 291}, {6, 16, 256},
                                               {300, 50, 20}};
  int cases = 0;
  for (bool ta : {false, true})
    for (bool tb : {false, true})
      for (const auto& s : shapes) {
        compare_against_reference(ta, tb, s[0], s[1], s[2], 1000 + cases,
                                  cases % 2 == 0);
        ++cases;
      }
  CHECK(cases == 28);
}

TEST_CASE("gemm result is bitwise identical across thread counts") {
  Rng rng(7);
  const int m = 240, n = 96, k = 100;
  std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
  for (auto& v : a) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : b) v = rng.uniform(-1.0f, 1.0f);

  const int saved = compute_threads();
  std::vector<float> c1(static_cast<size_t>(m) * n), c2(c1.size()), c4(c1.size());
  set_compute_threads(1);
  gemm_f32(false, false, m, n, k, a.data(), k, b.data(), n, c1.data(), n, false);
  set_compute_threads(2);
  gemm_f32(false, false, m, n, k, a.data(), k, b.data(), n, c2.data(), n, false);
  set_compute_threads(4);
  gemm_f32(false, false, m, n, k, a.data(), k, b.data(), n, c4.data(), n, false);
  set_compute_threads(saved);

  CHECK(c1 == c2);
  CHECK(c1 == c4);
}

TEST_CASE("gemm accumulate adds into the destination") {
  std::vector<float> a{1, 2, 3, 4};       // 2x2
  std::vector<float> b{1, 0, 0, 1};       // identity
  std::vector<float> c{10, 10, 10, 10};
  gemm_f32(false, false, 2, 2, 2, a.data(), 2, b.data(), 2, c.data(), 2, true);
  CHECK(c == std::vector<float>{11, 12, 13, 14});
  gemm_f32(false, false, 2, 2, 2, a.data(), 2, b.data(), 2, c.data(), 2, false);
  CHECK(c == std::vector<float>{1, 2, 3, 4});
}
