#pragma once

#include <vector>

#include "xmlp/rng.hpp"
#include "xmlp/tensor.hpp"

namespace xmlp::testutil {

template <class T>
Tensor4T<T> random_tensor(int n, int c, int h, int w, Rng& rng, float lo = -1.0f,
                          float hi = 1.0f) {
  Tensor4T<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
DenseWeightT<T> random_weight(int rows, int cols, Rng& rng, float lo = -1.0f,
                              float hi = 1.0f) {
  DenseWeightT<T> w(rows, cols);
  for (auto& v : w.values) v = static_cast<T>(rng.uniform(lo, hi));
  return w;
}

template <class T>
std::vector<T> random_coeffs(size_t count, Rng& rng) {
  std::vector<T> c(count);
  for (auto& v : c) v = static_cast<T>(rng.uniform(-1.0f, 1.0f));
  return c;
}

}  // namespace xmlp::testutil
