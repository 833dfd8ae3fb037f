#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "xmlp/errors.hpp"

namespace xmlp {

// Dense rank-4 activation/gradient carrier. Layout is (N, C, H, W) row-major
// with W fastest; all extents are >= 1. Out-of-range element access is a
// programming error (asserted), not wraparound.
template <class T>
struct Tensor4T {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4T() = default;

  Tensor4T(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
      throw shape_error("Tensor4 extents must be >= 1");
    data.assign(static_cast<size_t>(n_) * c_ * h_ * w_, T(0));
  }

  size_t numel() const { return data.size(); }

  size_t index(int in, int ic, int ih, int iw) const {
    assert(in >= 0 && in < n && ic >= 0 && ic < c && ih >= 0 && ih < h &&
           iw >= 0 && iw < w);
    return ((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw;
  }

  T& at(int in, int ic, int ih, int iw) { return data[index(in, ic, ih, iw)]; }
  const T& at(int in, int ic, int ih, int iw) const {
    return data[index(in, ic, ih, iw)];
  }

  bool same_dims(const Tensor4T& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(T v) { data.assign(data.size(), v); }
};

// Plain row-major matrix, used for pooled features and logits.
template <class T>
struct MatrixT {
  int rows = 0, cols = 0;
  std::vector<T> data;

  MatrixT() = default;
  MatrixT(int r, int c) : rows(r), cols(c) {
    if (r < 1 || c < 1) throw shape_error("Matrix extents must be >= 1");
    data.assign(static_cast<size_t>(r) * c, T(0));
  }

  T& at(int r, int c_) {
    assert(r >= 0 && r < rows && c_ >= 0 && c_ < cols);
    return data[static_cast<size_t>(r) * cols + c_];
  }
  const T& at(int r, int c_) const {
    assert(r >= 0 && r < rows && c_ >= 0 && c_ < cols);
    return data[static_cast<size_t>(r) * cols + c_];
  }
};

// A learnable dense map: `values` is rows x cols row-major, `grad` is the
// same-shape accumulation buffer. rows = input extent, cols = output extent,
// i.e. out[j] = sum_i values[i,j] * in[i].
template <class T>
struct DenseWeightT {
  int rows = 0, cols = 0;
  std::vector<T> values;
  std::vector<T> grad;

  DenseWeightT() = default;
  DenseWeightT(int r, int c) : rows(r), cols(c) {
    if (r < 1 || c < 1) throw shape_error("DenseWeight extents must be >= 1");
    values.assign(static_cast<size_t>(r) * c, T(0));
    grad.assign(values.size(), T(0));
  }

  T& at(int r, int c_) {
    assert(r >= 0 && r < rows && c_ >= 0 && c_ < cols);
    return values[static_cast<size_t>(r) * cols + c_];
  }
  const T& at(int r, int c_) const {
    assert(r >= 0 && r < rows && c_ >= 0 && c_ < cols);
    return values[static_cast<size_t>(r) * cols + c_];
  }

  void zero_grad() { grad.assign(grad.size(), T(0)); }
};

using Tensor4 = Tensor4T<float>;
using Matrix = MatrixT<float>;
using DenseWeight = DenseWeightT<float>;

}  // namespace xmlp
