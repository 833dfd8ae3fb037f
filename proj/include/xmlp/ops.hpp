#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xmlp/errors.hpp"
#include "xmlp/matmul.hpp"
#include "xmlp/rng.hpp"
#include "xmlp/tensor.hpp"
#include "xmlp/threading.hpp"

namespace xmlp {

enum class Axis { width, height, channel };
enum class Mode { train, eval };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::width: return "width";
    case Axis::height: return "height";
    default: return "channel";
  }
}

template <class T>
int extent_along(const Tensor4T<T>& x, Axis a) {
  switch (a) {
    case Axis::width: return x.w;
    case Axis::height: return x.h;
    default: return x.c;
  }
}

// ---------------------------------------------------------------------------
// Axis-wise linear maps.
//
// The same dense kernel serves all three axes: slices along `axis` are
// gathered into contiguous rows (a no-op for width, which is already
// contiguous), multiplied by one shared weight matrix, and scattered back.
// ---------------------------------------------------------------------------

namespace detail {

// Gathered view of x as a (rows x len) matrix whose rows are the vectors
// sliced along `axis`. For width the tensor memory is used directly.
template <class T>
struct AxisRows {
  long rows = 0;
  int len = 0;
  const T* direct = nullptr;
  std::vector<T> buf;
  const T* data() const { return direct ? direct : buf.data(); }
};

template <class T>
AxisRows<T> gather_axis(const Tensor4T<T>& x, Axis axis) {
  AxisRows<T> g;
  g.len = extent_along(x, axis);
  switch (axis) {
    case Axis::width:
      g.rows = static_cast<long>(x.n) * x.c * x.h;
      g.direct = x.data.data();
      return g;
    case Axis::height: {
      g.rows = static_cast<long>(x.n) * x.c * x.w;
      g.buf.resize(static_cast<size_t>(g.rows) * g.len);
      const long panels = static_cast<long>(x.n) * x.c;
      for (long p = 0; p < panels; ++p) {
        const T* src = x.data.data() + static_cast<size_t>(p) * x.h * x.w;
        T* dst = g.buf.data() + static_cast<size_t>(p) * x.w * x.h;
        for (int ih = 0; ih < x.h; ++ih)
          for (int iw = 0; iw < x.w; ++iw)
            dst[static_cast<size_t>(iw) * x.h + ih] = src[static_cast<size_t>(ih) * x.w + iw];
      }
      return g;
    }
    default: {
      const int hw = x.h * x.w;
      g.rows = static_cast<long>(x.n) * hw;
      g.buf.resize(static_cast<size_t>(g.rows) * g.len);
      for (int in = 0; in < x.n; ++in) {
        const T* src = x.data.data() + static_cast<size_t>(in) * x.c * hw;
        T* dst = g.buf.data() + static_cast<size_t>(in) * hw * x.c;
        for (int ic = 0; ic < x.c; ++ic)
          for (int p = 0; p < hw; ++p)
            dst[static_cast<size_t>(p) * x.c + ic] = src[static_cast<size_t>(ic) * hw + p];
      }
      return g;
    }
  }
}

// Inverse of gather_axis: writes (rows x len) row data into `out`, whose
// extent along `axis` must equal len.
template <class T>
void scatter_axis(const T* rows_data, Axis axis, Tensor4T<T>& out) {
  switch (axis) {
    case Axis::width:
      std::copy(rows_data, rows_data + out.numel(), out.data.data());
      return;
    case Axis::height: {
      const long panels = static_cast<long>(out.n) * out.c;
      for (long p = 0; p < panels; ++p) {
        const T* src = rows_data + static_cast<size_t>(p) * out.w * out.h;
        T* dst = out.data.data() + static_cast<size_t>(p) * out.h * out.w;
        for (int iw = 0; iw < out.w; ++iw)
          for (int ih = 0; ih < out.h; ++ih)
            dst[static_cast<size_t>(ih) * out.w + iw] = src[static_cast<size_t>(iw) * out.h + ih];
      }
      return;
    }
    default: {
      const int hw = out.h * out.w;
      for (int in = 0; in < out.n; ++in) {
        const T* src = rows_data + static_cast<size_t>(in) * hw * out.c;
        T* dst = out.data.data() + static_cast<size_t>(in) * out.c * hw;
        for (int p = 0; p < hw; ++p)
          for (int ic = 0; ic < out.c; ++ic)
            dst[static_cast<size_t>(ic) * hw + p] = src[static_cast<size_t>(p) * out.c + ic];
      }
      return;
    }
  }
}

template <class T>
Tensor4T<T> with_axis_extent(const Tensor4T<T>& x, Axis axis, int extent) {
  switch (axis) {
    case Axis::width: return Tensor4T<T>(x.n, x.c, x.h, extent);
    case Axis::height: return Tensor4T<T>(x.n, x.c, extent, x.w);
    default: return Tensor4T<T>(x.n, extent, x.h, x.w);
  }
}

}  // namespace detail

template <class T>
Tensor4T<T> linear_along_axis(const Tensor4T<T>& x, const DenseWeightT<T>& w,
                              Axis axis) {
  if (extent_along(x, axis) != w.rows)
    throw shape_error(std::string("linear_along_axis: ") + axis_name(axis) +
                      " extent " + std::to_string(extent_along(x, axis)) +
                      " does not match weight rows " + std::to_string(w.rows));
  Tensor4T<T> out = detail::with_axis_extent(x, axis, w.cols);
  const auto g = detail::gather_axis(x, axis);
  if (axis == Axis::width) {
    gemm<T>(false, false, static_cast<int>(g.rows), w.cols, w.rows, g.data(),
            w.rows, w.values.data(), w.cols, out.data.data(), w.cols, false);
  } else {
    std::vector<T> r(static_cast<size_t>(g.rows) * w.cols);
    gemm<T>(false, false, static_cast<int>(g.rows), w.cols, w.rows, g.data(),
            w.rows, w.values.data(), w.cols, r.data(), w.cols, false);
    detail::scatter_axis(r.data(), axis, out);
  }
  return out;
}

// Returns grad wrt x and accumulates into w.grad.
template <class T>
Tensor4T<T> linear_along_axis_backward(const Tensor4T<T>& grad_out,
                                       const Tensor4T<T>& cached_x,
                                       DenseWeightT<T>& w, Axis axis) {
  if (extent_along(cached_x, axis) != w.rows)
    throw shape_error(std::string("linear_along_axis_backward: cached input ") +
                      axis_name(axis) + " extent does not match weight rows");
  if (extent_along(grad_out, axis) != w.cols)
    throw shape_error(std::string("linear_along_axis_backward: grad ") +
                      axis_name(axis) + " extent does not match weight cols");

  const auto gx = detail::gather_axis(cached_x, axis);
  const auto gg = detail::gather_axis(grad_out, axis);
  if (gx.rows != gg.rows)
    throw shape_error("linear_along_axis_backward: grad/input row mismatch");

  // w.grad += gathered(x)^T * gathered(grad_out)
  gemm<T>(true, false, w.rows, w.cols, static_cast<int>(gx.rows), gx.data(),
          w.rows, gg.data(), w.cols, w.grad.data(), w.cols, true);

  // grad_x = gathered(grad_out) * w^T, scattered back
  Tensor4T<T> grad_x(cached_x.n, cached_x.c, cached_x.h, cached_x.w);
  if (axis == Axis::width) {
    gemm<T>(false, true, static_cast<int>(gg.rows), w.rows, w.cols, gg.data(),
            w.cols, w.values.data(), w.cols, grad_x.data.data(), w.rows, false);
  } else {
    std::vector<T> r(static_cast<size_t>(gg.rows) * w.rows);
    gemm<T>(false, true, static_cast<int>(gg.rows), w.rows, w.cols, gg.data(),
            w.cols, w.values.data(), w.cols, r.data(), w.rows, false);
    detail::scatter_axis(r.data(), axis, grad_x);
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Batch normalization. Features are channels, normalized over (N, H, W);
// the channel extent is the only one stable across the spatial resizing
// inside a layer.
// ---------------------------------------------------------------------------

template <class T>
struct BatchNormStateT {
  int features = 0;
  std::vector<T> gamma, beta;
  std::vector<T> gamma_grad, beta_grad;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  // train-mode forward cache
  bool has_cache = false;
  std::vector<T> saved_invstd;
  Tensor4T<T> saved_xhat;

  BatchNormStateT() = default;
  explicit BatchNormStateT(int f, T momentum_ = T(0.1), T eps = T(1e-5))
      : features(f),
        gamma(f, T(1)),
        beta(f, T(0)),
        gamma_grad(f, T(0)),
        beta_grad(f, T(0)),
        running_mean(f, T(0)),
        running_var(f, T(1)),
        momentum(momentum_),
        epsilon(eps) {}

  void zero_grad() {
    std::fill(gamma_grad.begin(), gamma_grad.end(), T(0));
    std::fill(beta_grad.begin(), beta_grad.end(), T(0));
  }
};

template <class T>
Tensor4T<T> batchnorm_forward(const Tensor4T<T>& x, BatchNormStateT<T>& bn,
                              Mode mode) {
  if (x.c != bn.features)
    throw shape_error("batchnorm_forward: channel extent " +
                      std::to_string(x.c) + " does not match features " +
                      std::to_string(bn.features));
  Tensor4T<T> out(x.n, x.c, x.h, x.w);
  const int hw = x.h * x.w;
  const long count = static_cast<long>(x.n) * hw;
  const size_t cstride = static_cast<size_t>(x.c) * hw;

  if (mode == Mode::eval) {
    bn.has_cache = false;
    ThreadPool::instance().parallel_for(x.c, [&](int ic) {
      const T scale = bn.gamma[ic] / std::sqrt(bn.running_var[ic] + bn.epsilon);
      const T shift = bn.beta[ic] - bn.running_mean[ic] * scale;
      for (int in = 0; in < x.n; ++in) {
        const T* src = x.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
        T* dst = out.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
        for (int p = 0; p < hw; ++p) dst[p] = src[p] * scale + shift;
      }
    });
    return out;
  }

  bn.saved_invstd.assign(x.c, T(0));
  bn.saved_xhat = Tensor4T<T>(x.n, x.c, x.h, x.w);
  ThreadPool::instance().parallel_for(x.c, [&](int ic) {
    T sum = T(0);
    for (int in = 0; in < x.n; ++in) {
      const T* src = x.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      for (int p = 0; p < hw; ++p) sum += src[p];
    }
    const T mean = sum / static_cast<T>(count);
    T ssq = T(0);
    for (int in = 0; in < x.n; ++in) {
      const T* src = x.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      for (int p = 0; p < hw; ++p) {
        const T d = src[p] - mean;
        ssq += d * d;
      }
    }
    const T var = ssq / static_cast<T>(count);
    const T invstd = T(1) / std::sqrt(var + bn.epsilon);
    bn.saved_invstd[ic] = invstd;

    const T unbiased = count > 1 ? ssq / static_cast<T>(count - 1) : var;
    bn.running_mean[ic] = (T(1) - bn.momentum) * bn.running_mean[ic] + bn.momentum * mean;
    bn.running_var[ic] = (T(1) - bn.momentum) * bn.running_var[ic] + bn.momentum * unbiased;

    const T g = bn.gamma[ic], b = bn.beta[ic];
    for (int in = 0; in < x.n; ++in) {
      const T* src = x.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      T* xh = bn.saved_xhat.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      T* dst = out.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      for (int p = 0; p < hw; ++p) {
        const T v = (src[p] - mean) * invstd;
        xh[p] = v;
        dst[p] = g * v + b;
      }
    }
  });
  bn.has_cache = true;
  return out;
}

template <class T>
Tensor4T<T> batchnorm_backward(const Tensor4T<T>& grad_out,
                               BatchNormStateT<T>& bn) {
  if (!bn.has_cache)
    throw usage_error("batchnorm_backward called without a cached train-mode forward");
  if (!grad_out.same_dims(bn.saved_xhat))
    throw shape_error("batchnorm_backward: grad dims do not match cached forward");

  const Tensor4T<T>& xhat = bn.saved_xhat;
  Tensor4T<T> grad_x(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  const int hw = grad_out.h * grad_out.w;
  const long count = static_cast<long>(grad_out.n) * hw;
  const size_t cstride = static_cast<size_t>(grad_out.c) * hw;

  ThreadPool::instance().parallel_for(grad_out.c, [&](int ic) {
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int in = 0; in < grad_out.n; ++in) {
      const T* gy = grad_out.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      const T* xh = xhat.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      for (int p = 0; p < hw; ++p) {
        sum_dy += gy[p];
        sum_dy_xhat += gy[p] * xh[p];
      }
    }
    bn.gamma_grad[ic] += sum_dy_xhat;
    bn.beta_grad[ic] += sum_dy;

    const T scale = bn.gamma[ic] * bn.saved_invstd[ic];
    const T inv_count = T(1) / static_cast<T>(count);
    for (int in = 0; in < grad_out.n; ++in) {
      const T* gy = grad_out.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      const T* xh = xhat.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      T* dx = grad_x.data.data() + in * cstride + static_cast<size_t>(ic) * hw;
      for (int p = 0; p < hw; ++p)
        dx[p] = scale * (gy[p] - (sum_dy + xh[p] * sum_dy_xhat) * inv_count);
    }
  });
  return grad_x;
}

// ---------------------------------------------------------------------------
// PReLU with one shared learnable slope per activation site.
// ---------------------------------------------------------------------------

template <class T>
struct PReluStateT {
  T slope = T(0.25);
  T slope_grad = T(0);
  void zero_grad() { slope_grad = T(0); }
};

template <class T>
Tensor4T<T> prelu_forward(const Tensor4T<T>& x, const PReluStateT<T>& p) {
  Tensor4T<T> out(x.n, x.c, x.h, x.w);
  const T s = p.slope;
  const size_t total = x.numel();
  const size_t chunk = 1 << 16;
  const int n_chunks = static_cast<int>((total + chunk - 1) / chunk);
  ThreadPool::instance().parallel_for(n_chunks, [&](int ci) {
    const size_t lo = ci * chunk, hi = std::min(total, lo + chunk);
    for (size_t i = lo; i < hi; ++i) {
      const T v = x.data[i];
      out.data[i] = v > T(0) ? v : s * v;
    }
  });
  return out;
}

template <class T>
Tensor4T<T> prelu_backward(const Tensor4T<T>& grad_out,
                           const Tensor4T<T>& cached_x, PReluStateT<T>& p) {
  if (!grad_out.same_dims(cached_x))
    throw shape_error("prelu_backward: grad dims do not match cached input");
  Tensor4T<T> grad_x(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  const T s = p.slope;
  const size_t total = grad_out.numel();
  const size_t chunk = 1 << 16;
  const int n_chunks = static_cast<int>((total + chunk - 1) / chunk);
  std::vector<T> partial(n_chunks, T(0));
  ThreadPool::instance().parallel_for(n_chunks, [&](int ci) {
    const size_t lo = ci * chunk, hi = std::min(total, lo + chunk);
    T acc = T(0);
    for (size_t i = lo; i < hi; ++i) {
      const T v = cached_x.data[i];
      const T gy = grad_out.data[i];
      if (v > T(0)) {
        grad_x.data[i] = gy;
      } else {
        grad_x.data[i] = s * gy;
        acc += gy * v;
      }
    }
    partial[ci] = acc;
  });
  for (int ci = 0; ci < n_chunks; ++ci) p.slope_grad += partial[ci];
  return grad_x;
}

// ---------------------------------------------------------------------------
// Global average pooling over (H, W): one value per channel.
// ---------------------------------------------------------------------------

template <class T>
MatrixT<T> global_average_pool(const Tensor4T<T>& x) {
  MatrixT<T> out(x.n, x.c);
  const int hw = x.h * x.w;
  const T inv = T(1) / static_cast<T>(hw);
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic) {
      const T* src = x.data.data() + (static_cast<size_t>(in) * x.c + ic) * hw;
      T sum = T(0);
      for (int p = 0; p < hw; ++p) sum += src[p];
      out.at(in, ic) = sum * inv;
    }
  return out;
}

template <class T>
Tensor4T<T> global_average_pool_backward(const MatrixT<T>& grad_out, int h,
                                         int w) {
  Tensor4T<T> grad_x(grad_out.rows, grad_out.cols, h, w);
  const int hw = h * w;
  const T inv = T(1) / static_cast<T>(hw);
  for (int in = 0; in < grad_out.rows; ++in)
    for (int ic = 0; ic < grad_out.cols; ++ic) {
      const T g = grad_out.at(in, ic) * inv;
      T* dst = grad_x.data.data() + (static_cast<size_t>(in) * grad_out.cols + ic) * hw;
      for (int p = 0; p < hw; ++p) dst[p] = g;
    }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Softmax cross entropy, mean over the batch, max-subtraction stabilized.
// ---------------------------------------------------------------------------

template <class T>
struct SoftmaxLossT {
  T loss = T(0);
  MatrixT<T> grad_logits;
};

template <class T>
SoftmaxLossT<T> softmax_cross_entropy(const MatrixT<T>& logits,
                                      const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw shape_error("softmax_cross_entropy: labels size does not match batch");
  for (int i = 0; i < logits.rows; ++i)
    if (labels[i] < 0 || labels[i] >= logits.cols)
      throw usage_error("softmax_cross_entropy: label " +
                        std::to_string(labels[i]) + " out of range [0, " +
                        std::to_string(logits.cols) + ") at row " +
                        std::to_string(i));

  SoftmaxLossT<T> res;
  res.grad_logits = MatrixT<T>(logits.rows, logits.cols);
  const T inv_n = T(1) / static_cast<T>(logits.rows);
  T loss = T(0);
  for (int i = 0; i < logits.rows; ++i) {
    const T* row = logits.data.data() + static_cast<size_t>(i) * logits.cols;
    T* grow = res.grad_logits.data.data() + static_cast<size_t>(i) * logits.cols;
    T mx = row[0];
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int j = 0; j < logits.cols; ++j) denom += std::exp(row[j] - mx);
    loss -= (row[labels[i]] - mx - std::log(denom));
    const T inv_denom = T(1) / denom;
    for (int j = 0; j < logits.cols; ++j)
      grow[j] = std::exp(row[j] - mx) * inv_denom * inv_n;
    grow[labels[i]] -= inv_n;
  }
  res.loss = loss * inv_n;
  return res;
}

// ---------------------------------------------------------------------------
// Initializers.
// ---------------------------------------------------------------------------

// Uniform in [-a, a] with a = sqrt(6 / (rows + cols)).
template <class T>
void xavier_init(DenseWeightT<T>& w, Rng& rng) {
  const float a = std::sqrt(6.0f / static_cast<float>(w.rows + w.cols));
  for (auto& v : w.values) v = static_cast<T>(rng.uniform(-a, a));
}

template <class T>
void constant_init(DenseWeightT<T>& w, T value) {
  std::fill(w.values.begin(), w.values.end(), value);
}

template <class T>
void zero_init(DenseWeightT<T>& w) {
  constant_init(w, T(0));
}

template <class T>
void identity_init(DenseWeightT<T>& w) {
  std::fill(w.values.begin(), w.values.end(), T(0));
  for (int i = 0; i < std::min(w.rows, w.cols); ++i) w.at(i, i) = T(1);
}

using BatchNormState = BatchNormStateT<float>;
using PReluState = PReluStateT<float>;
using SoftmaxLoss = SoftmaxLossT<float>;

}  // namespace xmlp
