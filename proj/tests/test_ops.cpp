#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "xmlp/gradcheck.hpp"
#include "xmlp/ops.hpp"

using namespace xmlp;
using namespace xmlp::testutil;

namespace {

template <class T>
T dot_loss(const Tensor4T<T>& out, const std::vector<T>& coeffs) {
  T s = T(0);
  for (size_t i = 0; i < out.numel(); ++i) s += out.data[i] * coeffs[i];
  return s;
}

// Finite-difference run for linear_along_axis on one random instance.
template <class T>
double linear_fd_max_err(Axis axis, int n, int c, int h, int w, int out_extent,
                         uint64_t seed, T step) {
  Rng rng(seed);
  auto x = random_tensor<T>(n, c, h, w, rng);
  const int in_extent = axis == Axis::width ? w : (axis == Axis::height ? h : c);
  auto wt = random_weight<T>(in_extent, out_extent, rng);

  auto probe = linear_along_axis(x, wt, axis);
  auto coeffs = random_coeffs<T>(probe.numel(), rng);
  auto loss = [&] { return dot_loss(linear_along_axis(x, wt, axis), coeffs); };

  wt.zero_grad();
  Tensor4T<T> upstream = probe;
  upstream.data = coeffs;
  auto grad_x = linear_along_axis_backward(upstream, x, wt, axis);

  std::vector<FdBlock<T>> blocks{
      {"x", x.data.data(), grad_x.data.data(), x.numel()},
      {"w", wt.values.data(), wt.grad.data(), wt.values.size()}};
  return fd_check<T>(loss, blocks, step).max_err;
}

}  // namespace

TEST_CASE("linear_along_axis identity weight on width") {
  Tensor4 x(1, 1, 1, 2);
  x.data = {1.0f, 2.0f};
  DenseWeight w(2, 2);
  identity_init(w);
  auto out = linear_along_axis(x, w, Axis::width);
  CHECK(out.data == std::vector<float>{1.0f, 2.0f});
}

TEST_CASE("linear_along_axis hand-computed height map") {
  // x = [[1,2],[3,4]], w = [[1,0],[1,0]]: out row j sums w[i,j]*x[i,:].
  Tensor4 x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  DenseWeight w(2, 2);
  w.at(0, 0) = 1;
  w.at(1, 0) = 1;
  auto out = linear_along_axis(x, w, Axis::height);
  CHECK(out.data == std::vector<float>{4, 6, 0, 0});
}

TEST_CASE("linear_along_axis shape contract and errors") {
  Rng rng(3);
  auto x = random_tensor<float>(2, 3, 8, 8, rng);
  auto w = random_weight<float>(8, 4, rng);
  auto out = linear_along_axis(x, w, Axis::width);
  CHECK(out.n == 2);
  CHECK(out.c == 3);
  CHECK(out.h == 8);
  CHECK(out.w == 4);

  auto bad = random_weight<float>(7, 4, rng);
  CHECK_THROWS_AS(linear_along_axis(x, bad, Axis::width), shape_error);
  CHECK_THROWS_WITH_AS(linear_along_axis(x, bad, Axis::height),
                       doctest::Contains("height"), shape_error);
}

TEST_CASE("linear_along_axis channel map choses channel extent") {
  Rng rng(4);
  auto x = random_tensor<float>(2, 3, 4, 5, rng);
  auto w = random_weight<float>(3, 7, rng);
  auto out = linear_along_axis(x, w, Axis::channel);
  CHECK(out.c == 7);
  // spot-check one element against the definition
  float expect = 0.0f;
  for (int i = 0; i < 3; ++i) expect += w.at(i, 6) * x.at(1, i, 2, 3);
  CHECK(out.at(1, 6, 2, 3) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("linear backward zero upstream leaves grads zero") {
  Rng rng(5);
  auto x = random_tensor<float>(2, 2, 3, 3, rng);
  auto w = random_weight<float>(3, 3, rng);
  w.zero_grad();
  Tensor4 zeros(2, 2, 3, 3);
  auto grad_x = linear_along_axis_backward(zeros, x, w, Axis::width);
  for (float v : grad_x.data) CHECK(v == 0.0f);
  for (float v : w.grad) CHECK(v == 0.0f);
}

TEST_CASE("linear backward identity width weight passes grad through") {
  Rng rng(6);
  auto x = random_tensor<float>(1, 2, 2, 3, rng);
  DenseWeight w(3, 3);
  identity_init(w);
  auto grad_out = random_tensor<float>(1, 2, 2, 3, rng);
  auto grad_x = linear_along_axis_backward(grad_out, x, w, Axis::width);
  CHECK(grad_x.data == grad_out.data);
}

TEST_CASE("linear backward matches finite differences, all axes") {
  for (Axis axis : {Axis::width, Axis::height, Axis::channel}) {
    const double err32 =
        linear_fd_max_err<float>(axis, 2, 3, 4, 3, 4, 42, kFdStepF32);
    CHECK(err32 < 1e-3);
    const double err64 =
        linear_fd_max_err<double>(axis, 2, 3, 4, 3, 4, 42, kFdStepF64);
    CHECK(err64 < 1e-6);
  }
}

TEST_CASE("composed width+height map is linear in x") {
  Rng rng(7);
  auto w1 = random_weight<float>(4, 4, rng);
  auto w2 = random_weight<float>(3, 3, rng);
  auto f = [&](const Tensor4& t) {
    return linear_along_axis(linear_along_axis(t, w1, Axis::width), w2,
                             Axis::height);
  };
  auto x = random_tensor<float>(2, 2, 3, 4, rng);
  auto y = random_tensor<float>(2, 2, 3, 4, rng);
  const float alpha = 0.7f, beta = -1.3f;
  Tensor4 mix(2, 2, 3, 4);
  for (size_t i = 0; i < mix.numel(); ++i)
    mix.data[i] = alpha * x.data[i] + beta * y.data[i];
  auto lhs = f(mix);
  auto fx = f(x), fy = f(y);
  for (size_t i = 0; i < lhs.numel(); ++i)
    CHECK(lhs.data[i] ==
          doctest::Approx(alpha * fx.data[i] + beta * fy.data[i]).epsilon(1e-5));
}

TEST_CASE("batchnorm constant input maps to zero in train mode") {
  Tensor4 x(3, 2, 2, 2);
  for (int in = 0; in < 3; ++in)
    for (int ih = 0; ih < 2; ++ih)
      for (int iw = 0; iw < 2; ++iw) {
        x.at(in, 0, ih, iw) = 5.0f;
        x.at(in, 1, ih, iw) = -2.0f;
      }
  BatchNormState bn(2);
  auto out = batchnorm_forward(x, bn, Mode::train);
  for (float v : out.data) CHECK(v == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("batchnorm affine contract on standardized input") {
  // Exactly mean-0/var-1 per channel: alternating +1/-1.
  Tensor4 x(2, 1, 2, 2);
  x.data = {1, -1, 1, -1, -1, 1, -1, 1};
  BatchNormState bn(1);
  bn.gamma[0] = 2.0f;
  bn.beta[0] = 3.0f;
  auto out = batchnorm_forward(x, bn, Mode::train);
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK(out.data[i] == doctest::Approx(2.0f * x.data[i] + 3.0f).epsilon(1e-4));
}

TEST_CASE("batchnorm train output has zero mean and unit variance per channel") {
  Rng rng(8);
  auto x = random_tensor<float>(4, 2, 3, 3, rng, -3.0f, 5.0f);
  BatchNormState bn(2);
  auto out = batchnorm_forward(x, bn, Mode::train);
  for (int ic = 0; ic < 2; ++ic) {
    double mean = 0.0, var = 0.0;
    for (int in = 0; in < 4; ++in)
      for (int ih = 0; ih < 3; ++ih)
        for (int iw = 0; iw < 3; ++iw) mean += out.at(in, ic, ih, iw);
    mean /= 4 * 9;
    for (int in = 0; in < 4; ++in)
      for (int ih = 0; ih < 3; ++ih)
        for (int iw = 0; iw < 3; ++iw) {
          const double d = out.at(in, ic, ih, iw) - mean;
          var += d * d;
        }
    var /= 4 * 9;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("batchnorm eval mode is a pure affine function") {
  Rng rng(9);
  auto x = random_tensor<float>(2, 3, 2, 2, rng);
  BatchNormState bn(3);
  // push running stats off the defaults
  auto warm = random_tensor<float>(4, 3, 2, 2, rng);
  batchnorm_forward(warm, bn, Mode::train);
  auto a = batchnorm_forward(x, bn, Mode::eval);
  auto b = batchnorm_forward(x, bn, Mode::eval);
  CHECK(a.data == b.data);
}

TEST_CASE("batchnorm batch of one with zero variance stays finite") {
  Tensor4 x(1, 2, 1, 1);
  x.data = {4.0f, -1.0f};
  BatchNormState bn(2);
  auto out = batchnorm_forward(x, bn, Mode::train);
  for (float v : out.data) {
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(0.0f));
  }
}

TEST_CASE("batchnorm shape mismatch and missing-cache errors") {
  Tensor4 x(1, 3, 2, 2);
  BatchNormState bn(2);
  CHECK_THROWS_AS(batchnorm_forward(x, bn, Mode::train), shape_error);
  BatchNormState bn3(3);
  CHECK_THROWS_AS(batchnorm_backward(x, bn3), usage_error);
  batchnorm_forward(x, bn3, Mode::eval);  // eval does not populate the cache
  CHECK_THROWS_AS(batchnorm_backward(x, bn3), usage_error);
}

TEST_CASE("batchnorm backward zero upstream gives zero grads") {
  Rng rng(10);
  auto x = random_tensor<float>(2, 2, 2, 2, rng);
  BatchNormState bn(2);
  batchnorm_forward(x, bn, Mode::train);
  Tensor4 zeros(2, 2, 2, 2);
  auto gx = batchnorm_backward(zeros, bn);
  for (float v : gx.data) CHECK(v == 0.0f);
  for (float v : bn.gamma_grad) CHECK(v == 0.0f);
  for (float v : bn.beta_grad) CHECK(v == 0.0f);
}

TEST_CASE("batchnorm gamma gradient equals sum of grad times xhat") {
  Rng rng(11);
  auto x = random_tensor<double>(3, 2, 2, 2, rng);
  BatchNormStateT<double> bn(2);
  batchnorm_forward(x, bn, Mode::train);
  auto gy = random_tensor<double>(3, 2, 2, 2, rng);
  batchnorm_backward(gy, bn);
  // independent recomputation of xhat
  for (int ic = 0; ic < 2; ++ic) {
    double mean = 0.0, var = 0.0;
    const long count = 3 * 2 * 2;
    for (int in = 0; in < 3; ++in)
      for (int ih = 0; ih < 2; ++ih)
        for (int iw = 0; iw < 2; ++iw) mean += x.at(in, ic, ih, iw);
    mean /= count;
    for (int in = 0; in < 3; ++in)
      for (int ih = 0; ih < 2; ++ih)
        for (int iw = 0; iw < 2; ++iw) {
          const double d = x.at(in, ic, ih, iw) - mean;
          var += d * d;
        }
    var /= count;
    double expect = 0.0;
    for (int in = 0; in < 3; ++in)
      for (int ih = 0; ih < 2; ++ih)
        for (int iw = 0; iw < 2; ++iw)
          expect += gy.at(in, ic, ih, iw) *
                    ((x.at(in, ic, ih, iw) - mean) / std::sqrt(var + 1e-5));
    CHECK(bn.gamma_grad[ic] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("batchnorm backward matches finite differences") {
  auto run = [](auto tag, auto step) {
    using T = decltype(tag);
    Rng rng(12);
    auto x = random_tensor<T>(3, 2, 2, 3, rng);
    BatchNormStateT<T> bn(2);
    for (auto& g : bn.gamma) g = T(1.3);
    for (auto& b : bn.beta) b = T(-0.2);

    auto probe = batchnorm_forward(x, bn, Mode::train);
    auto coeffs = random_coeffs<T>(probe.numel(), rng);
    auto loss = [&] {
      BatchNormStateT<T> fresh = bn;  // keep running stats fixed per probe
      return dot_loss(batchnorm_forward(x, fresh, Mode::train), coeffs);
    };
    Tensor4T<T> upstream = probe;
    upstream.data = coeffs;
    bn.zero_grad();
    batchnorm_forward(x, bn, Mode::train);
    auto grad_x = batchnorm_backward(upstream, bn);
    std::vector<FdBlock<T>> blocks{
        {"x", x.data.data(), grad_x.data.data(), x.numel()},
        {"gamma", bn.gamma.data(), bn.gamma_grad.data(), bn.gamma.size()},
        {"beta", bn.beta.data(), bn.beta_grad.data(), bn.beta.size()}};
    return fd_check<T>(loss, blocks, step).max_err;
  };
  CHECK(run(1.0f, kFdStepF32) < 1e-3);
  CHECK(run(1.0, kFdStepF64) < 1e-6);
}

TEST_CASE("prelu definition and identity slope") {
  Tensor4 x(1, 1, 1, 2);
  x.data = {-4.0f, 2.0f};
  PReluState p;
  p.slope = 0.25f;
  auto out = prelu_forward(x, p);
  CHECK(out.data == std::vector<float>{-1.0f, 2.0f});

  p.slope = 1.0f;
  out = prelu_forward(x, p);
  CHECK(out.data == x.data);
  Tensor4 gy(1, 1, 1, 2);
  gy.data = {3.0f, -5.0f};
  auto gx = prelu_backward(gy, x, p);
  CHECK(gx.data == gy.data);

  p.slope = 0.0f;  // ReLU
  out = prelu_forward(x, p);
  CHECK(out.data == std::vector<float>{0.0f, 2.0f});
}

TEST_CASE("prelu backward matches finite differences including slope") {
  auto run = [](auto tag, auto step) {
    using T = decltype(tag);
    Rng rng(13);
    auto x = random_tensor<T>(2, 2, 3, 3, rng);
    PReluStateT<T> p;
    p.slope = T(0.3);
    auto probe = prelu_forward(x, p);
    auto coeffs = random_coeffs<T>(probe.numel(), rng);
    auto loss = [&] { return dot_loss(prelu_forward(x, p), coeffs); };
    Tensor4T<T> upstream = probe;
    upstream.data = coeffs;
    p.zero_grad();
    auto grad_x = prelu_backward(upstream, x, p);
    std::vector<FdBlock<T>> blocks{
        {"x", x.data.data(), grad_x.data.data(), x.numel()},
        {"slope", &p.slope, &p.slope_grad, 1}};
    // probes that push an input across the kink are skipped
    auto signs = [&] {
      std::vector<int8_t> s;
      s.reserve(x.numel());
      for (const T& v : x.data) s.push_back(v > T(0) ? 1 : 0);
      return s;
    };
    return fd_check<T>(loss, blocks, step, signs).max_err;
  };
  CHECK(run(1.0f, kFdStepF32) < 1e-3);
  CHECK(run(1.0, kFdStepF64) < 1e-6);
}

TEST_CASE("global average pool basics") {
  Tensor4 c(2, 3, 2, 2);
  c.fill(4.5f);
  auto pooled = global_average_pool(c);
  for (float v : pooled.data) CHECK(v == 4.5f);

  Tensor4 x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  CHECK(global_average_pool(x).at(0, 0) == 2.5f);
}

TEST_CASE("global average pool backward distributes uniformly") {
  auto run = [](auto tag, auto step) {
    using T = decltype(tag);
    Rng rng(14);
    auto x = random_tensor<T>(2, 2, 3, 2, rng);
    auto probe = global_average_pool(x);
    auto coeffs = random_coeffs<T>(probe.data.size(), rng);
    auto loss = [&] {
      auto out = global_average_pool(x);
      T s = T(0);
      for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * coeffs[i];
      return s;
    };
    MatrixT<T> upstream = probe;
    upstream.data = coeffs;
    auto grad_x = global_average_pool_backward(upstream, x.h, x.w);
    std::vector<FdBlock<T>> blocks{
        {"x", x.data.data(), grad_x.data.data(), x.numel()}};
    return fd_check<T>(loss, blocks, step).max_err;
  };
  CHECK(run(1.0f, kFdStepF32) < 1e-3);
  CHECK(run(1.0, kFdStepF64) < 1e-6);
}

TEST_CASE("softmax cross entropy uniform logits give ln K") {
  Matrix logits(2, 10);
  logits.data.assign(logits.data.size(), 0.7f);
  auto res = softmax_cross_entropy(logits, {3, 9});
  CHECK(res.loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("softmax cross entropy saturates to zero for dominant true logit") {
  Matrix logits(1, 4);
  logits.data = {80.0f, 0.0f, 0.0f, 0.0f};
  auto res = softmax_cross_entropy(logits, {0});
  CHECK(res.loss < 1e-6);
  CHECK(std::isfinite(res.loss));
}

TEST_CASE("softmax cross entropy matches 64-bit brute-force oracle") {
  Rng rng(15);
  Matrix logits(3, 4);
  for (auto& v : logits.data) v = rng.uniform(-2.0f, 2.0f);
  std::vector<int> labels{1, 3, 0};
  auto res = softmax_cross_entropy(logits, labels);

  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    double denom = 0.0;
    for (int j = 0; j < 4; ++j)
      denom += std::exp(static_cast<double>(logits.at(i, j)));
    expect -= std::log(std::exp(static_cast<double>(logits.at(i, labels[i]))) / denom);
  }
  expect /= 3.0;
  CHECK(std::abs(res.loss - expect) < 1e-6);

  // gradient identity: rows sum to 0, true-class entry is (p-1)/N
  for (int i = 0; i < 3; ++i) {
    double row = 0.0;
    for (int j = 0; j < 4; ++j) row += res.grad_logits.at(i, j);
    CHECK(std::abs(row) < 1e-6);
  }
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
  Matrix logits(2, 3);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3}), usage_error);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1, 0}), usage_error);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}), shape_error);
}

TEST_CASE("xavier init bound, determinism, and variance") {
  DenseWeight w(3, 3);
  Rng rng(77);
  xavier_init(w, rng);  // a = sqrt(6/6) = 1
  for (float v : w.values) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }

  DenseWeight w2(3, 3);
  Rng rng2(77);
  xavier_init(w2, rng2);
  CHECK(w.values == w2.values);

  DenseWeight big(250, 400);  // 1e5 samples, a = sqrt(6/650)
  Rng rng3(78);
  xavier_init(big, rng3);
  const double a = std::sqrt(6.0 / 650.0);
  double mean = 0.0;
  for (float v : big.values) mean += v;
  mean /= big.values.size();
  double var = 0.0;
  for (float v : big.values) var += (v - mean) * (v - mean);
  var /= big.values.size();
  CHECK(var == doctest::Approx(a * a / 3.0).epsilon(0.05));
}
