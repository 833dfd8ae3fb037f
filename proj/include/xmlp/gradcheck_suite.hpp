#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xmlp/gradcheck.hpp"
#include "xmlp/layer.hpp"
#include "xmlp/model.hpp"

namespace xmlp {

struct OpCheckResult {
  std::string name;
  double max_err = 0.0;
};

namespace gradcheck_detail {

template <class T>
Tensor4T<T> rand_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor4T<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-1.0f, 1.0f));
  return t;
}

// Kink-sign collectors: the signs of every PReLU input currently cached.
template <class T>
void append_signs(const Tensor4T<T>& t, std::vector<int8_t>& out) {
  for (const T& v : t.data) out.push_back(v > T(0) ? 1 : 0);
}

template <class T>
void collect_signs(const ChannelBlockT<T>& b, std::vector<int8_t>& out) {
  append_signs(b.cached_t1, out);
  append_signs(b.cached_t2, out);
}

template <class T>
void collect_signs(const LayerT<T>& l, std::vector<int8_t>& out) {
  if (const auto* e = std::get_if<SpatialExpansionT<T>>(&l.spatial)) {
    append_signs(e->cached_tw, out);
    append_signs(e->cached_th, out);
  } else if (const auto* a = std::get_if<SpatialAlternateT<T>>(&l.spatial)) {
    append_signs(a->cached_t1, out);
    append_signs(a->cached_t2, out);
    append_signs(a->cached_t3, out);
    append_signs(a->cached_t4, out);
  }
  collect_signs(l.channel, out);
  if (l.is_superior()) collect_signs(l.channel2, out);
}

template <class T>
std::vector<int8_t> model_kink_signs(const ModelT<T>& m) {
  std::vector<int8_t> out;
  for (const auto& layer : m.layers) collect_signs(layer, out);
  return out;
}

// Scalarization of a tensor output; double accumulation keeps the probe
// quotient's rounding noise well below the 32-bit threshold.
template <class T>
T dot(const Tensor4T<T>& t, const std::vector<T>& coeffs) {
  double s = 0.0;
  for (size_t i = 0; i < t.numel(); ++i)
    s += static_cast<double>(t.data[i]) * static_cast<double>(coeffs[i]);
  return static_cast<T>(s);
}

// Coefficients scaled so the scalarized loss stays O(1) regardless of the
// output size.
template <class T>
std::vector<T> loss_coeffs(size_t count, Rng& rng) {
  const float scale = 1.0f / std::sqrt(static_cast<float>(count));
  std::vector<T> c(count);
  for (auto& v : c) v = static_cast<T>(rng.uniform(-scale, scale));
  return c;
}

template <class T>
double check_linear(Axis axis, Rng& rng, T step) {
  const int n = 1 + rng.uniform_int(2), c = 1 + rng.uniform_int(4);
  const int h = 2 + rng.uniform_int(4), w = 2 + rng.uniform_int(4);
  auto x = rand_tensor<T>(n, c, h, w, rng);
  const int in_extent = axis == Axis::width ? w : (axis == Axis::height ? h : c);
  const int out_extent = 1 + rng.uniform_int(5);
  DenseWeightT<T> wt(in_extent, out_extent);
  for (auto& v : wt.values) v = static_cast<T>(rng.uniform(-1.0f, 1.0f));

  auto probe = linear_along_axis(x, wt, axis);
  auto coeffs = loss_coeffs<T>(probe.numel(), rng);
  auto loss = [&] { return dot(linear_along_axis(x, wt, axis), coeffs); };

  Tensor4T<T> upstream = probe;
  upstream.data = coeffs;
  wt.zero_grad();
  auto grad_x = linear_along_axis_backward(upstream, x, wt, axis);
  std::vector<FdBlock<T>> blocks{
      {"x", x.data.data(), grad_x.data.data(), x.numel()},
      {"w", wt.values.data(), wt.grad.data(), wt.values.size()}};
  return fd_check<T>(loss, blocks, step).max_err;
}

template <class T>
double check_batchnorm(Rng& rng, T step) {
  const int n = 2 + rng.uniform_int(2), c = 1 + rng.uniform_int(3);
  const int h = 2 + rng.uniform_int(3), w = 2 + rng.uniform_int(3);
  auto x = rand_tensor<T>(n, c, h, w, rng);
  BatchNormStateT<T> bn(c);
  for (auto& g : bn.gamma) g = static_cast<T>(rng.uniform(0.5f, 1.5f));
  for (auto& b : bn.beta) b = static_cast<T>(rng.uniform(-0.5f, 0.5f));

  auto probe = batchnorm_forward(x, bn, Mode::train);
  auto coeffs = loss_coeffs<T>(probe.numel(), rng);
  auto loss = [&] {
    BatchNormStateT<T> fresh = bn;
    return dot(batchnorm_forward(x, fresh, Mode::train), coeffs);
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
}

template <class T>
double check_prelu(Rng& rng, T step) {
  auto x = rand_tensor<T>(2, 2, 3, 3, rng);
  PReluStateT<T> p;
  p.slope = static_cast<T>(rng.uniform(0.05f, 0.5f));
  auto probe = prelu_forward(x, p);
  auto coeffs = loss_coeffs<T>(probe.numel(), rng);
  auto loss = [&] { return dot(prelu_forward(x, p), coeffs); };
  Tensor4T<T> upstream = probe;
  upstream.data = coeffs;
  p.zero_grad();
  auto grad_x = prelu_backward(upstream, x, p);
  std::vector<FdBlock<T>> blocks{
      {"x", x.data.data(), grad_x.data.data(), x.numel()},
      {"slope", &p.slope, &p.slope_grad, 1}};
  auto signs = [&] {
    std::vector<int8_t> s;
    append_signs(x, s);
    return s;
  };
  return fd_check<T>(loss, blocks, step, signs).max_err;
}

template <class T>
double check_gap(Rng& rng, T step) {
  auto x = rand_tensor<T>(2, 3, 3, 2, rng);
  auto probe = global_average_pool(x);
  auto coeffs = loss_coeffs<T>(probe.data.size(), rng);
  auto loss = [&] {
    auto out = global_average_pool(x);
    double s = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i)
      s += static_cast<double>(out.data[i]) * static_cast<double>(coeffs[i]);
    return static_cast<T>(s);
  };
  MatrixT<T> upstream = probe;
  upstream.data = coeffs;
  auto grad_x = global_average_pool_backward(upstream, x.h, x.w);
  std::vector<FdBlock<T>> blocks{
      {"x", x.data.data(), grad_x.data.data(), x.numel()}};
  return fd_check<T>(loss, blocks, step).max_err;
}

template <class T>
double check_softmax_ce(Rng& rng, T step) {
  const int n = 2 + rng.uniform_int(3), k = 2 + rng.uniform_int(5);
  MatrixT<T> logits(n, k);
  for (auto& v : logits.data) v = static_cast<T>(rng.uniform(-2.0f, 2.0f));
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_int(k));
  auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
  auto res = softmax_cross_entropy(logits, labels);
  std::vector<FdBlock<T>> blocks{{"logits", logits.data.data(),
                                  res.grad_logits.data.data(),
                                  logits.data.size()}};
  return fd_check<T>(loss, blocks, step).max_err;
}

// Random layer spec with extents <= 6, exercising residual and non-residual
// wiring alike.
inline LayerSpec random_layer_spec(LayerVariant variant, Rng& rng) {
  LayerSpec s;
  s.variant = variant;
  s.expansion = 2;
  s.c_in = 1 + rng.uniform_int(4);
  s.c_out = rng.bernoulli(0.5f) ? s.c_in : 1 + rng.uniform_int(4);
  s.h_in = 2 + rng.uniform_int(5);
  s.w_in = 2 + rng.uniform_int(5);
  if (rng.bernoulli(0.5f)) {
    s.h_out = s.h_in;
    s.w_out = s.w_in;
  } else {
    s.h_out = 2 + rng.uniform_int(5);
    s.w_out = 2 + rng.uniform_int(5);
  }
  return s;
}

template <class T>
double check_layer(LayerVariant variant, Rng& rng, T step) {
  const LayerSpec spec = random_layer_spec(variant, rng);
  LayerT<T> layer(spec);
  Rng init_rng(rng.next_u32());
  layer.init(init_rng);
  const int n = 2 + rng.uniform_int(2);
  auto x = rand_tensor<T>(n, spec.c_in, spec.h_in, spec.w_in, rng);

  auto probe = layer.forward(x, Mode::train);
  auto coeffs = loss_coeffs<T>(probe.numel(), rng);
  auto loss = [&] { return dot(layer.forward(x, Mode::train), coeffs); };

  Tensor4T<T> upstream = probe;
  upstream.data = coeffs;
  layer.zero_grad();
  layer.forward(x, Mode::train);
  auto grad_x = layer.backward(upstream);

  std::vector<FdBlock<T>> blocks{{"x", x.data.data(), grad_x.data.data(), x.numel()}};
  std::vector<ParamRefT<T>> refs;
  layer.enumerate(refs, "p");
  for (auto& r : refs) blocks.push_back({r.name, r.values, r.grads, r.count});
  auto signs = [&] {
    std::vector<int8_t> s;
    collect_signs(layer, s);
    return s;
  };
  return fd_check<T>(loss, blocks, step, signs).max_err;
}

}  // namespace gradcheck_detail

// Finite-difference suite over every primitive op and all four layer
// variants, `seeds` random instances each. Returns the max relative error
// observed per op.
template <class T>
std::vector<OpCheckResult> run_gradcheck_suite(uint64_t seed, T step,
                                               int seeds = 5) {
  using namespace gradcheck_detail;
  std::vector<OpCheckResult> results;
  auto run = [&](const std::string& name, const std::function<double(Rng&)>& fn) {
    OpCheckResult r{name, 0.0};
    for (int s = 0; s < seeds; ++s) {
      Rng rng(seed + 7919 * s + std::hash<std::string>{}(name));
      r.max_err = std::max(r.max_err, fn(rng));
    }
    results.push_back(r);
  };

  run("linear_width", [&](Rng& rng) { return check_linear<T>(Axis::width, rng, step); });
  run("linear_height", [&](Rng& rng) { return check_linear<T>(Axis::height, rng, step); });
  run("linear_channel", [&](Rng& rng) { return check_linear<T>(Axis::channel, rng, step); });
  run("batchnorm", [&](Rng& rng) { return check_batchnorm<T>(rng, step); });
  run("prelu", [&](Rng& rng) { return check_prelu<T>(rng, step); });
  run("global_average_pool", [&](Rng& rng) { return check_gap<T>(rng, step); });
  run("softmax_cross_entropy", [&](Rng& rng) { return check_softmax_ce<T>(rng, step); });
  run("layer_basic", [&](Rng& rng) { return check_layer<T>(LayerVariant::basic, rng, step); });
  run("layer_expansion", [&](Rng& rng) { return check_layer<T>(LayerVariant::expansion, rng, step); });
  run("layer_alternate", [&](Rng& rng) { return check_layer<T>(LayerVariant::alternate, rng, step); });
  run("layer_superior", [&](Rng& rng) { return check_layer<T>(LayerVariant::superior, rng, step); });
  return results;
}

}  // namespace xmlp
