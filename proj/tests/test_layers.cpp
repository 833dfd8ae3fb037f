#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "xmlp/analysis.hpp"
#include "xmlp/gradcheck_suite.hpp"
#include "xmlp/layer.hpp"

using namespace xmlp;
using namespace xmlp::testutil;

namespace {

LayerSpec make_spec(LayerVariant v, int c_in, int c_out, int h_in, int h_out,
                    int w_in, int w_out, int expansion = 4) {
  LayerSpec s;
  s.variant = v;
  s.c_in = c_in;
  s.c_out = c_out;
  s.h_in = h_in;
  s.h_out = h_out;
  s.w_in = w_in;
  s.w_out = w_out;
  s.expansion = expansion;
  return s;
}

size_t enumerated_count(Layer& layer) {
  std::vector<ParamRef> refs;
  layer.enumerate(refs, "p");
  size_t names = 0, total = 0;
  for (const auto& r : refs) {
    ++names;
    total += r.count;
  }
  CHECK(names == refs.size());
  return total;
}

}  // namespace

TEST_CASE("basic layer shape contract") {
  Layer layer(make_spec(LayerVariant::basic, 3, 64, 32, 32, 32, 32));
  Rng rng(1);
  layer.init(rng);
  auto x = random_tensor<float>(4, 3, 32, 32, rng);
  auto y = layer.forward(x, Mode::eval);
  CHECK(y.n == 4);
  CHECK(y.c == 64);
  CHECK(y.h == 32);
  CHECK(y.w == 32);

  Tensor4 bad(4, 5, 32, 32);
  CHECK_THROWS_AS(layer.forward(bad, Mode::eval), shape_error);
}

TEST_CASE("basic layer degenerate wiring: identity spatial, zero channel block") {
  // BN at default running stats in eval mode scales by s0 = 1/sqrt(1+eps);
  // with identity W1/W2 and a zero channel map the output reduces to
  // (s0^2 + s0^3) * x ~= 2 * BN(x).
  LayerSpec s = make_spec(LayerVariant::basic, 2, 2, 4, 4, 4, 4);
  Layer layer(s);
  identity_init(std::get<SpatialBasicT<float>>(layer.spatial).width);
  identity_init(std::get<SpatialBasicT<float>>(layer.spatial).height);
  zero_init(layer.channel.expand);
  zero_init(layer.channel.project);

  Rng rng(2);
  auto x = random_tensor<float>(2, 2, 4, 4, rng);
  auto y = layer.forward(x, Mode::eval);
  const double s0 = 1.0 / std::sqrt(1.0 + 1e-5);
  const double scale = s0 * s0 + s0 * s0 * s0;
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK(y.data[i] == doctest::Approx(scale * x.data[i]).epsilon(1e-5));

  Tensor4 zeros(2, 2, 4, 4);
  auto yz = layer.forward(zeros, Mode::eval);
  for (float v : yz.data) CHECK(v == 0.0f);
}

TEST_CASE("expansion and alternate layer shape contracts") {
  for (LayerVariant v : {LayerVariant::expansion, LayerVariant::alternate}) {
    Layer layer(make_spec(v, 3, 64, 32, 32, 32, 32));
    Rng rng(3);
    layer.init(rng);
    auto x = random_tensor<float>(2, 3, 32, 32, rng);
    auto y = layer.forward(x, Mode::eval);
    CHECK(y.c == 64);
    CHECK(y.h == 32);
    CHECK(y.w == 32);
  }
}

TEST_CASE("superior layer shape contract with downsampling") {
  Layer layer(make_spec(LayerVariant::superior, 8, 16, 12, 6, 12, 6, 2));
  Rng rng(4);
  layer.init(rng);
  auto x = random_tensor<float>(2, 8, 12, 12, rng);
  auto y = layer.forward(x, Mode::eval);
  CHECK(y.c == 16);
  CHECK(y.h == 6);
  CHECK(y.w == 6);
}

TEST_CASE("parameter counts match the analytic counter for all variants") {
  // both shape-preserving and shape-changing specs
  const LayerSpec shapes[] = {
      make_spec(LayerVariant::basic, 3, 64, 32, 32, 32, 32),
      make_spec(LayerVariant::basic, 64, 128, 16, 8, 16, 8),
      make_spec(LayerVariant::expansion, 3, 64, 32, 32, 32, 32),
      make_spec(LayerVariant::expansion, 16, 16, 8, 8, 8, 8),
      make_spec(LayerVariant::alternate, 5, 7, 6, 3, 6, 3, 2),
      make_spec(LayerVariant::superior, 3, 64, 32, 32, 32, 32),
      make_spec(LayerVariant::superior, 16, 32, 8, 8, 8, 8),
  };
  for (const auto& s : shapes) {
    Layer layer(s);
    const auto cost = analytic_layer_cost(s);
    CHECK(enumerated_count(layer) == static_cast<size_t>(cost.total_params()));
  }
}

TEST_CASE("expansion adds exactly one dense layer per spatial block over basic") {
  const LayerSpec b = make_spec(LayerVariant::basic, 8, 8, 6, 6, 6, 6, 4);
  LayerSpec e = b;
  e.variant = LayerVariant::expansion;
  const auto cb = analytic_layer_cost(b);
  const auto ce = analytic_layer_cost(e);
  // basic: W*W' + H*H'; expansion: W*eW' + eW'*W' + H*eH' + eH'*H'
  const int64_t expect =
      6 * 24 + 24 * 6 + 6 * 24 + 24 * 6;
  CHECK(ce.spatial_dense_params == expect);
  CHECK(ce.spatial_dense_params - cb.spatial_dense_params ==
        expect - (36 + 36));
  CHECK(ce.channel_dense_params == cb.channel_dense_params);
}

TEST_CASE("alternate spatial dense parameters equal expansion's") {
  LayerSpec e = make_spec(LayerVariant::expansion, 4, 6, 6, 3, 5, 4, 3);
  LayerSpec a = e;
  a.variant = LayerVariant::alternate;
  CHECK(analytic_layer_cost(a).spatial_dense_params ==
        analytic_layer_cost(e).spatial_dense_params);
  // but two extra PReLU slopes
  CHECK(analytic_layer_cost(a).prelu_params ==
        analytic_layer_cost(e).prelu_params + 2);
}

TEST_CASE("superior parameter count is basic plus one extra channel block") {
  LayerSpec b = make_spec(LayerVariant::basic, 8, 16, 6, 6, 6, 6, 2);
  LayerSpec s = b;
  s.variant = LayerVariant::superior;
  const auto cb = analytic_layer_cost(b);
  const auto cs = analytic_layer_cost(s);
  const int64_t eps = 2, co = 16;
  const int64_t extra_dense = co * eps * co + eps * co * co;
  const int64_t extra_bn = 2 * (eps * co + co);
  CHECK(cs.total_params() ==
        cb.total_params() + extra_dense + extra_bn + 2);
}

TEST_CASE("layer backward zero upstream gives zero grads everywhere") {
  for (LayerVariant v : {LayerVariant::basic, LayerVariant::expansion,
                         LayerVariant::alternate, LayerVariant::superior}) {
    Layer layer(make_spec(v, 3, 3, 4, 4, 4, 4, 2));
    Rng rng(5);
    layer.init(rng);
    auto x = random_tensor<float>(2, 3, 4, 4, rng);
    layer.forward(x, Mode::train);
    layer.zero_grad();
    Tensor4 zeros(2, 3, 4, 4);
    auto gx = layer.backward(zeros);
    for (float g : gx.data) CHECK(g == 0.0f);
    std::vector<ParamRef> refs;
    layer.enumerate(refs, "p");
    for (const auto& r : refs)
      for (size_t i = 0; i < r.count; ++i) CHECK(r.grads[i] == 0.0f);
  }
}

TEST_CASE("two consecutive backwards without zero_grad double the grads") {
  Layer layer(make_spec(LayerVariant::basic, 2, 2, 3, 3, 3, 3, 2));
  Rng rng(6);
  layer.init(rng);
  auto x = random_tensor<float>(2, 2, 3, 3, rng);
  layer.forward(x, Mode::train);
  auto gy = random_tensor<float>(2, 2, 3, 3, rng);

  layer.zero_grad();
  layer.backward(gy);
  std::vector<ParamRef> refs;
  layer.enumerate(refs, "p");
  std::vector<float> once;
  for (const auto& r : refs)
    for (size_t i = 0; i < r.count; ++i) once.push_back(r.grads[i]);

  layer.backward(gy);
  size_t idx = 0;
  for (const auto& r : refs)
    for (size_t i = 0; i < r.count; ++i) CHECK(r.grads[i] == 2.0f * once[idx++]);
}

TEST_CASE("layer backward without forward is a usage error") {
  Layer layer(make_spec(LayerVariant::basic, 2, 2, 3, 3, 3, 3, 2));
  Tensor4 gy(1, 2, 3, 3);
  CHECK_THROWS_AS(layer.backward(gy), usage_error);
  // eval-mode forward does not arm the caches either
  Rng rng(7);
  layer.init(rng);
  auto x = random_tensor<float>(1, 2, 3, 3, rng);
  layer.forward(x, Mode::eval);
  CHECK_THROWS_AS(layer.backward(gy), usage_error);
}

TEST_CASE("all four variants pass finite-difference checks (32/64-bit)") {
  for (auto res : run_gradcheck_suite<float>(101, kFdStepF32, 2)) {
    CAPTURE(res.name);
    CHECK(res.max_err < 1e-3);
  }
  for (auto res : run_gradcheck_suite<double>(101, kFdStepF64, 2)) {
    CAPTURE(res.name);
    CHECK(res.max_err < 1e-6);
  }
}

TEST_CASE("residual rule: zeroed output BN gamma makes channel block identity") {
  for (LayerVariant v : {LayerVariant::basic, LayerVariant::expansion,
                         LayerVariant::alternate}) {
    Layer layer(make_spec(v, 3, 3, 4, 4, 4, 4, 2));  // c_in == c_out
    Rng rng(8);
    layer.init(rng);
    std::fill(layer.channel.bn_out.gamma.begin(), layer.channel.bn_out.gamma.end(),
              0.0f);
    auto x = random_tensor<float>(2, 3, 4, 4, rng);
    auto y = layer.forward(x, Mode::train);
    // channel block collapsed to identity on O: output equals its input O
    CHECK(y.data == layer.channel.cached_in.data);
  }
}

TEST_CASE("forward is bitwise reproducible run to run") {
  for (LayerVariant v : {LayerVariant::basic, LayerVariant::superior}) {
    Layer a(make_spec(v, 3, 5, 6, 6, 6, 6, 2));
    Layer b(make_spec(v, 3, 5, 6, 6, 6, 6, 2));
    Rng ra(9), rb(9);
    a.init(ra);
    b.init(rb);
    Rng rx(10);
    auto x = random_tensor<float>(2, 3, 6, 6, rx);
    auto ya = a.forward(x, Mode::train);
    auto yb = b.forward(x, Mode::train);
    CHECK(ya.data == yb.data);
  }
}
