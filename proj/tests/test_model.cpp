#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "xmlp/analysis.hpp"
#include "xmlp/gradcheck_suite.hpp"
#include "xmlp/model.hpp"

using namespace xmlp;
using namespace xmlp::testutil;

TEST_CASE("standard schedule: CIFAR-10 spatial sizes with 8x8 floor") {
  auto spec = make_standard_spec(LayerVariant::basic, 3, 32, 32, 10);
  auto sched = layer_schedule(spec);
  REQUIRE(sched.size() == 13);
  const std::vector<int> expect{32, 32, 16, 16, 8, 8, 8, 8, 8, 8, 8, 8, 8};
  for (size_t i = 0; i < sched.size(); ++i) {
    CHECK(sched[i].h_out == expect[i]);
    CHECK(sched[i].w_out == expect[i]);
  }
  CHECK(sched.back().c_out == 512);
}

TEST_CASE("standard schedule: MNIST padded input has the same spatial path") {
  auto spec = make_standard_spec(LayerVariant::basic, 1, 32, 32, 10);
  auto sched = layer_schedule(spec);
  const std::vector<int> expect{32, 32, 16, 16, 8, 8, 8, 8, 8, 8, 8, 8, 8};
  for (size_t i = 0; i < sched.size(); ++i) CHECK(sched[i].h_out == expect[i]);
}

TEST_CASE("width multiplier 1/4 scales the channel schedule") {
  auto spec = make_standard_spec(LayerVariant::basic, 1, 32, 32, 10, 0.25);
  const std::vector<int> expect{16, 16, 32, 32, 64, 64, 64,
                                128, 128, 128, 128, 128, 128};
  CHECK(spec.channels == expect);
}

TEST_CASE("schedule is monotone: channels non-decreasing, spatial non-increasing") {
  auto spec = make_standard_spec(LayerVariant::basic, 3, 64, 64, 100);
  auto sched = layer_schedule(spec);
  for (size_t i = 0; i < sched.size(); ++i) {
    CHECK(sched[i].c_out >= sched[i].c_in);
    CHECK(sched[i].h_out <= sched[i].h_in);
    CHECK(sched[i].w_out <= sched[i].w_in);
    CHECK(sched[i].h_out >= 8);
  }
}

TEST_CASE("small inputs are never downsampled below the floor") {
  ModelSpec spec;
  spec.c0 = 3;
  spec.h0 = 8;
  spec.w0 = 8;
  spec.channels = {4, 8, 16};
  auto sched = layer_schedule(spec);
  for (const auto& s : sched) {
    CHECK(s.h_out == 8);
    CHECK(s.w_out == 8);
  }
}

TEST_CASE("invalid schedules are config errors") {
  ModelSpec spec;
  spec.channels = {8, 4};  // non-monotone
  CHECK_THROWS_AS(layer_schedule(spec), config_error);
  spec.channels = {};
  CHECK_THROWS_AS(spec.validate(), config_error);
  spec.channels = {0, 2};
  CHECK_THROWS_AS(spec.validate(), config_error);
}

namespace {

ModelSpec tiny_spec(LayerVariant v = LayerVariant::basic) {
  ModelSpec spec;
  spec.variant = v;
  spec.c0 = 2;
  spec.h0 = 6;
  spec.w0 = 6;
  spec.num_classes = 3;
  spec.channels = {3, 3, 6};
  spec.expansion = 2;
  return spec;
}

}  // namespace

TEST_CASE("model forward shape contract and bias-only logits") {
  auto spec = make_standard_spec(LayerVariant::basic, 3, 32, 32, 10, 0.125);
  auto model = build_model(spec, 42);
  model.set_mode(Mode::eval);
  Rng rng(1);
  auto x = random_tensor<float>(4, 3, 32, 32, rng);
  auto logits = model.forward(x);
  CHECK(logits.rows == 4);
  CHECK(logits.cols == 10);

  // zero classifier weight: logits collapse to the bias broadcast
  std::fill(model.classifier.values.begin(), model.classifier.values.end(), 0.0f);
  for (int j = 0; j < 10; ++j) model.classifier_bias[j] = 0.5f * j;
  logits = model.forward(x);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 10; ++j) CHECK(logits.at(i, j) == 0.5f * j);

  Tensor4 bad(1, 3, 16, 16);
  CHECK_THROWS_AS(model.forward(bad), shape_error);
}

TEST_CASE("model enumeration length equals analytic total") {
  for (LayerVariant v : {LayerVariant::basic, LayerVariant::expansion,
                         LayerVariant::alternate, LayerVariant::superior}) {
    auto spec = tiny_spec(v);
    auto model = build_model(spec, 3);
    const auto cost = analytic_model_cost(spec);
    CHECK(model.param_count() == static_cast<size_t>(cost.total_params()));
  }
}

TEST_CASE("model backward: zero grad_logits leaves all grads zero") {
  auto model = build_model(tiny_spec(), 4);
  Rng rng(5);
  auto x = random_tensor<float>(2, 2, 6, 6, rng);
  model.forward(x);
  model.zero_grad();
  Matrix zeros(2, 3);
  model.backward(zeros);
  for (const auto& r : model.enumerate_params())
    for (size_t i = 0; i < r.count; ++i) CHECK(r.grads[i] == 0.0f);
}

TEST_CASE("model backward without forward is a usage error") {
  auto model = build_model(tiny_spec(), 4);
  Matrix g(2, 3);
  CHECK_THROWS_AS(model.backward(g), usage_error);
}

TEST_CASE("tiny model end-to-end gradient check through the loss (64-bit)") {
  auto spec = tiny_spec();
  auto model = build_model_t<double>(spec, 7);
  Rng rng(8);
  Tensor4T<double> x(2, 2, 6, 6);
  for (auto& v : x.data) v = rng.uniform(-1.0f, 1.0f);
  std::vector<int> labels{1, 2};

  auto loss = [&] {
    auto logits = model.forward(x);
    return softmax_cross_entropy(logits, labels).loss;
  };
  model.zero_grad();
  auto logits = model.forward(x);
  auto sm = softmax_cross_entropy(logits, labels);
  auto grad_x = model.backward(sm.grad_logits);

  std::vector<FdBlock<double>> blocks{
      {"x", x.data.data(), grad_x.data.data(), x.numel()}};
  for (auto& r : model.enumerate_params())
    blocks.push_back({r.name, r.values, r.grads, r.count});
  auto signs = [&] { return gradcheck_detail::model_kink_signs(model); };
  auto summary = fd_check<double>(loss, blocks, kFdStepF64, signs);
  CAPTURE(summary.worst_block);
  CHECK(summary.max_err < 1e-6);
  CHECK(summary.checked > 10 * summary.skipped);  // guard must not eat the suite
}

TEST_CASE("eval-mode logits are invariant to batch composition") {
  auto model = build_model(tiny_spec(), 11);
  // push BN running stats away from the defaults first
  Rng rng(12);
  auto warm = random_tensor<float>(4, 2, 6, 6, rng);
  model.set_mode(Mode::train);
  model.forward(warm);
  model.set_mode(Mode::eval);

  auto batch = random_tensor<float>(5, 2, 6, 6, rng);
  auto batch_logits = model.forward(batch);
  for (int i = 0; i < 5; ++i) {
    Tensor4 single(1, 2, 6, 6);
    std::copy(batch.data.begin() + i * single.numel(),
              batch.data.begin() + (i + 1) * single.numel(),
              single.data.begin());
    auto one = model.forward(single);
    for (int j = 0; j < 3; ++j) CHECK(one.at(0, j) == batch_logits.at(i, j));
  }
}

TEST_CASE("deterministic build: same seed gives identical parameters") {
  auto a = build_model(tiny_spec(), 99);
  auto b = build_model(tiny_spec(), 99);
  auto ra = a.enumerate_params();
  auto rb = b.enumerate_params();
  REQUIRE(ra.size() == rb.size());
  for (size_t i = 0; i < ra.size(); ++i) {
    REQUIRE(ra[i].count == rb[i].count);
    for (size_t j = 0; j < ra[i].count; ++j)
      CHECK(ra[i].values[j] == rb[i].values[j]);
  }
}
