#include "xmlp/optim.hpp"

#include <cmath>
#include <numeric>

namespace xmlp {

void sgd_step(std::vector<ParamRef>& params, TrainState& state,
              const TrainConfig& cfg) {
  size_t offset = 0;
  for (auto& p : params) {
    const bool decay = weight_decay_applies(p.kind) && cfg.weight_decay > 0.0f;
    float* v = state.momentum_buf.data() + offset;
    for (size_t i = 0; i < p.count; ++i) {
      const float g = p.grads[i];
      if (!std::isfinite(g))
        throw numeric_error("non-finite gradient in parameter '" + p.name +
                            "' at index " + std::to_string(i));
      const float update = g + (decay ? cfg.weight_decay * p.values[i] : 0.0f);
      v[i] = cfg.momentum * v[i] + update;
      p.values[i] -= state.lr * v[i];
    }
    offset += p.count;
  }
  if (offset != state.momentum_buf.size())
    throw usage_error("sgd_step: momentum buffer does not match parameters");
}

float lr_schedule_step(TrainState& state, const TrainConfig& cfg) {
  const int w = cfg.plateau_window;
  const int n = static_cast<int>(state.loss_history.size());
  if (n >= w + 1 && n - state.last_decay_epoch > w && state.lr > cfg.lr_min) {
    double cur = 0.0, prev = 0.0;
    for (int i = n - w; i < n; ++i) cur += state.loss_history[i];
    for (int i = n - w - 1; i < n - 1; ++i) prev += state.loss_history[i];
    cur /= w;
    prev /= w;
    const double improvement = (prev - cur) / std::max(std::abs(prev), 1e-12);
    if (improvement < cfg.plateau_threshold) {
      state.lr = std::max(state.lr / cfg.lr_decay_factor, cfg.lr_min);
      state.last_decay_epoch = n;
    }
  }
  return state.lr;
}

EpochStats train_epoch(Model& model, const Dataset& train, const NormStats& stats,
                       const AugmentPolicy& policy, const TrainConfig& cfg,
                       TrainState& state) {
  if (train.count == 0) throw config_error("train_epoch: empty dataset");
  model.set_mode(Mode::train);
  auto params = model.enumerate_params();

  std::vector<int> indices(train.count);
  std::iota(indices.begin(), indices.end(), 0);
  state.rng.shuffle(indices);

  double loss_sum = 0.0;
  long correct = 0;
  const AugmentPolicy* pol = policy.active() ? &policy : nullptr;
  for (size_t begin = 0; begin < indices.size();
       begin += static_cast<size_t>(cfg.batch_size)) {
    const size_t end =
        std::min(indices.size(), begin + static_cast<size_t>(cfg.batch_size));
    auto x = make_batch(train, indices, begin, end, stats, pol, &state.rng);
    std::vector<int> labels(end - begin);
    for (size_t i = begin; i < end; ++i) labels[i - begin] = train.labels[indices[i]];

    auto logits = model.forward(x);
    auto sm = softmax_cross_entropy(logits, labels);
    loss_sum += static_cast<double>(sm.loss) * static_cast<double>(end - begin);
    for (int i = 0; i < logits.rows; ++i) {
      int arg = 0;
      for (int j = 1; j < logits.cols; ++j)
        if (logits.at(i, j) > logits.at(i, arg)) arg = j;
      if (arg == labels[i]) ++correct;
    }

    model.zero_grad();
    model.backward(sm.grad_logits);
    sgd_step(params, state, cfg);
  }

  EpochStats s;
  s.mean_loss = static_cast<float>(loss_sum / train.count);
  s.accuracy = static_cast<float>(correct) / static_cast<float>(train.count);
  return s;
}

float evaluate(Model& model, const Dataset& test, const NormStats& stats,
               int batch_size) {
  if (test.count == 0) throw config_error("evaluate: empty dataset");
  model.set_mode(Mode::eval);
  std::vector<int> indices(test.count);
  std::iota(indices.begin(), indices.end(), 0);
  long correct = 0;
  for (size_t begin = 0; begin < indices.size();
       begin += static_cast<size_t>(batch_size)) {
    const size_t end =
        std::min(indices.size(), begin + static_cast<size_t>(batch_size));
    auto x = make_batch(test, indices, begin, end, stats, nullptr, nullptr);
    auto logits = model.forward(x);
    for (int i = 0; i < logits.rows; ++i) {
      int arg = 0;
      for (int j = 1; j < logits.cols; ++j)
        if (logits.at(i, j) > logits.at(i, arg)) arg = j;
      if (arg == test.labels[indices[begin + i]]) ++correct;
    }
  }
  model.set_mode(Mode::train);
  return static_cast<float>(correct) / static_cast<float>(test.count);
}

}  // namespace xmlp
