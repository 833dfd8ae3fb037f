#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmlp/data.hpp"
#include "xmlp/model.hpp"

namespace xmlp {

struct TrainConfig {
  int batch_size = 64;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float lr_init = 1e-2f;
  float lr_min = 1e-4f;
  float lr_decay_factor = 10.0f;
  int plateau_window = 5;
  float plateau_threshold = 1e-3f;
  int epochs = 40;
  uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (lr_init <= 0 || lr_min <= 0) throw config_error("learning rates must be > 0");
    if (lr_min > lr_init) throw config_error("lr_min must be <= lr_init");
    if (lr_decay_factor <= 1) throw config_error("lr_decay_factor must be > 1");
    if (momentum < 0 || momentum >= 1) throw config_error("momentum must be in [0,1)");
    if (weight_decay < 0) throw config_error("weight_decay must be >= 0");
    if (plateau_window < 1) throw config_error("plateau_window must be >= 1");
    if (epochs < 0) throw config_error("epochs must be >= 0");
  }
};

struct TrainState {
  std::vector<float> momentum_buf;  // flat, aligned with enumerate_params()
  float lr = 1e-2f;
  int epoch = 0;           // completed epochs
  int last_decay_epoch = -1 << 20;
  std::vector<float> loss_history;  // epoch-mean train loss per epoch
  float best_test_acc = 0.0f;
  Rng rng;                 // shuffle + augmentation stream

  void init(Model& model, const TrainConfig& cfg) {
    momentum_buf.assign(model.param_count(), 0.0f);
    lr = cfg.lr_init;
    epoch = 0;
    last_decay_epoch = -1 << 20;
    loss_history.clear();
    best_test_acc = 0.0f;
    rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  }
};

// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v.
// Weight decay applies to dense maps and the classifier, never to BN
// affines or PReLU slopes. Non-finite gradients abort with the parameter
// name.
void sgd_step(std::vector<ParamRef>& params, TrainState& state,
              const TrainConfig& cfg);

// Plateau rule on the epoch-mean train loss history: once window+1 epochs
// exist, compare the mean of the last `window` entries against the same
// window shifted one epoch back; relative improvement below the threshold
// divides lr by the decay factor (clamped at lr_min), with a cooldown of
// `window` epochs between decays.
float lr_schedule_step(TrainState& state, const TrainConfig& cfg);

struct EpochStats {
  float mean_loss = 0.0f;
  float accuracy = 0.0f;
};

EpochStats train_epoch(Model& model, const Dataset& train, const NormStats& stats,
                       const AugmentPolicy& policy, const TrainConfig& cfg,
                       TrainState& state);

float evaluate(Model& model, const Dataset& test, const NormStats& stats,
               int batch_size = 256);

}  // namespace xmlp
