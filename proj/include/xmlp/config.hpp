#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xmlp/errors.hpp"
#include "xmlp/layer.hpp"
#include "xmlp/optim.hpp"

namespace xmlp {

// Fully resolved run configuration: defaults, then config-file keys, then
// command-line flag overrides. Unknown keys are hard errors, and the
// resolved form is echoed into the output directory so any run can be
// reproduced exactly.
struct RunConfig {
  std::string dataset = "mnist";  // mnist | kmnist | fashion-mnist | cifar10
  std::string data_dir = "data/mnist";
  std::string out_dir = "out";
  std::string checkpoint;  // resume / eval / restore source

  std::string variant = "basic";  // basic | expansion | alternate | superior
  double width_mult = 1.0;
  int expansion = 4;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  int epochs = 40;
  int batch_size = 64;
  uint64_t seed = 1;
  double lr_init = 1e-2;
  double lr_min = 1e-4;
  double lr_decay_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int plateau_window = 5;
  double plateau_threshold = 1e-3;

  int train_limit = 0;  // 0 = full split
  int test_limit = 0;
  int eval_batch = 256;
  int save_every = 1;

  int threads = 0;  // 0 = hardware default
  std::string layers = "0";  // restore-kernels: comma-separated layer indices
  int crop_rows = 8;
  int crop_cols = 8;
  bool fold_bn = false;
  int fold_channel = 0;

  LayerVariant layer_variant() const;
  TrainConfig train_config() const;
  std::vector<int> layer_indices() const;
  void validate() const;
};

struct ConfigField {
  std::string key;   // config-file name (snake_case)
  std::string flag;  // CLI long option (kebab-case)
  std::string desc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigField>& config_schema();

// key = value lines, '#' comments; unknown keys are config errors.
void apply_config_file(RunConfig& cfg, const std::string& path);
void apply_key_value(RunConfig& cfg, const std::string& key,
                     const std::string& value);

// The resolved configuration as config-file text.
std::string render_config(const RunConfig& cfg);

}  // namespace xmlp
