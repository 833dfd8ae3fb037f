#include "xmlp/config.hpp"

#include <fstream>
#include <sstream>

namespace xmlp {

namespace {

long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': expected integer, got '" + v + "'");
  }
}

double parse_float(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("key '" + key + "': expected boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

#define STR_FIELD(member) \
  [](RunConfig& c, const std::string& v) { c.member = v; }, \
      [](const RunConfig& c) { return c.member; }
#define INT_FIELD(member) \
  [](RunConfig& c, const std::string& v) { \
    c.member = static_cast<decltype(c.member)>(parse_int(#member, v)); \
  }, \
      [](const RunConfig& c) { return std::to_string(c.member); }
#define FLOAT_FIELD(member) \
  [](RunConfig& c, const std::string& v) { c.member = parse_float(#member, v); }, \
      [](const RunConfig& c) { \
        std::ostringstream os; \
        os << c.member; \
        return os.str(); \
      }
#define BOOL_FIELD(member) \
  [](RunConfig& c, const std::string& v) { c.member = parse_bool(#member, v); }, \
      [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }

}  // namespace

const std::vector<ConfigField>& config_schema() {
  static const std::vector<ConfigField> schema{
      {"dataset", "dataset", "dataset name: mnist|kmnist|fashion-mnist|cifar10",
       STR_FIELD(dataset)},
      {"data_dir", "data-dir", "directory holding the dataset files",
       STR_FIELD(data_dir)},
      {"out_dir", "out", "output directory (all writes go here)",
       STR_FIELD(out_dir)},
      {"checkpoint", "checkpoint", "checkpoint path to load/resume",
       STR_FIELD(checkpoint)},
      {"variant", "variant", "layer variant: basic|expansion|alternate|superior",
       STR_FIELD(variant)},
      {"width_mult", "width-mult", "channel schedule multiplier",
       FLOAT_FIELD(width_mult)},
      {"expansion", "expansion", "hidden expansion factor", INT_FIELD(expansion)},
      {"bn_momentum", "bn-momentum", "batch-norm running-stat momentum",
       FLOAT_FIELD(bn_momentum)},
      {"bn_eps", "bn-eps", "batch-norm epsilon", FLOAT_FIELD(bn_eps)},
      {"epochs", "epochs", "training epochs", INT_FIELD(epochs)},
      {"batch_size", "batch-size", "minibatch size", INT_FIELD(batch_size)},
      {"seed", "seed", "RNG seed", INT_FIELD(seed)},
      {"lr_init", "lr-init", "initial learning rate", FLOAT_FIELD(lr_init)},
      {"lr_min", "lr-min", "minimal learning rate", FLOAT_FIELD(lr_min)},
      {"lr_decay_factor", "lr-decay-factor", "plateau decay divisor",
       FLOAT_FIELD(lr_decay_factor)},
      {"momentum", "momentum", "SGD momentum", FLOAT_FIELD(momentum)},
      {"weight_decay", "weight-decay", "L2 weight decay (dense + classifier)",
       FLOAT_FIELD(weight_decay)},
      {"plateau_window", "plateau-window", "epochs per plateau window",
       INT_FIELD(plateau_window)},
      {"plateau_threshold", "plateau-threshold",
       "relative improvement below which lr decays", FLOAT_FIELD(plateau_threshold)},
      {"train_limit", "train-limit", "use only the first N train samples (0=all)",
       INT_FIELD(train_limit)},
      {"test_limit", "test-limit", "use only the first N test samples (0=all)",
       INT_FIELD(test_limit)},
      {"eval_batch", "eval-batch", "evaluation batch size", INT_FIELD(eval_batch)},
      {"save_every", "save-every", "checkpoint every N epochs",
       INT_FIELD(save_every)},
      {"threads", "threads", "compute threads (0 = hardware)", INT_FIELD(threads)},
      {"layers", "layers", "restore-kernels: comma-separated layer indices",
       STR_FIELD(layers)},
      {"crop_rows", "crop-rows", "kernel grid rows (central crop)",
       INT_FIELD(crop_rows)},
      {"crop_cols", "crop-cols", "kernel grid cols (central crop)",
       INT_FIELD(crop_cols)},
      {"fold_bn", "fold-bn", "fold eval-mode BN scales into restored kernels",
       BOOL_FIELD(fold_bn)},
      {"fold_channel", "fold-channel", "channel used for BN folding",
       INT_FIELD(fold_channel)},
  };
  return schema;
}

void apply_key_value(RunConfig& cfg, const std::string& key,
                     const std::string& value) {
  for (const auto& f : config_schema()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw config_error("unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(path + ":" + std::to_string(lineno) +
                         ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_key_value(cfg, key, value);
  }
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : config_schema()) os << f.key << " = " << f.get(cfg) << "\n";
  return os.str();
}

LayerVariant RunConfig::layer_variant() const {
  if (variant == "basic") return LayerVariant::basic;
  if (variant == "expansion") return LayerVariant::expansion;
  if (variant == "alternate") return LayerVariant::alternate;
  if (variant == "superior") return LayerVariant::superior;
  throw config_error("unknown variant '" + variant +
                     "' (want basic|expansion|alternate|superior)");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.momentum = static_cast<float>(momentum);
  t.weight_decay = static_cast<float>(weight_decay);
  t.lr_init = static_cast<float>(lr_init);
  t.lr_min = static_cast<float>(lr_min);
  t.lr_decay_factor = static_cast<float>(lr_decay_factor);
  t.plateau_window = plateau_window;
  t.plateau_threshold = static_cast<float>(plateau_threshold);
  t.epochs = epochs;
  t.seed = seed;
  t.validate();
  return t;
}

std::vector<int> RunConfig::layer_indices() const {
  std::vector<int> out;
  std::stringstream ss(layers);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    out.push_back(static_cast<int>(parse_int("layers", tok)));
  }
  if (out.empty()) throw config_error("key 'layers': no layer indices given");
  return out;
}

void RunConfig::validate() const {
  layer_variant();
  train_config();
  if (dataset != "mnist" && dataset != "kmnist" && dataset != "fashion-mnist" &&
      dataset != "cifar10")
    throw config_error("unknown dataset '" + dataset +
                       "' (want mnist|kmnist|fashion-mnist|cifar10)");
  if (width_mult <= 0) throw config_error("width_mult must be > 0");
  if (expansion < 1) throw config_error("expansion must be >= 1");
  if (threads < 0) throw config_error("threads must be >= 0");
  if (crop_rows < 1 || crop_cols < 1)
    throw config_error("crop extents must be >= 1");
  if (train_limit < 0 || test_limit < 0)
    throw config_error("subset limits must be >= 0");
  if (save_every < 1) throw config_error("save_every must be >= 1");
}

}  // namespace xmlp
