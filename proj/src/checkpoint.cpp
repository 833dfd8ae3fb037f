#include "xmlp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace xmlp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

uint32_t crc32(const uint8_t* data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[8] = {'X', 'M', 'L', 'P', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::vector<uint8_t> bytes;

  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  template <class T>
  void put(T v) {
    raw(&v, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void put_floats(const float* p, size_t n) {
    put<uint64_t>(n);
    raw(p, n * sizeof(float));
  }

  // tagged section wrapper
  size_t begin_section(const char tag[4]) {
    raw(tag, 4);
    put<uint64_t>(0);  // patched later
    return bytes.size();
  }
  void end_section(size_t payload_start) {
    const uint64_t len = bytes.size() - payload_start;
    std::memcpy(bytes.data() + payload_start - sizeof(uint64_t), &len,
                sizeof(uint64_t));
  }
};

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  std::string path;

  void need(size_t n) const {
    if (pos + n > bytes.size())
      throw parse_error(path + ": checkpoint truncated at byte offset " +
                        std::to_string(pos));
  }
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  std::string get_string() {
    const uint32_t n = get<uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  std::vector<float> get_floats() {
    const uint64_t n = get<uint64_t>();
    std::vector<float> v(n);
    raw(v.data(), n * sizeof(float));
    return v;
  }
  void expect_tag(const char tag[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0)
      throw parse_error(path + ": expected section '" + std::string(tag, 4) +
                        "' at byte offset " + std::to_string(pos - 4));
    get<uint64_t>();  // section length (informational)
  }
};

}  // namespace

void save_checkpoint(Model& model, const TrainState& state,
                     const TrainConfig& cfg, const NormStats& stats,
                     const std::string& path) {
  Writer w;
  w.raw(kMagic, 8);
  w.put<uint32_t>(kVersion);

  {
    auto s = w.begin_section("SPEC");
    const ModelSpec& ms = model.spec;
    w.put<uint8_t>(static_cast<uint8_t>(ms.variant));
    w.put<int32_t>(ms.c0);
    w.put<int32_t>(ms.h0);
    w.put<int32_t>(ms.w0);
    w.put<int32_t>(ms.num_classes);
    w.put<double>(ms.width_mult);
    w.put<int32_t>(ms.expansion);
    w.put<float>(ms.bn_momentum);
    w.put<float>(ms.bn_eps);
    w.put<uint32_t>(static_cast<uint32_t>(ms.channels.size()));
    for (int c : ms.channels) w.put<int32_t>(c);
    w.end_section(s);
  }
  {
    auto s = w.begin_section("TCFG");
    w.put<int32_t>(cfg.batch_size);
    w.put<float>(cfg.momentum);
    w.put<float>(cfg.weight_decay);
    w.put<float>(cfg.lr_init);
    w.put<float>(cfg.lr_min);
    w.put<float>(cfg.lr_decay_factor);
    w.put<int32_t>(cfg.plateau_window);
    w.put<float>(cfg.plateau_threshold);
    w.put<int32_t>(cfg.epochs);
    w.put<uint64_t>(cfg.seed);
    w.end_section(s);
  }
  {
    auto s = w.begin_section("PRMS");
    auto refs = model.enumerate_params();
    uint64_t total = 0;
    for (const auto& r : refs) total += r.count;
    w.put<uint64_t>(total);
    for (const auto& r : refs) w.raw(r.values, r.count * sizeof(float));
    w.end_section(s);
  }
  {
    auto s = w.begin_section("BNRS");
    auto bns = model.collect_bn();
    w.put<uint32_t>(static_cast<uint32_t>(bns.size()));
    for (auto* bn : bns) {
      w.put<uint32_t>(static_cast<uint32_t>(bn->features));
      w.raw(bn->running_mean.data(), bn->running_mean.size() * sizeof(float));
      w.raw(bn->running_var.data(), bn->running_var.size() * sizeof(float));
    }
    w.end_section(s);
  }
  {
    auto s = w.begin_section("OPTS");
    w.put_floats(state.momentum_buf.data(), state.momentum_buf.size());
    w.put<float>(state.lr);
    w.put<int32_t>(state.epoch);
    w.put<int32_t>(state.last_decay_epoch);
    w.put_floats(state.loss_history.data(), state.loss_history.size());
    w.put<float>(state.best_test_acc);
    w.end_section(s);
  }
  {
    auto s = w.begin_section("RNGS");
    w.put_string(state.rng.serialize());
    w.end_section(s);
  }
  {
    auto s = w.begin_section("NSTA");
    w.put<uint32_t>(static_cast<uint32_t>(stats.mean.size()));
    w.raw(stats.mean.data(), stats.mean.size() * sizeof(float));
    w.raw(stats.std.data(), stats.std.size() * sizeof(float));
    w.end_section(s);
  }

  const uint32_t crc = crc32(w.bytes.data(), w.bytes.size());
  w.raw("CRC3", 4);
  w.put<uint32_t>(crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(w.bytes.data()),
          static_cast<std::streamsize>(w.bytes.size()));
  if (!f) throw io_error("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());

  if (bytes.size() < 8 + 4 + 8)
    throw parse_error(path + ": too short to be a checkpoint");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw parse_error(path + ": bad magic at byte offset 0");

  // trailer check first: last 8 bytes are "CRC3" + crc32 of the rest
  const size_t trailer = bytes.size() - 8;
  if (std::memcmp(bytes.data() + trailer, "CRC3", 4) != 0)
    throw parse_error(path + ": missing CRC trailer");
  uint32_t stored;
  std::memcpy(&stored, bytes.data() + trailer + 4, 4);
  const uint32_t computed = crc32(bytes.data(), trailer);
  if (stored != computed)
    throw parse_error(path + ": checksum mismatch (stored " +
                      std::to_string(stored) + ", computed " +
                      std::to_string(computed) + ")");

  Reader r{bytes, 0, path};
  r.pos = 8;
  const uint32_t version = r.get<uint32_t>();
  if (version != kVersion)
    throw parse_error(path + ": unsupported checkpoint version " +
                      std::to_string(version));

  LoadedCheckpoint out;
  r.expect_tag("SPEC");
  ModelSpec ms;
  ms.variant = static_cast<LayerVariant>(r.get<uint8_t>());
  ms.c0 = r.get<int32_t>();
  ms.h0 = r.get<int32_t>();
  ms.w0 = r.get<int32_t>();
  ms.num_classes = r.get<int32_t>();
  ms.width_mult = r.get<double>();
  ms.expansion = r.get<int32_t>();
  ms.bn_momentum = r.get<float>();
  ms.bn_eps = r.get<float>();
  ms.channels.resize(r.get<uint32_t>());
  for (auto& c : ms.channels) c = r.get<int32_t>();

  r.expect_tag("TCFG");
  out.cfg.batch_size = r.get<int32_t>();
  out.cfg.momentum = r.get<float>();
  out.cfg.weight_decay = r.get<float>();
  out.cfg.lr_init = r.get<float>();
  out.cfg.lr_min = r.get<float>();
  out.cfg.lr_decay_factor = r.get<float>();
  out.cfg.plateau_window = r.get<int32_t>();
  out.cfg.plateau_threshold = r.get<float>();
  out.cfg.epochs = r.get<int32_t>();
  out.cfg.seed = r.get<uint64_t>();

  out.model = build_model(ms, 0);

  r.expect_tag("PRMS");
  const uint64_t total = r.get<uint64_t>();
  auto refs = out.model.enumerate_params();
  uint64_t expect = 0;
  for (const auto& ref : refs) expect += ref.count;
  if (total != expect)
    throw parse_error(path + ": parameter count " + std::to_string(total) +
                      " does not match spec-built model (" +
                      std::to_string(expect) + ")");
  for (auto& ref : refs) r.raw(ref.values, ref.count * sizeof(float));

  r.expect_tag("BNRS");
  auto bns = out.model.collect_bn();
  const uint32_t n_bn = r.get<uint32_t>();
  if (n_bn != bns.size())
    throw parse_error(path + ": batch-norm section count mismatch");
  for (auto* bn : bns) {
    const uint32_t features = r.get<uint32_t>();
    if (features != static_cast<uint32_t>(bn->features))
      throw parse_error(path + ": batch-norm feature extent mismatch");
    r.raw(bn->running_mean.data(), bn->running_mean.size() * sizeof(float));
    r.raw(bn->running_var.data(), bn->running_var.size() * sizeof(float));
  }

  r.expect_tag("OPTS");
  out.state.momentum_buf = r.get_floats();
  out.state.lr = r.get<float>();
  out.state.epoch = r.get<int32_t>();
  out.state.last_decay_epoch = r.get<int32_t>();
  out.state.loss_history = r.get_floats();
  out.state.best_test_acc = r.get<float>();

  r.expect_tag("RNGS");
  out.state.rng.deserialize(r.get_string());

  r.expect_tag("NSTA");
  const uint32_t n_chan = r.get<uint32_t>();
  out.stats.mean.resize(n_chan);
  out.stats.std.resize(n_chan);
  r.raw(out.stats.mean.data(), n_chan * sizeof(float));
  r.raw(out.stats.std.data(), n_chan * sizeof(float));

  return out;
}

}  // namespace xmlp
