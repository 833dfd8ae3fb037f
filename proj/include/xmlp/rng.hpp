#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace xmlp {

// Seeded RNG built on std::mt19937 (whose output sequence is fixed by the
// standard). The uniform mappings are hand-rolled because the standard
// distributions are implementation-defined, which would break cross-stdlib
// reproducibility of seeded runs.
class Rng {
 public:
  Rng() : gen_(0) {}
  explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed)) {}

  // Uniform in [0, 1) with 24 bits of mantissa entropy.
  float uniform() {
    return static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f);
  }

  double uniform_double() {
    uint64_t hi = gen_();
    uint64_t lo = gen_();
    return static_cast<double>(((hi << 32) | lo) >> 11) * (1.0 / 9007199254740992.0);
  }

  // Uniform in [lo, hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Modulo bias is < 2^-32 * n, irrelevant
  // for the dataset-scale n used here.
  uint32_t uniform_int(uint32_t n) { return n <= 1 ? 0 : gen_() % n; }

  bool bernoulli(float p) { return uniform() < p; }

  // Fisher-Yates; std::shuffle is implementation-defined.
  template <class Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint32_t next_u32() { return gen_(); }

  // mt19937 has a standardized text representation; used by checkpoints.
  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  std::mt19937 gen_;
};

}  // namespace xmlp
