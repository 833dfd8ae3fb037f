#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace xmlp {

// Central finite differences against analytic gradients.
//
// The caller provides a scalar loss functional of some set of parameter
// blocks (inputs count as blocks too) and the analytic gradients it wants
// checked. Errors are relative with a floor of 1 in the denominator, i.e.
// absolute for small components: |fd - g| / max(1, |fd|, |g|).
//
// A central difference is only meaningful where the function is smooth
// between the two probe points. PReLU introduces kinks at zero, so callers
// working with activations supply `kink_signs`, which reports the signs of
// every kink input under the current parameter values; scalars whose
// perturbation flips any sign are skipped and counted.

template <class T>
struct FdBlock {
  std::string name;
  T* values = nullptr;
  const T* grads = nullptr;
  size_t count = 0;
};

struct FdSummary {
  double max_err = 0.0;
  std::string worst_block;
  size_t worst_index = 0;
  size_t checked = 0;
  size_t skipped = 0;
};

template <class T>
FdSummary fd_check(const std::function<T()>& loss,
                   const std::vector<FdBlock<T>>& blocks, T step,
                   const std::function<std::vector<int8_t>()>& kink_signs = {}) {
  FdSummary s;
  for (const auto& b : blocks) {
    for (size_t i = 0; i < b.count; ++i) {
      const T saved = b.values[i];
      b.values[i] = saved + step;
      const T up = loss();
      std::vector<int8_t> signs_up;
      if (kink_signs) signs_up = kink_signs();
      b.values[i] = saved - step;
      const T down = loss();
      const bool crossed = kink_signs && signs_up != kink_signs();
      b.values[i] = saved;
      if (crossed) {
        ++s.skipped;
        continue;
      }
      ++s.checked;
      const double fd = (static_cast<double>(up) - static_cast<double>(down)) /
                        (2.0 * static_cast<double>(step));
      const double g = static_cast<double>(b.grads[i]);
      const double err =
          std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)});
      if (err > s.max_err) {
        s.max_err = err;
        s.worst_block = b.name;
        s.worst_index = i;
      }
    }
  }
  return s;
}

// Default step sizes for the production path and the 64-bit shadow path.
inline constexpr float kFdStepF32 = 1e-2f;
inline constexpr double kFdStepF64 = 1e-5;

}  // namespace xmlp
