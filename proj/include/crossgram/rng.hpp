#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace crossgram {

// Gaussian sampler built on mt19937 with an explicit Box-Muller transform.
// mt19937's output sequence is pinned by the standard, while
// std::normal_distribution is not, so seeded runs and committed fixture
// files stay byte-stable across standard library implementations.
class GaussianSampler {
public:
  explicit GaussianSampler(uint64_t seed)
      : gen_(static_cast<std::mt19937::result_type>(seed)) {}

  double next() {
    if (hasSpare_) {
      hasSpare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite; u2 in [0,1).
    const double u1 = (static_cast<double>(gen_()) + 1.0) * 0x1p-32;
    const double u2 = static_cast<double>(gen_()) * 0x1p-32;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    hasSpare_ = true;
    return radius * std::cos(angle);
  }

  std::mt19937& engine() { return gen_; }

private:
  std::mt19937 gen_;
  bool hasSpare_ = false;
  double spare_ = 0.0;
};

} // namespace crossgram
