#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mappg {

using Rng = std::mt19937_64;

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi_inclusive) {
  return std::uniform_int_distribution<int>(lo, hi_inclusive)(rng);
}

/// Index drawn from an (already normalized) probability vector.
int sample_categorical(Rng& rng, std::span<const double> probs);

}  // namespace mappg
