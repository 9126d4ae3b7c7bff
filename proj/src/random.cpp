#include "mappg/random.hpp"

namespace mappg {

int sample_categorical(Rng& rng, std::span<const double> probs) {
  const double r = uniform_real(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<int>(i);
  }
  // Rounding can leave acc slightly below 1; fall back to the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace mappg
