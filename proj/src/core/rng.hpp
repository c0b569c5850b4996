#pragma once

#include <cstdint>
#include <random>

namespace ksos {

// Named substreams derived from one root seed. Consumers draw from their own
// stream so adding a new consumer never perturbs the others.
enum class Stream : std::uint64_t {
  generation = 1,
  fold_split = 2,
  bootstrap = 3,
  locations = 4,
  draws = 5,
  gp_starts = 6,
  instances = 7,
  mi_jitter = 8,
};

std::uint64_t mix64(std::uint64_t z);
std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t counter = 0);

// mt19937_64 engine with hand-rolled variate transforms. The standard fixes
// the engine's output sequence but not the distributions', so the transforms
// live here to keep results identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  static Rng stream(std::uint64_t root, Stream id, std::uint64_t counter = 0) {
    return Rng(derive_seed(root, id, counter));
  }

  std::uint64_t next_u64() { return eng_(); }

  // uniform on (0, 1]
  double uniform01() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, one variate per call
  double normal();

  // rate-1 exponential
  double exponential();

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 eng_;
};

}  // namespace ksos
