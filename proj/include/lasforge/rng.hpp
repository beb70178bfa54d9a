#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace lasforge {

// Every random quantity in a run is drawn from a stream derived from the one
// root seed: seed(root, purpose, a, b) = splitmix64 chain over the four words.
// (a, b) are usually (epoch, batch), so each batch owns independent streams
// and skipping work in one code path never shifts randomness in another.
enum class Stream : std::uint64_t {
  data = 1,
  split = 2,
  init_target = 3,
  init_strategy = 4,
  shuffle = 5,
  sampling = 6,
  attack = 7,
  lookahead_attack = 8,
  evaluation = 9,
  user = 10,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, Stream purpose, std::uint64_t a = 0,
                          std::uint64_t b = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0)
      : engine_(derive_seed(root, purpose, a, b)) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace lasforge
