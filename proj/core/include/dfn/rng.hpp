#pragma once

#include <cstdint>
#include <string>

#include <random>

namespace dfn {

// Deterministic random source. The engine is mt19937_64 and every
// distribution transform is implemented here by hand, so a given seed
// produces the same draw sequence on every platform and standard library.
// Consumers must never pull std::*_distribution over this engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], inclusive, rejection-sampled (no modulo bias).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller; draws two uniforms and caches the spare.
  double normal();
  double normal(double mean, double stddev);

  // Full state round-trip, including the cached Box-Muller spare, so a
  // restored stream continues exactly where it stopped.
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  // Stateless child-seed derivation (splitmix64 finalizer). Used to give
  // every sample of a dataset its own independent stream.
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

  bool operator==(const Rng& other) const {
    return engine_ == other.engine_ && have_spare_ == other.have_spare_ &&
           spare_ == other.spare_;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dfn
