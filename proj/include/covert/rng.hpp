#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace covert {

/// Seeded random source.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// implements its own distributions, so draws are bit-identical across
/// standard library implementations. Named substreams derive independent
/// seeds from a master seed, e.g. `Rng(7).substream("channel")`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform on (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  /// Uniform integer on the closed range [lo, hi]. Unbiased (rejection).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  std::uint64_t seed() const { return seed_; }

  /// Deterministic child stream; independent of how much this stream has
  /// been consumed.
  Rng substream(std::string_view name) const;

  /// Engine state as text, for checkpoints.
  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used for seed derivation.
std::uint64_t mix64(std::uint64_t x);

}  // namespace covert
