#pragma once

#include <cstdint>

namespace mergeq {

// splitmix64 stream. A plain copyable value: copying a world forks its
// stream, and output is identical on every platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n). Multiply-shift; bias is < 2^-32 for the n used here.
  std::uint32_t uniform_int(std::uint32_t n) {
    return static_cast<std::uint32_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t state_;
};

// Derives an independent stream from (base, index); used wherever one seed
// fans out into per-episode, per-step, or per-connection streams.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  Rng r(base ^ (0x9E3779B97F4A7C15ull * (index + 1)));
  return r.next_u64();
}

}  // namespace mergeq
