#pragma once

// Seedable, splittable random streams.
//
// Every stochastic entry point takes an explicit RngStream. Streams for
// independent tasks are derived from a master seed with splitmix64, so a run
// is a pure function of (configuration, master seed) no matter how trials are
// scheduled across threads.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace prefix_oracle {

/// splitmix64 finalizer; used to derive child seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash a seed together with a path of stream indices.
inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t idx : path) h = splitmix64(h ^ splitmix64(idx + 0x632be59bd9b4e019ULL));
  return h;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), rejection-sampled.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
  }

  bool coin() { return (engine_() >> 63) != 0; }

  /// Independent child stream; does not advance this stream.
  RngStream split(std::uint64_t index) const { return RngStream(derive_seed(seed_, {index})); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace prefix_oracle
