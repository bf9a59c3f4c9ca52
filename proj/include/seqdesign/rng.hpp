#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace seqdesign {

/// splitmix64 finalizer; used to derive independent stream seeds from
/// (base seed, key...) tuples so streams are indexed rather than consumed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(base);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Portable random stream: the uniform mapping is fixed here rather than
/// left to the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform deviate on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// +1 with probability p, else -1.
  int sign_with_prob(double p) { return uniform() < p ? 1 : -1; }

  Rng split() { return Rng(mix64(next())); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace seqdesign
