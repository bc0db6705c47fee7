#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace srtrl {

/// Seeded generator that can derive independent named substreams, so that
/// e.g. the mask stream never perturbs the data or initialization streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::mt19937_64& engine() noexcept { return engine_; }

  /// Child stream keyed by name; depends only on (seed, name).
  Rng split(std::string_view name) const { return Rng(mix(seed_ ^ hash(name))); }

  /// Child stream keyed by an integer, e.g. a run or batch index.
  Rng split(std::uint64_t key) const { return Rng(mix(seed_ + 0x9e3779b97f4a7c15ULL * (key + 1))); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  /// Uniform integer in [0, n).
  std::int64_t uniform_index(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }

 private:
  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // FNV-1a
  static std::uint64_t hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace srtrl
