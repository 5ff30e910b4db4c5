#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace cnmix {

// Counter-free xoshiro256** generator with splitmix64 seeding.
// All sampling is built on top of next_u64() so that streams are stable
// across platforms and standard-library versions.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased integer in [0, bound); bound must be >= 1.
  std::uint32_t uniform_int(std::uint32_t bound);

  bool bernoulli(double p);

  // Standard normal via the polar method (no cached spare).
  double normal();

  // Beta(a, b) with a, b > 0. Beta(1, 1) is drawn as a single uniform.
  double beta(double a, double b);

  // Uniform random permutation of [0, n) by Fisher-Yates.
  std::vector<int> permutation(int n);

private:
  double gamma(double shape);
  std::uint64_t state_[4];
};

// Deterministic stream derivation: every consumer gets an independent Rng
// keyed by (root seed, purpose tags). Deriving one stream never advances
// any other, which is what makes checkpoint resume and degenerate-mode
// twin runs exact.
class SeedTree {
public:
  explicit SeedTree(std::uint64_t root) : root_(root) {}

  std::uint64_t root() const { return root_; }

  Rng stream(std::initializer_list<std::uint64_t> tags) const;

  template <class... Tags>
  Rng stream(Tags... tags) const {
    return stream({static_cast<std::uint64_t>(tags)...});
  }

private:
  std::uint64_t root_;
};

namespace seed_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t distort = 3;
inline constexpr std::uint64_t mix = 4;
inline constexpr std::uint64_t synth = 5;
inline constexpr std::uint64_t teacher = 6;
} // namespace seed_tag

} // namespace cnmix
