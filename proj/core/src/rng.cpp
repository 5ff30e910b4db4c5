#include "cnmix/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cnmix {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint32_t Rng::uniform_int(std::uint32_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_int: bound must be >= 1");
  const std::uint64_t span = UINT64_C(1) << 32;
  const std::uint64_t limit = (span / bound) * bound;
  for (;;) {
    const std::uint64_t r = next_u64() >> 32;
    if (r < limit) return static_cast<std::uint32_t>(r % bound);
  }
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::normal() {
  for (;;) {
    const double u = 2.0 * uniform() - 1.0;
    const double v = 2.0 * uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double Rng::gamma(double shape) {
  // Marsaglia-Tsang; shapes below one use the boost G(a) = G(a+1) U^{1/a}.
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 1e-300, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("beta: shape parameters must be positive");
  if (a == 1.0 && b == 1.0) return uniform();
  const double x = gamma(a);
  const double y = gamma(b);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

std::vector<int> Rng::permutation(int n) {
  if (n < 0) throw std::invalid_argument("permutation: n must be >= 0");
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform_int(static_cast<std::uint32_t>(i + 1)));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

Rng SeedTree::stream(std::initializer_list<std::uint64_t> tags) const {
  std::uint64_t h = root_;
  std::uint64_t x = h;
  h = splitmix64(x);
  for (std::uint64_t tag : tags) {
    x = h ^ (tag + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    h = splitmix64(x);
  }
  return Rng(h);
}

} // namespace cnmix
