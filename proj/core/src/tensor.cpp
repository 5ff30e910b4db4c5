#include "cnmix/tensor.hpp"

#include <cmath>

namespace cnmix {

std::uint64_t fnv1a64(const void* data, std::size_t nbytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < nbytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool all_finite(std::span<const float> xs) {
  for (float x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

} // namespace cnmix
