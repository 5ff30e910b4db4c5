#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cnmix {

// Dense rank-4 batch tensor, NCHW, row-major, float storage.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0f) {}

  std::size_t size() const { return v.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  float* sample(int i) { return v.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const {
    return v.data() + static_cast<std::size_t>(i) * sample_size();
  }

  float& at(int i, int ci, int y, int x) {
    return v[((static_cast<std::size_t>(i) * c + ci) * h + y) * w + x];
  }
  float at(int i, int ci, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + ci) * h + y) * w + x];
  }
};

// Dense row-major matrix.
template <class T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}

  std::size_t size() const { return v.size(); }
  T* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

std::uint64_t fnv1a64(const void* data, std::size_t nbytes);

bool all_finite(std::span<const float> xs);
bool all_finite(std::span<const double> xs);

} // namespace cnmix
