#pragma once

#include <vector>

#include "cnmix/tensor.hpp"

namespace cnmix {

// A batch of images (NCHW float pixels) with integer class labels.
struct ImageBatch {
  int n = 0, channels = 0, height = 0, width = 0;
  int num_classes = 0;
  std::vector<float> pixels;
  std::vector<int> labels;

  std::size_t sample_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  float* sample(int i) { return pixels.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const {
    return pixels.data() + static_cast<std::size_t>(i) * sample_size();
  }
  float at(int i, int c, int y, int x) const {
    return pixels[((static_cast<std::size_t>(i) * channels + c) * height + y) * width + x];
  }

  Tensor4 to_tensor() const {
    Tensor4 t(n, channels, height, width);
    t.v = pixels;
    return t;
  }

  bool valid() const;
};

// Per-sample probability rows over num_classes; mixed targets live here.
struct SoftLabelBatch {
  int n = 0, num_classes = 0;
  std::vector<double> probs;

  SoftLabelBatch() = default;
  SoftLabelBatch(int n_, int k)
      : n(n_), num_classes(k), probs(static_cast<std::size_t>(n_) * k, 0.0) {}

  double* row(int i) { return probs.data() + static_cast<std::size_t>(i) * num_classes; }
  const double* row(int i) const {
    return probs.data() + static_cast<std::size_t>(i) * num_classes;
  }
};

// Output of a mixing transform: combined pixels plus the matching soft labels.
struct MixedBatch {
  int n = 0, channels = 0, height = 0, width = 0;
  std::vector<float> pixels;
  SoftLabelBatch soft_labels;

  std::size_t sample_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  float at(int i, int c, int y, int x) const {
    return pixels[((static_cast<std::size_t>(i) * channels + c) * height + y) * width + x];
  }
  Tensor4 to_tensor() const {
    Tensor4 t(n, channels, height, width);
    t.v = pixels;
    return t;
  }
};

} // namespace cnmix
