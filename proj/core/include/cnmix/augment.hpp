#pragma once

#include <span>
#include <vector>

#include "cnmix/data.hpp"
#include "cnmix/rng.hpp"

namespace cnmix::augment {

// Axis-aligned rectangle; the induced binary mask is one exactly on
// [x0, x0 + w) x [y0, y0 + h) and the box never crosses the image border.
struct RectMask {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  int area() const { return w * h; }
  bool contains(int x, int y) const {
    return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
  }
};

// One mixing draw shared by a peer group: the ratio and the pairing
// permutation are common to every peer, the rectangles are drawn
// independently per (peer, sample).
struct MixPlan {
  double lam = 0.0;
  std::vector<int> perm;
  std::vector<std::vector<RectMask>> masks; // [peer][sample]

  int num_peers() const { return static_cast<int>(masks.size()); }
  int batch() const { return static_cast<int>(perm.size()); }
};

// Beta(a, b) mixing ratio; defaults give the uniform Beta(1, 1).
double sample_lambda(Rng& rng, double a = 1.0, double b = 1.0);

// Rectangle with side lengths round(W*sqrt(lam)) x round(H*sqrt(lam))
// (round half away from zero) and a corner uniform over the positions that
// keep the box fully inside the image, so the ones-fraction tracks lam up
// to integer rounding.
RectMask sample_rect_mask(Rng& rng, int width, int height, double lam);

// Shared lambda and pairing, independent rectangles per peer.
// Requires n >= 2 and num_peers >= 2.
MixPlan cutnmix_plan(int n, int width, int height, int num_peers, Rng& rng);

struct CutmixResult {
  MixedBatch mixed;
  double lam = 0.0;
  std::vector<int> perm;
};

// Single-network cutmix: one lambda, one pairing, one rectangle per sample.
CutmixResult cutmix_batch(const ImageBatch& batch, Rng& rng);

// Applies one plan to the J distorted views of the same raw batch. All views
// must agree on shape and labels; the soft labels are computed once and the
// identical rows are handed to every peer.
std::vector<MixedBatch> apply_mix_plan(std::span<const ImageBatch> peer_batches,
                                       const MixPlan& plan);

// Reflect-pad by 4, random crop back to the original size, horizontal flip
// with probability 1/2. Labels pass through untouched.
ImageBatch base_distort(const ImageBatch& batch, Rng& rng);

// Pieces of base_distort, usable on a single image plane set.
void hflip_image(float* img, int channels, int height, int width);
void reflect_pad_crop(const float* src, float* dst, int channels, int height,
                      int width, int pad, int ox, int oy);

// lam * onehot(labels[perm[i]]) + (1 - lam) * onehot(labels[i]); a row whose
// two source classes coincide is written as an exact one-hot.
SoftLabelBatch mix_soft_labels(std::span<const int> labels, int num_classes,
                               const std::vector<int>& perm, double lam);

namespace detail {
// Plan generation shared by cutmix_batch (one peer) and cutnmix_plan: the
// J = 1 draw sequence is a strict prefix of the J > 1 sequence, which the
// degenerate-mode twin-run equivalence relies on.
MixPlan plan_impl(int n, int width, int height, int num_peers, Rng& rng);
} // namespace detail

} // namespace cnmix::augment
