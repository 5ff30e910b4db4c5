#include "cnmix/augment.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cnmix::augment {

double sample_lambda(Rng& rng, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("sample_lambda: shape parameters must be positive");
  return rng.beta(a, b);
}

RectMask sample_rect_mask(Rng& rng, int width, int height, double lam) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("sample_rect_mask: image must be at least 1x1");
  if (!(lam >= 0.0) || !(lam <= 1.0))
    throw std::invalid_argument("sample_rect_mask: lam must lie in [0, 1]");
  const double side = std::sqrt(lam);
  RectMask m;
  m.w = static_cast<int>(std::lround(width * side));
  m.h = static_cast<int>(std::lround(height * side));
  m.x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(width - m.w + 1)));
  m.y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(height - m.h + 1)));
  return m;
}

namespace detail {

MixPlan plan_impl(int n, int width, int height, int num_peers, Rng& rng) {
  MixPlan plan;
  plan.lam = sample_lambda(rng);
  plan.perm = rng.permutation(n);
  plan.masks.resize(static_cast<std::size_t>(num_peers));
  for (auto& peer_masks : plan.masks) {
    peer_masks.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      peer_masks.push_back(sample_rect_mask(rng, width, height, plan.lam));
  }
  return plan;
}

} // namespace detail

MixPlan cutnmix_plan(int n, int width, int height, int num_peers, Rng& rng) {
  if (n < 2) throw std::invalid_argument("cutnmix_plan: batch must have n >= 2");
  if (num_peers < 2)
    throw std::invalid_argument("cutnmix_plan: need at least two peers");
  return detail::plan_impl(n, width, height, num_peers, rng);
}

SoftLabelBatch mix_soft_labels(std::span<const int> labels, int num_classes,
                               const std::vector<int>& perm, double lam) {
  const int n = static_cast<int>(labels.size());
  SoftLabelBatch out(n, num_classes);
  for (int i = 0; i < n; ++i) {
    const int yi = labels[static_cast<std::size_t>(i)];
    const int yk = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    double* row = out.row(i);
    if (yi == yk) {
      row[yi] = 1.0;
    } else {
      row[yk] = lam;
      row[yi] = 1.0 - lam;
    }
  }
  return out;
}

namespace {

void mix_pixels_one_peer(const ImageBatch& in, const std::vector<RectMask>& masks,
                         const std::vector<int>& perm, MixedBatch& out) {
  out.n = in.n;
  out.channels = in.channels;
  out.height = in.height;
  out.width = in.width;
  out.pixels = in.pixels;
  const int H = in.height, W = in.width;
  for (int i = 0; i < in.n; ++i) {
    const RectMask& m = masks[static_cast<std::size_t>(i)];
    if (m.area() == 0) continue;
    const int k = perm[static_cast<std::size_t>(i)];
    const float* src = in.sample(k);
    float* dst = out.pixels.data() + static_cast<std::size_t>(i) * in.sample_size();
    for (int c = 0; c < in.channels; ++c) {
      const std::size_t plane = static_cast<std::size_t>(c) * H * W;
      for (int y = m.y0; y < m.y0 + m.h; ++y) {
        const std::size_t off = plane + static_cast<std::size_t>(y) * W + m.x0;
        std::memcpy(dst + off, src + off, sizeof(float) * static_cast<std::size_t>(m.w));
      }
    }
  }
}

} // namespace

CutmixResult cutmix_batch(const ImageBatch& batch, Rng& rng) {
  if (batch.n < 2) throw std::invalid_argument("cutmix_batch: batch must have n >= 2");
  const MixPlan plan = detail::plan_impl(batch.n, batch.width, batch.height, 1, rng);
  CutmixResult result;
  result.lam = plan.lam;
  result.perm = plan.perm;
  mix_pixels_one_peer(batch, plan.masks[0], plan.perm, result.mixed);
  result.mixed.soft_labels =
      mix_soft_labels(batch.labels, batch.num_classes, plan.perm, plan.lam);
  return result;
}

std::vector<MixedBatch> apply_mix_plan(std::span<const ImageBatch> peer_batches,
                                       const MixPlan& plan) {
  if (peer_batches.empty())
    throw std::invalid_argument("apply_mix_plan: no peer batches");
  if (static_cast<int>(peer_batches.size()) != plan.num_peers())
    throw std::invalid_argument("apply_mix_plan: peer count does not match plan");
  const ImageBatch& first = peer_batches[0];
  if (first.n != plan.batch())
    throw std::invalid_argument("apply_mix_plan: batch size does not match plan");
  for (const ImageBatch& b : peer_batches) {
    if (b.n != first.n || b.channels != first.channels || b.height != first.height ||
        b.width != first.width)
      throw std::invalid_argument("apply_mix_plan: peer batch shapes differ");
    if (b.labels != first.labels)
      throw std::invalid_argument("apply_mix_plan: peer batch labels differ");
  }

  const SoftLabelBatch shared =
      mix_soft_labels(first.labels, first.num_classes, plan.perm, plan.lam);

  std::vector<MixedBatch> out(peer_batches.size());
  for (std::size_t j = 0; j < peer_batches.size(); ++j) {
    mix_pixels_one_peer(peer_batches[j], plan.masks[j], plan.perm, out[j]);
    out[j].soft_labels = shared;
  }
  return out;
}

void hflip_image(float* img, int channels, int height, int width) {
  for (int c = 0; c < channels; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int y = 0; y < height; ++y) {
      float* row = plane + static_cast<std::size_t>(y) * width;
      for (int x = 0; x < width / 2; ++x) std::swap(row[x], row[width - 1 - x]);
    }
  }
}

namespace {

int reflect_index(int t, int size) {
  if (size == 1) return 0;
  while (t < 0 || t >= size) {
    if (t < 0) t = -t;
    if (t >= size) t = 2 * size - 2 - t;
  }
  return t;
}

} // namespace

void reflect_pad_crop(const float* src, float* dst, int channels, int height,
                      int width, int pad, int ox, int oy) {
  for (int c = 0; c < channels; ++c) {
    const float* splane = src + static_cast<std::size_t>(c) * height * width;
    float* dplane = dst + static_cast<std::size_t>(c) * height * width;
    for (int y = 0; y < height; ++y) {
      const int sy = reflect_index(y + oy - pad, height);
      for (int x = 0; x < width; ++x) {
        const int sx = reflect_index(x + ox - pad, width);
        dplane[static_cast<std::size_t>(y) * width + x] =
            splane[static_cast<std::size_t>(sy) * width + sx];
      }
    }
  }
}

ImageBatch base_distort(const ImageBatch& batch, Rng& rng) {
  constexpr int pad = 4;
  ImageBatch out = batch;
  for (int i = 0; i < batch.n; ++i) {
    const int ox = static_cast<int>(rng.uniform_int(2 * pad + 1));
    const int oy = static_cast<int>(rng.uniform_int(2 * pad + 1));
    const bool flip = rng.bernoulli(0.5);
    reflect_pad_crop(batch.sample(i), out.sample(i), batch.channels, batch.height,
                     batch.width, pad, ox, oy);
    if (flip) hflip_image(out.sample(i), batch.channels, batch.height, batch.width);
  }
  return out;
}

} // namespace cnmix::augment
