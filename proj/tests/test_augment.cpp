#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cnmix/augment.hpp"

using namespace cnmix;
using namespace cnmix::augment;

namespace {

ImageBatch make_batch(int n, int k, std::uint64_t seed, int hw = 32) {
  Rng rng(seed);
  ImageBatch b;
  b.n = n;
  b.channels = 3;
  b.height = hw;
  b.width = hw;
  b.num_classes = k;
  b.pixels.resize(static_cast<std::size_t>(n) * 3 * hw * hw);
  for (float& p : b.pixels) p = static_cast<float>(rng.uniform(-2.0, 2.0));
  b.labels.resize(static_cast<std::size_t>(n));
  for (int& label : b.labels) label = static_cast<int>(rng.uniform_int(k));
  return b;
}

} // namespace

TEST_CASE("sample_lambda is deterministic per seed and rejects bad shapes") {
  Rng a(5), b(5);
  CHECK(sample_lambda(a) == sample_lambda(b));
  Rng c(5);
  CHECK_THROWS_AS(sample_lambda(c, 0.0, 1.0), std::invalid_argument);
  Rng d(6);
  for (int i = 0; i < 1000; ++i) {
    const double lam = sample_lambda(d);
    CHECK(lam >= 0.0);
    CHECK(lam <= 1.0);
  }
}

TEST_CASE("rect mask extremes") {
  Rng rng(1);
  const RectMask full = sample_rect_mask(rng, 32, 32, 1.0);
  CHECK(full.w == 32);
  CHECK(full.h == 32);
  CHECK(full.x0 == 0);
  CHECK(full.y0 == 0);
  const RectMask empty = sample_rect_mask(rng, 32, 32, 0.0);
  CHECK(empty.w == 0);
  CHECK(empty.h == 0);
}

TEST_CASE("rect mask side rounding at lambda one half") {
  Rng rng(2);
  const RectMask m = sample_rect_mask(rng, 32, 32, 0.5);
  CHECK(m.w == 23);
  CHECK(m.h == 23);
  const double frac = 529.0 / 1024.0;
  CHECK(std::abs(frac - 0.5) <= 0.07);
}

TEST_CASE("rect mask area bound and placement over random draws") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double lam = rng.uniform();
    const RectMask m = sample_rect_mask(rng, 32, 32, lam);
    CHECK(m.x0 >= 0);
    CHECK(m.y0 >= 0);
    CHECK(m.x0 + m.w <= 32);
    CHECK(m.y0 + m.h <= 32);
    CHECK(std::abs(m.area() / 1024.0 - lam) <= (32.0 + 32.0 + 1.0) / 1024.0);
  }
}

TEST_CASE("cutmix_batch rejects singleton batches") {
  const ImageBatch one = make_batch(1, 4, 7);
  Rng rng(1);
  CHECK_THROWS_AS(cutmix_batch(one, rng), std::invalid_argument);
}

TEST_CASE("cutmix_batch is seed deterministic") {
  const ImageBatch batch = make_batch(6, 5, 8);
  Rng a(21), b(21);
  const CutmixResult ra = cutmix_batch(batch, a);
  const CutmixResult rb = cutmix_batch(batch, b);
  CHECK(ra.lam == rb.lam);
  CHECK(ra.perm == rb.perm);
  CHECK(ra.mixed.pixels == rb.mixed.pixels);
  CHECK(ra.mixed.soft_labels.probs == rb.mixed.soft_labels.probs);
}

TEST_CASE("soft label arithmetic for a two-point mixture") {
  const std::vector<int> labels = {2, 0};
  const std::vector<int> perm = {1, 0}; // sample 0 pairs with sample 1
  const SoftLabelBatch soft = mix_soft_labels(labels, 3, perm, 0.7);
  CHECK(soft.row(0)[0] == doctest::Approx(0.7));
  CHECK(soft.row(0)[1] == 0.0);
  CHECK(soft.row(0)[2] == doctest::Approx(0.3));
}

TEST_CASE("soft label rows are one-hot at fixed points and live on the simplex") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(6));
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& label : labels) label = static_cast<int>(rng.uniform_int(k));
    const std::vector<int> perm = rng.permutation(n);
    const double lam = rng.uniform();
    const SoftLabelBatch soft = mix_soft_labels(labels, k, perm, lam);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      int support = 0;
      for (int c = 0; c < k; ++c) {
        CHECK(soft.row(i)[c] >= 0.0);
        if (soft.row(i)[c] != 0.0) ++support;
        sum += soft.row(i)[c];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
      CHECK(support <= 2);
      if (perm[static_cast<std::size_t>(i)] == i)
        CHECK(soft.row(i)[labels[static_cast<std::size_t>(i)]] == 1.0);
    }
  }
}

TEST_CASE("apply_mix_plan with empty masks is the identity") {
  const ImageBatch batch = make_batch(4, 3, 9);
  MixPlan plan;
  plan.lam = 0.0;
  plan.perm = {1, 2, 3, 0};
  plan.masks.assign(2, std::vector<RectMask>(4, RectMask{0, 0, 0, 0}));
  const std::vector<ImageBatch> views = {batch, batch};
  const std::vector<MixedBatch> mixed = apply_mix_plan(views, plan);
  CHECK(mixed[0].pixels == batch.pixels);
  CHECK(mixed[1].pixels == batch.pixels);
}

TEST_CASE("apply_mix_plan with full masks swaps whole samples") {
  const ImageBatch batch = make_batch(4, 3, 10);
  MixPlan plan;
  plan.lam = 1.0;
  plan.perm = {2, 3, 0, 1};
  plan.masks.assign(1, std::vector<RectMask>(4, RectMask{0, 0, 32, 32}));
  const std::vector<ImageBatch> views = {batch};
  const std::vector<MixedBatch> mixed = apply_mix_plan(views, plan);
  for (int i = 0; i < 4; ++i) {
    const int k = plan.perm[static_cast<std::size_t>(i)];
    CHECK(std::memcmp(mixed[0].pixels.data() + i * batch.sample_size(),
                      batch.sample(k), batch.sample_size() * sizeof(float)) == 0);
  }
}

TEST_CASE("identical views with identical masks mix identically") {
  const ImageBatch batch = make_batch(5, 4, 11);
  Rng rng(33);
  MixPlan plan = cutnmix_plan(5, 32, 32, 2, rng);
  plan.masks[1] = plan.masks[0];
  const std::vector<ImageBatch> views = {batch, batch};
  const std::vector<MixedBatch> mixed = apply_mix_plan(views, plan);
  CHECK(mixed[0].pixels == mixed[1].pixels);
}

TEST_CASE("soft labels are shared bit for bit across peers") {
  const ImageBatch batch = make_batch(8, 6, 12);
  Rng rng(44);
  const MixPlan plan = cutnmix_plan(8, 32, 32, 3, rng);
  const std::vector<ImageBatch> views = {batch, batch, batch};
  const std::vector<MixedBatch> mixed = apply_mix_plan(views, plan);
  for (int j = 1; j < 3; ++j)
    CHECK(std::memcmp(mixed[0].soft_labels.probs.data(),
                      mixed[static_cast<std::size_t>(j)].soft_labels.probs.data(),
                      mixed[0].soft_labels.probs.size() * sizeof(double)) == 0);
}

TEST_CASE("apply_mix_plan validates shapes and labels") {
  ImageBatch a = make_batch(4, 3, 13);
  ImageBatch b = a;
  b.labels[0] = (b.labels[0] + 1) % 3;
  Rng rng(1);
  const MixPlan plan = cutnmix_plan(4, 32, 32, 2, rng);
  std::vector<ImageBatch> views = {a, b};
  CHECK_THROWS_AS(apply_mix_plan(views, plan), std::invalid_argument);
}

TEST_CASE("cutnmix_plan validates peer and batch counts") {
  Rng rng(2);
  CHECK_THROWS_AS(cutnmix_plan(4, 32, 32, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(cutnmix_plan(1, 32, 32, 2, rng), std::invalid_argument);
}

TEST_CASE("peer masks differ in at least ninety percent of plans") {
  const SeedTree tree(71);
  int differing = 0;
  for (int p = 0; p < 100; ++p) {
    Rng rng = tree.stream(1, static_cast<std::uint64_t>(p));
    const MixPlan plan = cutnmix_plan(64, 32, 32, 3, rng);
    const RectMask& a = plan.masks[0][0];
    const RectMask& b = plan.masks[1][0];
    const RectMask& c = plan.masks[2][0];
    const bool same = a.x0 == b.x0 && a.y0 == b.y0 && a.w == b.w && a.h == b.h &&
                      a.x0 == c.x0 && a.y0 == c.y0 && a.w == c.w && a.h == c.h;
    if (!same) ++differing;
  }
  CHECK(differing >= 90);
}

TEST_CASE("horizontal flip is an involution") {
  ImageBatch batch = make_batch(1, 2, 14, 8);
  const std::vector<float> original = batch.pixels;
  hflip_image(batch.pixels.data(), 3, 8, 8);
  CHECK(batch.pixels != original);
  hflip_image(batch.pixels.data(), 3, 8, 8);
  CHECK(batch.pixels == original);
}

TEST_CASE("centered reflect crop is the identity") {
  const ImageBatch batch = make_batch(1, 2, 15, 16);
  std::vector<float> out(batch.pixels.size());
  reflect_pad_crop(batch.pixels.data(), out.data(), 3, 16, 16, 4, 4, 4);
  CHECK(out == batch.pixels);
}

TEST_CASE("base_distort keeps labels and differs across seeds") {
  const ImageBatch batch = make_batch(32, 5, 16);
  Rng a(100), b(101), a2(100);
  const ImageBatch da = base_distort(batch, a);
  const ImageBatch db = base_distort(batch, b);
  const ImageBatch da2 = base_distort(batch, a2);
  CHECK(da.labels == batch.labels);
  CHECK(da.pixels != db.pixels);
  CHECK(da.pixels == da2.pixels);
}
