#include <benchmark/benchmark.h>

#include "cnmix/augment.hpp"
#include "cnmix/datasets.hpp"
#include "cnmix/losses.hpp"
#include "cnmix/models.hpp"
#include "cnmix/trainer.hpp"

using namespace cnmix;

namespace {

ImageBatch random_batch(int n, int k, std::uint64_t seed) {
  Rng rng{seed};
  ImageBatch b;
  b.n = n;
  b.channels = 3;
  b.height = 32;
  b.width = 32;
  b.num_classes = k;
  b.pixels.resize(static_cast<std::size_t>(n) * 3 * 32 * 32);
  for (float& p : b.pixels) p = static_cast<float>(rng.uniform(-1.0, 1.0));
  b.labels.resize(static_cast<std::size_t>(n));
  for (int& label : b.labels) label = static_cast<int>(rng.uniform_int(k));
  return b;
}

void BM_CutnmixPlanApply(benchmark::State& state) {
  const ImageBatch batch = random_batch(128, 10, 7);
  const std::vector<ImageBatch> views = {batch, batch};
  SeedTree tree(3);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng = tree.stream(seed_tag::mix, i++);
    const augment::MixPlan plan = augment::cutnmix_plan(128, 32, 32, 2, rng);
    benchmark::DoNotOptimize(augment::apply_mix_plan(views, plan));
  }
}
BENCHMARK(BM_CutnmixPlanApply)->Unit(benchmark::kMicrosecond);

void BM_BaseDistort(benchmark::State& state) {
  const ImageBatch batch = random_batch(128, 10, 7);
  SeedTree tree(3);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng = tree.stream(seed_tag::distort, i++);
    benchmark::DoNotOptimize(augment::base_distort(batch, rng));
  }
}
BENCHMARK(BM_BaseDistort)->Unit(benchmark::kMicrosecond);

void BM_LossBundle(benchmark::State& state) {
  Rng rng{11};
  const int n = 128, k = 100;
  std::vector<MatD> logits(2, MatD(n, k)), features(2, MatD(n, 64));
  for (MatD& m : logits)
    for (double& v : m.v) v = rng.uniform(-3.0, 3.0);
  for (MatD& m : features)
    for (double& v : m.v) v = rng.uniform(-1.0, 1.0);
  SoftLabelBatch targets(n, k);
  for (int i = 0; i < n; ++i) targets.row(i)[i % k] = 1.0;

  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::soft_ce(logits[0], targets));
    benchmark::DoNotOptimize(losses::dml_loss(logits, 0, 3.0));
    benchmark::DoNotOptimize(losses::mmd_loss(features, 0));
    benchmark::DoNotOptimize(losses::pt_loss(logits[0], logits[1], 3.0));
  }
}
BENCHMARK(BM_LossBundle)->Unit(benchmark::kMicrosecond);

void BM_TinyCnnForward(benchmark::State& state) {
  Rng init{1};
  models::PeerStudent net = models::build_student("tiny-cnn", 10, init);
  const Tensor4 x = random_batch(128, 10, 5).to_tensor();
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, false));
}
BENCHMARK(BM_TinyCnnForward)->Unit(benchmark::kMillisecond);

void BM_TinyCnnForwardBackward(benchmark::State& state) {
  Rng init{1};
  models::PeerStudent net = models::build_student("tiny-cnn", 10, init);
  const Tensor4 x = random_batch(128, 10, 5).to_tensor();
  for (auto _ : state) {
    const models::ForwardResult out = net.forward(x, true);
    MatF d(out.logits.rows, out.logits.cols);
    for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] = 1.0f / 128.0f;
    net.zero_grad();
    net.backward(d, MatF{});
    benchmark::DoNotOptimize(net.params());
  }
}
BENCHMARK(BM_TinyCnnForwardBackward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  trainer::TrainOptions opt;
  opt.optim.batch_size = 128;
  opt.seed = 3;
  trainer::TrainState st = trainer::init_state(opt, 10);
  const ImageBatch raw = random_batch(128, 10, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer::train_step(st, opt, raw));
    st.step = 0; // keep the stream fork pattern of a single long epoch
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
