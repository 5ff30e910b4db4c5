#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cnmix/harness.hpp"
#include "cnmix/trainer.hpp"

using namespace cnmix;
using namespace cnmix::trainer;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "cnmix_trainer_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

datasets::Dataset tiny_data() {
  return datasets::make_synthetic(4, 96, 32, 5);
}

TrainOptions tiny_options() {
  TrainOptions opt;
  opt.arch = "tiny-cnn";
  opt.seed = 11;
  opt.optim.batch_size = 16;
  opt.optim.max_epochs = 2;
  opt.optim.lr0 = 0.02;
  opt.optim.milestones = {};
  opt.eval_train_subset = 32;
  return opt;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::uint64_t peer_checksum(const TrainState& st, std::size_t j) {
  return const_cast<models::PeerStudent&>(st.peers[j]).params().checksum();
}

std::uint64_t peer_weights_checksum(const TrainState& st, std::size_t j) {
  return const_cast<models::PeerStudent&>(st.peers[j]).params().checksum(true);
}

} // namespace

TEST_CASE("lr_at follows the multi-step schedule") {
  OptimConfig cfg; // lr0 0.05, milestones 150/180/210, decay 0.1, 240 epochs
  CHECK(lr_at(cfg, 0) == doctest::Approx(0.05));
  CHECK(lr_at(cfg, 149) == doctest::Approx(0.05));
  CHECK(lr_at(cfg, 150) == doctest::Approx(0.005));
  CHECK(lr_at(cfg, 180) == doctest::Approx(5e-4));
  CHECK(lr_at(cfg, 210) == doctest::Approx(5e-5));
  CHECK(lr_at(cfg, 239) == doctest::Approx(5e-5));
  CHECK_THROWS_AS(lr_at(cfg, -1), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(cfg, 240), std::invalid_argument);

  OptimConfig flat = cfg;
  flat.decay_factor = 1.0;
  CHECK(lr_at(flat, 239) == doctest::Approx(0.05));
}

TEST_CASE("a zero learning rate leaves parameters bit-identical") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  opt.optim.lr0 = 0.0;
  TrainState st = init_state(opt, data.num_classes);
  const std::uint64_t before0 = peer_weights_checksum(st, 0);
  const std::uint64_t before1 = peer_weights_checksum(st, 1);

  const std::vector<int> idx = {0, 1, 2, 3, 4, 5, 6, 7};
  const ImageBatch raw = data.make_batch(true, idx);
  train_step(st, opt, raw);
  // batch-norm running buffers move with any train-mode forward; the
  // optimized weights must not
  CHECK(peer_weights_checksum(st, 0) == before0);
  CHECK(peer_weights_checksum(st, 1) == before1);
}

TEST_CASE("one default step produces finite nonnegative losses") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  TrainState st = init_state(opt, data.num_classes);
  const std::vector<int> idx = {0, 1, 2, 3, 4, 5, 6, 7};
  const StepMetrics m = train_step(st, opt, data.make_batch(true, idx));
  REQUIRE(m.peer_parts.size() == 2);
  for (const losses::LossParts& p : m.peer_parts) {
    for (double v : {p.ce, p.dml, p.mmd, p.pt}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
  CHECK(m.teacher_ce > 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("batches with a single sample are rejected") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  TrainState st = init_state(opt, data.num_classes);
  const std::vector<int> one = {0};
  CHECK_THROWS_AS(train_step(st, opt, data.make_batch(true, one)),
                  std::invalid_argument);
}

TEST_CASE("degenerate framework run tracks a solo cutmix run bit for bit") {
  const datasets::Dataset data = tiny_data();

  TrainOptions framework = tiny_options();
  framework.distill.num_peers = 2;
  framework.distill.dml_weight = 0.0;
  framework.distill.mmd_weight = 0.0;
  framework.distill.pt_weight = 0.0;
  framework.teacher_enabled = false;
  framework.update_teacher = false;

  TrainOptions solo = framework;
  solo.distill.num_peers = 1;

  TrainState fw = init_state(framework, data.num_classes);
  TrainState so = init_state(solo, data.num_classes);
  CHECK(peer_checksum(fw, 0) == peer_checksum(so, 0));

  for (int step = 0; step < 5; ++step) {
    const std::vector<int> idx = {step, step + 1, step + 2, step + 3};
    const ImageBatch raw = data.make_batch(true, idx);
    train_step(fw, framework, raw);
    train_step(so, solo, raw);
    CHECK(peer_checksum(fw, 0) == peer_checksum(so, 0));
  }
  CHECK(peer_checksum(fw, 1) != peer_checksum(so, 0));
}

TEST_CASE("zero max_epochs returns the initialized models with an empty log") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  opt.optim.max_epochs = 0;
  opt.out_dir = temp_dir("zero_epochs").string();

  const TrainResult result = train(opt, data);
  CHECK(result.state.epoch == 0);
  const auto rows = MetricsCsv::read(opt.out_dir + "/metrics.csv");
  CHECK(rows.empty());

  TrainState fresh = init_state(opt, data.num_classes);
  CHECK(peer_checksum(result.state, 0) == peer_checksum(fresh, 0));
}

TEST_CASE("training twice with one seed reproduces the metrics log") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  opt.out_dir = temp_dir("det_a").string();
  train(opt, data);
  const std::string first = file_bytes(opt.out_dir + "/metrics.csv");

  opt.out_dir = temp_dir("det_b").string();
  train(opt, data);
  const std::string second = file_bytes(opt.out_dir + "/metrics.csv");
  CHECK(first == second);
  CHECK_FALSE(first.empty());
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const datasets::Dataset data = tiny_data();

  TrainOptions full = tiny_options();
  full.optim.max_epochs = 4;
  full.out_dir = temp_dir("resume_full").string();
  train(full, data);

  TrainOptions half = full;
  half.optim.max_epochs = 2;
  half.out_dir = temp_dir("resume_half").string();
  train(half, data);

  TrainOptions rest = full;
  rest.out_dir = half.out_dir;
  rest.resume = true;
  const TrainResult resumed = train(rest, data);
  CHECK(resumed.state.epoch == 3);

  CHECK(file_bytes(full.out_dir + "/metrics.csv") ==
        file_bytes(half.out_dir + "/metrics.csv"));
}

TEST_CASE("resume refuses a mismatched seed") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  opt.out_dir = temp_dir("resume_seed").string();
  train(opt, data);

  TrainOptions other = opt;
  other.seed = opt.seed + 1;
  other.resume = true;
  CHECK_THROWS_AS(train(other, data), std::runtime_error);
}

TEST_CASE("a poisoned parameter aborts with a non-finite diagnostic") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  TrainState st = init_state(opt, data.num_classes);
  nn::ParamRef* head = st.peers[0].params().find("head.weight");
  REQUIRE(head != nullptr);
  (*head->value)[0] = std::numeric_limits<float>::quiet_NaN();
  const ImageBatch raw = data.make_batch(true, std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_WITH_AS(train_step(st, opt, raw), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("checkpoints restore the exact training state") {
  const datasets::Dataset data = tiny_data();
  TrainOptions opt = tiny_options();
  TrainState st = init_state(opt, data.num_classes);
  const std::vector<int> idx = {0, 1, 2, 3, 4, 5};
  train_step(st, opt, data.make_batch(true, idx));
  st.epoch = 1;

  const fs::path path = temp_dir("ckpt") / "state.ckpt";
  models::save_checkpoint(make_checkpoint(st, opt, data.num_classes), path.string());

  TrainState restored = init_state(opt, data.num_classes);
  CHECK(peer_checksum(restored, 0) != peer_checksum(st, 0));
  restore_checkpoint(models::load_checkpoint(path.string()), restored);
  CHECK(peer_checksum(restored, 0) == peer_checksum(st, 0));
  CHECK(peer_checksum(restored, 1) == peer_checksum(st, 1));
  CHECK(restored.epoch == 1);
}

TEST_CASE("alternating updates run and differ from simultaneous") {
  const datasets::Dataset data = tiny_data();
  TrainOptions sim = tiny_options();
  TrainOptions alt = tiny_options();
  alt.update_rule = UpdateRule::alternating;

  TrainState a = init_state(sim, data.num_classes);
  TrainState b = init_state(alt, data.num_classes);
  const std::vector<int> idx = {0, 1, 2, 3, 4, 5, 6, 7};
  const ImageBatch raw = data.make_batch(true, idx);
  train_step(a, sim, raw);
  train_step(b, alt, raw);
  // the first peer sees the same world (its extra refresh forward only touches
  // batch-norm running buffers); the second peer saw updated targets
  CHECK(const_cast<models::PeerStudent&>(a.peers[0]).params().checksum(true) ==
        const_cast<models::PeerStudent&>(b.peers[0]).params().checksum(true));
  CHECK(const_cast<models::PeerStudent&>(a.peers[1]).params().checksum(true) !=
        const_cast<models::PeerStudent&>(b.peers[1]).params().checksum(true));
}
