#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cnmix/checkpoint.hpp"
#include "cnmix/data.hpp"
#include "cnmix/datasets.hpp"
#include "cnmix/losses.hpp"
#include "cnmix/metrics.hpp"
#include "cnmix/models.hpp"
#include "cnmix/optim.hpp"
#include "cnmix/rng.hpp"

namespace cnmix::trainer {

// Whether peers update from a common pre-update snapshot of every peer's
// outputs, or one after another with refreshed targets.
enum class UpdateRule { simultaneous, alternating };

struct TrainOptions {
  losses::DistillConfig distill;
  OptimConfig optim;
  std::string arch = "tiny-cnn";
  bool mixing = true;          // cutnmix (plain cutmix when a single peer runs)
  bool distortion = true;      // per-peer pad-crop-flip
  bool teacher_enabled = true;
  bool update_teacher = true;
  UpdateRule update_rule = UpdateRule::simultaneous;
  std::uint64_t seed = 1;
  std::string out_dir;         // empty: keep everything in memory, write nothing
  int eval_train_subset = 1000;
  bool resume = false;
  std::map<std::string, std::string> checkpoint_meta; // extra entries, e.g. config digest
};

struct TrainState {
  std::vector<models::PeerStudent> peers;
  std::optional<models::PeerTeacher> teacher;
  std::vector<Sgd> peer_opts;
  std::optional<Sgd> teacher_opt;
  SeedTree seeds{0};
  int epoch = 0;
  int step = 0; // within the current epoch
};

TrainState init_state(const TrainOptions& opt, int num_classes);

struct StepMetrics {
  std::vector<losses::LossParts> peer_parts;
  std::vector<double> peer_total;
  double teacher_ce = 0.0;
};

// One optimization step over a raw batch: per-peer distortion, mixing,
// forward passes, the four-part loss with per-peer updates, then the
// teacher's own supervised update.
StepMetrics train_step(TrainState& state, const TrainOptions& opt,
                       const ImageBatch& raw_batch);

struct TrainResult {
  TrainState state;
  std::vector<double> final_test_acc;          // per peer
  double final_ensemble_acc = 0.0;             // 0 when a single peer runs
  double final_teacher_acc = 0.0;              // 0 when no teacher is trained
  std::vector<MetricRow> last_epoch_rows;
};

// Accuracy of the ensemble teacher head over the peers' evaluation-mode
// features.
double evaluate_teacher(TrainState& state, const datasets::Dataset& data,
                        int batch_size = 256);

using EpochCallback = std::function<void(int epoch, const std::vector<MetricRow>&)>;

TrainResult train(const TrainOptions& opt, const datasets::Dataset& data,
                  const EpochCallback& on_epoch = {});

// Checkpoint plumbing, shared by train() and the CLI.
models::Checkpoint make_checkpoint(const TrainState& state, const TrainOptions& opt,
                                   int num_classes);
void restore_checkpoint(const models::Checkpoint& ckpt, TrainState& state);

} // namespace cnmix::trainer
