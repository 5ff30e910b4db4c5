#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnmix/config.hpp"
#include "cnmix/datasets.hpp"
#include "cnmix/eval.hpp"
#include "cnmix/trainer.hpp"

namespace cnmix::harness {

// Translates a run mode into concrete trainer toggles:
//   ours          cutnmix + dml + mmd + pt
//   ablation-pt   cutnmix + dml + pt
//   ablation-mmd  cutnmix + dml + mmd
//   ablation-none cutnmix + dml
//   dml           distortion only, mutual logit loss
//   cutmix-solo   one network, cutmix supervision
//   baseline      one network, hard labels
trainer::TrainOptions make_train_options(const RunConfig& cfg);

// Loads the dataset named by the spec; relative cifar paths resolve against
// the CNMIX_DATA_ROOT environment variable when set.
datasets::Dataset load_dataset(const DatasetSpec& spec);

struct RunSummary {
  RunConfig config;
  std::vector<double> peer_acc;
  double mean_peer_acc = 0.0;
  double ensemble_acc = 0.0; // 0 when a single peer runs
};

// Trains one configuration end to end. When cfg.out_dir is set the resolved
// config, metrics log and checkpoints land there. A preloaded dataset skips
// the load (the ablation driver shares one).
RunSummary run_experiment(const RunConfig& cfg,
                          const datasets::Dataset* preloaded = nullptr,
                          bool verbose = false);

// The ablation row order follows the toggle matrix: mixing alone, +mmd, +pt,
// then the full objective.
const std::vector<std::string>& ablation_modes();

struct AblationCell {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<double> peer_acc;
  double mean_peer_acc = 0.0;
  double ensemble_acc = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::vector<double> row_mean(const std::string& mode) const; // per-seed means
};

AblationResult run_ablation(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                            bool with_baseline, const std::string& out_root,
                            bool verbose = false);

// Aggregates <root>/<group>/seed*/metrics.csv into test-accuracy curves with
// mean and std over seeds, one curve per group, written as SVG.
void plot_runs(const std::string& root, const std::string& out_svg);

// CLI entry: train | eval | ablate | plot | selftest.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args); // without argv[0]

} // namespace cnmix::harness
