#pragma once

#include <cstdint>
#include <string>

#include "cnmix/losses.hpp"
#include "cnmix/optim.hpp"

namespace cnmix::harness {

struct DatasetSpec {
  std::string name = "synthetic"; // synthetic | cifar10 | cifar100
  std::string path;               // directory for the cifar readers
  int num_classes = 10;           // synthetic only
  int n_train = 5000;             // synthetic only
  int n_test = 1000;              // synthetic only
  std::uint64_t gen_seed = 7;     // synthetic only
  double difficulty = 1.0;        // synthetic only
};

// Fully resolved description of one run. Serializes to JSON with every field
// present, so the copy persisted in the run directory reproduces the run.
struct RunConfig {
  DatasetSpec dataset;
  std::string arch = "tiny-cnn";
  std::string mode = "ours"; // ours | dml | cutmix-solo | baseline |
                             // ablation-none | ablation-mmd | ablation-pt
  losses::DistillConfig distill;
  trainer::OptimConfig optim;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  std::string update_rule = "simultaneous"; // or alternating
  std::string ensemble_rule = "mean-softmax"; // or mean-logit
  int eval_train_subset = 1000;
};

// Parses JSON text; unknown keys are an error, missing keys take defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Stable, fully resolved JSON (alphabetical keys).
std::string to_json(const RunConfig& cfg);

// Writes <out_dir>/config.resolved.json.
void save_resolved_config(const RunConfig& cfg, const std::string& out_dir);

// FNV hash of the resolved JSON, recorded in checkpoints.
std::string config_digest(const RunConfig& cfg);

} // namespace cnmix::harness
