// Release gate for the toolkit: every criterion below runs at its stated
// tolerance and prints one pass/fail line. Exit code is nonzero if any gate
// fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cnmix/augment.hpp"
#include "cnmix/datasets.hpp"
#include "cnmix/harness.hpp"
#include "cnmix/selfcheck.hpp"
#include "cnmix/trainer.hpp"

using namespace cnmix;
namespace fs = std::filesystem;

namespace {

struct Gate {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

Gate from_suite(const std::string& name, std::vector<selfcheck::CheckResult> results,
                double started) {
  Gate g{name, true, "", now_seconds() - started};
  for (const selfcheck::CheckResult& r : results) {
    if (!r.pass) {
      g.pass = false;
      g.detail += (g.detail.empty() ? "" : "; ") + r.name + ": " + r.detail;
    }
  }
  if (g.pass && !results.empty()) g.detail = results.front().detail;
  return g;
}

// ---------------------------------------------------------------------------
// desk-scale experiment preset shared by criteria 5-7

harness::RunConfig desk_config(const std::string& mode, std::uint64_t seed,
                               const std::string& out_dir) {
  harness::RunConfig cfg;
  cfg.dataset.name = "synthetic";
  cfg.dataset.num_classes = 10;
  cfg.dataset.n_train = 5000;
  cfg.dataset.n_test = 1000;
  cfg.dataset.gen_seed = 7;
  cfg.dataset.difficulty = 1.0;
  cfg.arch = "tiny-cnn";
  cfg.mode = mode;
  cfg.distill.num_peers = 2;
  cfg.distill.temperature = 3.0;
  cfg.distill.dml_weight = 0.6;
  cfg.distill.mmd_weight = 0.4;
  cfg.distill.pt_weight = 0.6;
  cfg.optim.lr0 = 0.1;
  cfg.optim.momentum = 0.9;
  cfg.optim.weight_decay = 5e-4;
  cfg.optim.nesterov = true;
  cfg.optim.milestones = {16, 24};
  cfg.optim.decay_factor = 0.1;
  cfg.optim.max_epochs = 30;
  cfg.optim.batch_size = 64;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.eval_train_subset = 500;
  return cfg;
}

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0
                    : std::accumulate(xs.begin(), xs.end(), 0.0) /
                          static_cast<double>(xs.size());
}

// one-sided sign test: probability of at least `wins` successes in n fair flips
double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    double comb = 1.0;
    for (int i = 0; i < k; ++i) comb = comb * (n - i) / (i + 1);
    p += comb;
  }
  return p / std::pow(2.0, n);
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// criterion 4: degenerate-mode twin run

Gate criterion4() {
  const double started = now_seconds();
  const datasets::Dataset data = datasets::make_synthetic(10, 640, 64, 3);

  trainer::TrainOptions framework;
  framework.arch = "tiny-cnn";
  framework.seed = 21;
  framework.distill.num_peers = 2;
  framework.distill.dml_weight = 0.0;
  framework.distill.mmd_weight = 0.0;
  framework.distill.pt_weight = 0.0;
  framework.teacher_enabled = false;
  framework.update_teacher = false;
  framework.optim.batch_size = 32;
  framework.optim.max_epochs = 1;

  trainer::TrainOptions solo = framework;
  solo.distill.num_peers = 1;

  trainer::TrainState fw = trainer::init_state(framework, data.num_classes);
  trainer::TrainState so = trainer::init_state(solo, data.num_classes);

  bool identical = fw.peers[0].params().checksum() == so.peers[0].params().checksum();
  const auto batches =
      datasets::shuffled_batches(data.train_size(), 32, framework.seed, 0);
  int steps = 0;
  for (const std::vector<int>& idx : batches) {
    if (steps >= 20) break;
    const ImageBatch raw = data.make_batch(true, idx);
    trainer::train_step(fw, framework, raw);
    trainer::train_step(so, solo, raw);
    identical = identical &&
                fw.peers[0].params().checksum() == so.peers[0].params().checksum();
    ++steps;
  }
  return Gate{"degenerate-mode twin equivalence", identical,
              fmt("%d steps, peer-1 trajectory %s the solo cutmix run", steps,
                  identical ? "bit-identical to" : "DIVERGED from"),
              now_seconds() - started};
}

// ---------------------------------------------------------------------------
// criteria 5-7: the desk-scale trend experiment

struct TrendOutcome {
  Gate ablation, baseline, ensemble;
};

TrendOutcome trend_criteria(const fs::path& work) {
  const double started = now_seconds();
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  const harness::RunConfig probe = desk_config("ours", 1, "");
  const datasets::Dataset data = harness::load_dataset(probe.dataset);

  struct Cell {
    double mean_peer = 0.0, ensemble = 0.0;
  };
  std::map<std::string, std::vector<Cell>> table;

  // two-peer rows run one at a time (each already uses one thread per peer)
  for (const std::string& mode : harness::ablation_modes()) {
    for (std::uint64_t seed : seeds) {
      const harness::RunConfig cfg = desk_config(
          mode, seed, (work / mode / ("seed" + std::to_string(seed))).string());
      const harness::RunSummary s = harness::run_experiment(cfg, &data);
      table[mode].push_back({s.mean_peer_acc, s.ensemble_acc});
      std::printf("  %-13s seed %llu  mean %.4f  ensemble %.4f\n", mode.c_str(),
                  static_cast<unsigned long long>(seed), s.mean_peer_acc,
                  s.ensemble_acc);
      std::fflush(stdout);
    }
  }
  // single-network baselines run two at a time
  for (std::size_t i = 0; i < seeds.size(); i += 2) {
    std::vector<std::future<harness::RunSummary>> running;
    for (std::size_t j = i; j < std::min(i + 2, seeds.size()); ++j) {
      const harness::RunConfig cfg = desk_config(
          "baseline", seeds[j],
          (work / "baseline" / ("seed" + std::to_string(seeds[j]))).string());
      running.push_back(std::async(std::launch::async, [cfg, &data] {
        return harness::run_experiment(cfg, &data);
      }));
    }
    for (std::size_t j = 0; j < running.size(); ++j) {
      const harness::RunSummary s = running[j].get();
      table["baseline"].push_back({s.mean_peer_acc, s.ensemble_acc});
      std::printf("  baseline      seed %llu  acc  %.4f\n",
                  static_cast<unsigned long long>(seeds[i + j]), s.mean_peer_acc);
      std::fflush(stdout);
    }
  }

  auto row_means = [&](const std::string& mode) {
    std::vector<double> v;
    for (const Cell& c : table[mode]) v.push_back(c.mean_peer);
    return v;
  };
  const double full = mean_of(row_means("ours"));
  const double none = mean_of(row_means("ablation-none"));
  const double mmd = mean_of(row_means("ablation-mmd"));
  const double pt = mean_of(row_means("ablation-pt"));
  const double base = mean_of(row_means("baseline"));
  const double elapsed = now_seconds() - started;

  TrendOutcome out;
  const bool order_ok = full > none && mmd >= none && pt >= none;
  out.ablation = Gate{
      "ablation trend (toggle matrix ordering)", order_ok,
      fmt("full %.4f > +mmd %.4f / +pt %.4f >= cutnmix-only %.4f over 5 seeds "
          "(%.0f s)",
          full, mmd, pt, none, elapsed),
      elapsed};

  int wins = 0;
  std::string pairs;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const double ours_acc = table["ours"][s].mean_peer;
    const double base_acc = table["baseline"][s].mean_peer;
    if (ours_acc > base_acc) ++wins;
    pairs += fmt("%s%.3f/%.3f", s ? " " : "", ours_acc, base_acc);
  }
  const double p = sign_test_p(wins, static_cast<int>(seeds.size()));
  out.baseline =
      Gate{"improvement over baseline (paired sign test)", p < 0.1,
           fmt("framework/baseline per seed: %s; %d/5 wins, p = %.4f, means "
               "%.4f vs %.4f",
               pairs.c_str(), wins, p, full, base),
           elapsed};

  bool ens_ok = true;
  std::string ens_detail;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const Cell& c = table["ours"][s];
    if (c.ensemble < c.mean_peer) ens_ok = false;
    ens_detail += fmt("%s%.3f>=%.3f", s ? " " : "", c.ensemble, c.mean_peer);
  }
  out.ensemble = Gate{"ensemble at least the mean of its peers", ens_ok,
                      ens_detail, elapsed};
  return out;
}

// ---------------------------------------------------------------------------
// criterion 9: repeated CLI training run determinism

Gate criterion9(const fs::path& work) {
  const double started = now_seconds();
  harness::RunConfig cfg = desk_config("ours", 17, "");
  cfg.dataset.n_train = 1000;
  cfg.dataset.n_test = 200;
  cfg.optim.max_epochs = 3;
  cfg.optim.milestones = {2};

  const fs::path config_path = work / "repeat.json";
  fs::create_directories(work);
  std::ofstream(config_path) << harness::to_json(cfg);

  const fs::path out_a = work / "repeat_a";
  const fs::path out_b = work / "repeat_b";
  const int rc_a = harness::run_cli(
      {"train", "--config", config_path.string(), "--out", out_a.string()});
  const int rc_b = harness::run_cli(
      {"train", "--config", config_path.string(), "--out", out_b.string()});
  const std::uint64_t sum_a = file_checksum(out_a / "metrics.csv");
  const std::uint64_t sum_b = file_checksum(out_b / "metrics.csv");
  const bool pass = rc_a == 0 && rc_b == 0 && sum_a == sum_b;
  return Gate{"repeated train invocations are identical", pass,
              fmt("metrics.csv checksums %016llx vs %016llx",
                  static_cast<unsigned long long>(sum_a),
                  static_cast<unsigned long long>(sum_b)),
              now_seconds() - started};
}

} // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "cnmix_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  std::vector<Gate> gates;
  double t0 = now_seconds();
  gates.push_back(from_suite("loss oracle equivalence (rel err < 1e-10)",
                             selfcheck::loss_oracle_suite(200, 1e-10), t0));
  t0 = now_seconds();
  gates.push_back(from_suite("gradient suite (rel err < 1e-4)",
                             selfcheck::gradient_suite(50, 1e-4), t0));
  t0 = now_seconds();
  {
    std::vector<selfcheck::CheckResult> mix = selfcheck::mixing_suite(1000);
    std::vector<selfcheck::CheckResult> beta = selfcheck::beta_uniformity_suite();
    mix.insert(mix.end(), beta.begin(), beta.end());
    gates.push_back(from_suite("mixing invariants over 1000 plans", mix, t0));
  }
  gates.push_back(criterion4());

  std::printf("running the desk-scale trend experiment (4 ablation rows + "
              "baseline, 5 seeds, 30 epochs)...\n");
  std::fflush(stdout);
  const TrendOutcome trend = trend_criteria(work / "trend");
  gates.push_back(trend.ablation);
  gates.push_back(trend.baseline);
  gates.push_back(trend.ensemble);

  t0 = now_seconds();
  gates.push_back(from_suite("binary format fidelity",
                             selfcheck::format_suite((work / "fmt").string()), t0));
  gates.push_back(criterion9(work / "repeat"));

  bool all = true;
  std::printf("\n");
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const Gate& g = gates[i];
    std::printf("[%s] criterion %zu: %s -- %s (%.1f s)\n", g.pass ? "PASS" : "FAIL",
                i + 1, g.name.c_str(), g.detail.c_str(), g.seconds);
    all = all && g.pass;
  }
  std::printf("%s\n", all ? "acceptance: all criteria passed"
                          : "acceptance: FAILURES present");
  return all ? 0 : 1;
}
