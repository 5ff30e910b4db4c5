#include "cnmix/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <CLI11.hpp>

#include "cnmix/plot.hpp"
#include "cnmix/selfcheck.hpp"

namespace cnmix::harness {

namespace fs = std::filesystem;

trainer::TrainOptions make_train_options(const RunConfig& cfg) {
  trainer::TrainOptions o;
  o.distill = cfg.distill;
  o.optim = cfg.optim;
  o.arch = cfg.arch;
  o.seed = cfg.seed;
  o.out_dir = cfg.out_dir;
  o.eval_train_subset = cfg.eval_train_subset;

  if (cfg.update_rule == "simultaneous")
    o.update_rule = trainer::UpdateRule::simultaneous;
  else if (cfg.update_rule == "alternating")
    o.update_rule = trainer::UpdateRule::alternating;
  else
    throw std::invalid_argument("unknown update_rule '" + cfg.update_rule + "'");

  const std::string& mode = cfg.mode;
  if (mode == "ours") {
    // full objective as configured
  } else if (mode == "ablation-pt") {
    o.distill.mmd_weight = 0.0;
  } else if (mode == "ablation-mmd") {
    o.distill.pt_weight = 0.0;
  } else if (mode == "ablation-none") {
    o.distill.mmd_weight = 0.0;
    o.distill.pt_weight = 0.0;
  } else if (mode == "dml") {
    o.mixing = false;
    o.distill.mmd_weight = 0.0;
    o.distill.pt_weight = 0.0;
  } else if (mode == "cutmix-solo") {
    o.distill.num_peers = 1;
    o.distill.dml_weight = 0.0;
    o.distill.mmd_weight = 0.0;
    o.distill.pt_weight = 0.0;
  } else if (mode == "baseline") {
    o.distill.num_peers = 1;
    o.mixing = false;
    o.distill.dml_weight = 0.0;
    o.distill.mmd_weight = 0.0;
    o.distill.pt_weight = 0.0;
  } else {
    throw std::invalid_argument("unknown mode '" + mode + "'");
  }

  o.teacher_enabled = o.distill.pt_weight > 0.0;
  o.update_teacher = o.teacher_enabled;
  return o;
}

datasets::Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.name == "synthetic")
    return datasets::make_synthetic(spec.num_classes, spec.n_train, spec.n_test,
                                    spec.gen_seed, spec.difficulty);

  std::string path = spec.path.empty() ? spec.name : spec.path;
  if (!fs::path(path).is_absolute() && !fs::exists(path)) {
    if (const char* root = std::getenv("CNMIX_DATA_ROOT"))
      path = (fs::path(root) / path).string();
  }
  if (spec.name == "cifar10") return datasets::read_cifar10(path);
  if (spec.name == "cifar100") return datasets::read_cifar100(path);
  throw std::invalid_argument("unknown dataset '" + spec.name + "'");
}

RunSummary run_experiment(const RunConfig& cfg, const datasets::Dataset* preloaded,
                          bool verbose) {
  trainer::TrainOptions opts = make_train_options(cfg);
  opts.checkpoint_meta["config_digest"] = config_digest(cfg);

  datasets::Dataset local;
  const datasets::Dataset* data = preloaded;
  if (!data) {
    local = load_dataset(cfg.dataset);
    data = &local;
  }

  if (!cfg.out_dir.empty()) save_resolved_config(cfg, cfg.out_dir);
  if (verbose && models::heavy_for_cpu(cfg.arch))
    std::cerr << "note: arch '" << cfg.arch << "' is heavy for CPU training\n";

  trainer::EpochCallback on_epoch;
  if (verbose) {
    on_epoch = [&](int epoch, const std::vector<trainer::MetricRow>& rows) {
      double test = 0.0, total = 0.0;
      for (const trainer::MetricRow& r : rows) {
        test += r.test_acc;
        total += r.total;
      }
      std::printf("epoch %3d  loss %.4f  test_acc %.4f\n", epoch,
                  total / static_cast<double>(rows.size()),
                  test / static_cast<double>(rows.size()));
      std::fflush(stdout);
    };
  }

  trainer::TrainResult result = trainer::train(opts, *data, on_epoch);

  RunSummary summary;
  summary.config = cfg;
  summary.peer_acc = result.final_test_acc;
  summary.mean_peer_acc =
      std::accumulate(summary.peer_acc.begin(), summary.peer_acc.end(), 0.0) /
      static_cast<double>(summary.peer_acc.size());
  if (result.state.peers.size() >= 2) {
    const EnsembleRule rule = cfg.ensemble_rule == "mean-logit"
                                  ? EnsembleRule::mean_logit
                                  : EnsembleRule::mean_softmax;
    summary.ensemble_acc =
        rule == EnsembleRule::mean_softmax
            ? result.final_ensemble_acc
            : evaluate_ensemble({result.state.peers.data(), result.state.peers.size()},
                                *data, rule);
  }
  return summary;
}

const std::vector<std::string>& ablation_modes() {
  static const std::vector<std::string> modes = {"ablation-none", "ablation-mmd",
                                                 "ablation-pt", "ours"};
  return modes;
}

std::vector<double> AblationResult::row_mean(const std::string& mode) const {
  std::vector<double> out;
  for (const AblationCell& c : cells)
    if (c.mode == mode) out.push_back(c.mean_peer_acc);
  return out;
}

AblationResult run_ablation(const RunConfig& base,
                            const std::vector<std::uint64_t>& seeds,
                            bool with_baseline, const std::string& out_root,
                            bool verbose) {
  std::vector<std::string> modes = ablation_modes();
  if (with_baseline) modes.push_back("baseline");

  const datasets::Dataset data = load_dataset(base.dataset);

  AblationResult result;
  for (const std::string& mode : modes) {
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.mode = mode;
      cfg.seed = seed;
      cfg.out_dir = out_root.empty()
                        ? ""
                        : (fs::path(out_root) / mode / ("seed" + std::to_string(seed)))
                              .string();
      if (verbose) std::printf("== %s seed %llu ==\n", mode.c_str(),
                               static_cast<unsigned long long>(seed));
      const RunSummary s = run_experiment(cfg, &data, verbose);
      result.cells.push_back(
          {mode, seed, s.peer_acc, s.mean_peer_acc, s.ensemble_acc});
    }
  }

  if (!out_root.empty()) {
    fs::create_directories(out_root);
    const std::string path = (fs::path(out_root) / "ablation_summary.csv").string();
    std::ofstream out(path, std::ios::trunc);
    if (!out.good()) throw std::runtime_error("cannot write '" + path + "'");
    out << "mode,seed,mean_peer_acc,ensemble_acc,peer_accs\n";
    for (const AblationCell& c : result.cells) {
      out << c.mode << "," << c.seed << "," << c.mean_peer_acc << "," << c.ensemble_acc
          << ",";
      for (std::size_t i = 0; i < c.peer_acc.size(); ++i)
        out << (i ? ";" : "") << c.peer_acc[i];
      out << "\n";
    }
  }
  return result;
}

namespace {

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0
                    : std::accumulate(xs.begin(), xs.end(), 0.0) /
                          static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double sq = 0.0;
  for (double x : xs) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(xs.size()));
}

void print_ablation_matrix(const AblationResult& result) {
  std::printf("%-14s %-8s %-5s %-5s %-18s %s\n", "mode", "cutnmix", "mmd", "pt",
              "mean acc (std)", "ensemble");
  struct RowSpec {
    const char* mode;
    bool mix, mmd, pt;
  };
  const RowSpec rows[] = {{"ablation-none", true, false, false},
                          {"ablation-mmd", true, true, false},
                          {"ablation-pt", true, false, true},
                          {"ours", true, true, true},
                          {"baseline", false, false, false}};
  for (const RowSpec& row : rows) {
    const std::vector<double> means = result.row_mean(row.mode);
    if (means.empty()) continue;
    std::vector<double> ens;
    for (const AblationCell& c : result.cells)
      if (c.mode == row.mode) ens.push_back(c.ensemble_acc);
    std::printf("%-14s %-8s %-5s %-5s %.4f (%.4f)    %.4f\n", row.mode,
                row.mix ? "x" : "", row.mmd ? "x" : "", row.pt ? "x" : "",
                mean_of(means), std_of(means), mean_of(ens));
  }
}

} // namespace

void plot_runs(const std::string& root, const std::string& out_svg) {
  // <root>/<group>/seed*/metrics.csv, or a single run directory
  std::map<std::string, std::vector<std::string>> group_csvs;
  if (fs::exists(fs::path(root) / "metrics.csv")) {
    group_csvs["run"].push_back((fs::path(root) / "metrics.csv").string());
  } else {
    for (const fs::directory_entry& group : fs::directory_iterator(root)) {
      if (!group.is_directory()) continue;
      for (const fs::directory_entry& run : fs::directory_iterator(group.path())) {
        const fs::path csv = run.path() / "metrics.csv";
        if (fs::exists(csv))
          group_csvs[group.path().filename().string()].push_back(csv.string());
      }
    }
  }
  if (group_csvs.empty())
    throw std::runtime_error("plot: no metrics.csv found under '" + root + "'");

  std::vector<Curve> curves;
  for (const auto& [group, csvs] : group_csvs) {
    std::map<int, std::vector<double>> per_epoch; // epoch -> per-run mean test acc
    for (const std::string& csv : csvs) {
      std::map<int, std::pair<double, int>> acc;
      for (const trainer::MetricRow& r : trainer::MetricsCsv::read(csv)) {
        acc[r.epoch].first += r.test_acc;
        acc[r.epoch].second += 1;
      }
      for (const auto& [epoch, pair] : acc)
        per_epoch[epoch].push_back(pair.first / pair.second);
    }
    Curve c;
    c.label = group;
    for (const auto& [epoch, values] : per_epoch) {
      c.x.push_back(epoch);
      c.mean.push_back(mean_of(values));
      c.std.push_back(std_of(values));
    }
    curves.push_back(std::move(c));
  }
  if (!fs::path(out_svg).parent_path().empty())
    fs::create_directories(fs::path(out_svg).parent_path());
  write_svg_curves(out_svg, "test accuracy over training", "epoch", "top-1 accuracy",
                   curves);
}

// ---------------------------------------------------------------------------
// CLI

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!token.empty()) seeds.push_back(std::stoull(token));
      token.clear();
    } else {
      token += ch;
    }
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds: empty seed list");
  return seeds;
}

void apply_dataset_flag(RunConfig& cfg, const std::string& value) {
  const std::size_t colon = value.find(':');
  const std::string name = value.substr(0, colon);
  if (name != "synthetic" && name != "cifar10" && name != "cifar100")
    throw std::invalid_argument("--dataset: expected synthetic|cifar10|cifar100" +
                                std::string("[:path], got '") + value + "'");
  cfg.dataset.name = name;
  if (colon != std::string::npos) cfg.dataset.path = value.substr(colon + 1);
}

int cli_selftest() {
  std::vector<selfcheck::CheckResult> all;
  auto run = [&](std::vector<selfcheck::CheckResult> results) {
    for (selfcheck::CheckResult& r : results) all.push_back(std::move(r));
  };
  run(selfcheck::loss_oracle_suite());
  run(selfcheck::gradient_suite());
  run(selfcheck::mixing_suite());
  run(selfcheck::beta_uniformity_suite());
  run(selfcheck::format_suite(
      (fs::temp_directory_path() / "cnmix_selftest").string()));

  bool ok = true;
  for (const selfcheck::CheckResult& r : all) {
    std::printf("[%s] %s: %s\n", r.pass ? "ok" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    ok = ok && r.pass;
  }
  std::printf("%s\n", ok ? "selftest passed" : "selftest FAILED");
  return ok ? 0 : 1;
}

int cli_eval(const std::string& run_dir) {
  const RunConfig cfg =
      load_run_config((fs::path(run_dir) / "config.resolved.json").string());
  const datasets::Dataset data = load_dataset(cfg.dataset);

  trainer::TrainOptions opts = make_train_options(cfg);
  trainer::TrainState state = trainer::init_state(opts, data.num_classes);
  const std::string ckpt_path =
      (fs::path(run_dir) / "checkpoints" / "last.ckpt").string();
  trainer::restore_checkpoint(models::load_checkpoint(ckpt_path), state);

  double mean = 0.0;
  for (std::size_t j = 0; j < state.peers.size(); ++j) {
    const double acc = evaluate(state.peers[j], data, true);
    mean += acc;
    std::printf("peer %zu test accuracy: %.4f\n", j, acc);
  }
  mean /= static_cast<double>(state.peers.size());
  std::printf("mean peer accuracy: %.4f\n", mean);
  if (state.peers.size() >= 2) {
    const EnsembleRule rule = cfg.ensemble_rule == "mean-logit"
                                  ? EnsembleRule::mean_logit
                                  : EnsembleRule::mean_softmax;
    std::printf("ensemble accuracy: %.4f\n",
                evaluate_ensemble({state.peers.data(), state.peers.size()}, data, rule));
  }
  return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"cnmix: mixed-sample augmentation and online distillation toolkit"};
  app.require_subcommand(1);

  std::string config_path, dataset_flag, arch_flag, mode_flag, out_flag;
  std::uint64_t seed_flag = 0;
  int epochs_flag = -1;
  bool resume = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed_flag, "run seed");
    cmd->add_option("--dataset", dataset_flag,
                    "synthetic|cifar10|cifar100[:path]");
    cmd->add_option("--arch", arch_flag, "peer architecture");
    cmd->add_option("--epochs", epochs_flag, "override max_epochs");
    cmd->add_option("--out", out_flag, "output directory");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train one configuration");
  add_common(train_cmd);
  train_cmd->add_option("--mode", mode_flag,
                        "ours|dml|cutmix-solo|baseline|ablation-{none,mmd,pt}");
  train_cmd->add_flag("--resume", resume, "continue from checkpoints/last.ckpt");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a finished run");
  std::string eval_dir;
  eval_cmd->add_option("--out", eval_dir, "run directory to evaluate")->required();

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "run the ablation toggle matrix");
  add_common(ablate_cmd);
  std::string seeds_text = "1,2,3,4,5";
  bool with_baseline = false;
  ablate_cmd->add_option("--seeds", seeds_text, "comma-separated seed list");
  ablate_cmd->add_flag("--with-baseline", with_baseline,
                       "also run the no-distillation baseline");

  CLI::App* plot_cmd = app.add_subcommand("plot", "render accuracy curves as SVG");
  std::string plot_root, plot_out;
  plot_cmd->add_option("--runs", plot_root, "directory of runs (mode/seed layout)")
      ->required();
  plot_cmd->add_option("--out", plot_out, "output SVG path");

  CLI::App* selftest_cmd =
      app.add_subcommand("selftest", "run the oracle and invariant suites");
  (void)selftest_cmd;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    auto build_config = [&]() {
      RunConfig cfg;
      if (!config_path.empty()) cfg = load_run_config(config_path);
      if (seed_flag != 0) cfg.seed = seed_flag;
      if (!dataset_flag.empty()) apply_dataset_flag(cfg, dataset_flag);
      if (!arch_flag.empty()) cfg.arch = arch_flag;
      if (!mode_flag.empty()) cfg.mode = mode_flag;
      if (epochs_flag >= 0) cfg.optim.max_epochs = epochs_flag;
      if (!out_flag.empty()) cfg.out_dir = out_flag;
      return cfg;
    };

    if (app.got_subcommand(train_cmd)) {
      RunConfig cfg = build_config();
      trainer::TrainOptions opts = make_train_options(cfg);
      opts.resume = resume;
      opts.checkpoint_meta["config_digest"] = config_digest(cfg);
      const datasets::Dataset data = load_dataset(cfg.dataset);
      if (!cfg.out_dir.empty() && !resume) save_resolved_config(cfg, cfg.out_dir);
      if (models::heavy_for_cpu(cfg.arch))
        std::cerr << "note: arch '" << cfg.arch << "' is heavy for CPU training\n";

      trainer::TrainResult result = trainer::train(
          opts, data, [&](int epoch, const std::vector<trainer::MetricRow>& rows) {
            double test = 0.0;
            for (const trainer::MetricRow& r : rows) test += r.test_acc;
            std::printf("epoch %3d  test_acc %.4f\n", epoch,
                        test / static_cast<double>(rows.size()));
            std::fflush(stdout);
          });
      for (std::size_t j = 0; j < result.final_test_acc.size(); ++j)
        std::printf("peer %zu final test accuracy: %.4f\n", j,
                    result.final_test_acc[j]);
      if (result.state.peers.size() >= 2)
        std::printf("ensemble accuracy: %.4f\n", result.final_ensemble_acc);
      if (result.state.teacher)
        std::printf("teacher accuracy: %.4f\n", result.final_teacher_acc);
      return 0;
    }

    if (app.got_subcommand(eval_cmd)) return cli_eval(eval_dir);

    if (app.got_subcommand(ablate_cmd)) {
      RunConfig cfg = build_config();
      const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_text);
      const std::string out_root = out_flag.empty() ? "ablation" : out_flag;
      const AblationResult result =
          run_ablation(cfg, seeds, with_baseline, out_root, true);
      print_ablation_matrix(result);
      return 0;
    }

    if (app.got_subcommand(plot_cmd)) {
      if (plot_out.empty())
        plot_out = (fs::path(plot_root) / "plots" / "accuracy.svg").string();
      plot_runs(plot_root, plot_out);
      std::printf("wrote %s\n", plot_out.c_str());
      return 0;
    }

    if (app.got_subcommand(selftest_cmd)) return cli_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("cnmix");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace cnmix::harness
