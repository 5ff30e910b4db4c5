#include "cnmix/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "cnmix/tensor.hpp"

namespace cnmix::harness {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

template <class T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json root = json::parse(json_text);
  RunConfig cfg;

  check_keys(root,
             {"dataset", "arch", "mode", "distill", "optim", "seed", "out_dir",
              "update_rule", "ensemble_rule", "eval_train_subset"},
             "top level");

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    check_keys(d, {"name", "path", "num_classes", "n_train", "n_test", "gen_seed",
                   "difficulty"},
               "dataset");
    maybe(d, "name", cfg.dataset.name);
    maybe(d, "path", cfg.dataset.path);
    maybe(d, "num_classes", cfg.dataset.num_classes);
    maybe(d, "n_train", cfg.dataset.n_train);
    maybe(d, "n_test", cfg.dataset.n_test);
    maybe(d, "gen_seed", cfg.dataset.gen_seed);
    maybe(d, "difficulty", cfg.dataset.difficulty);
  }
  maybe(root, "arch", cfg.arch);
  maybe(root, "mode", cfg.mode);
  if (root.contains("distill")) {
    const json& d = root.at("distill");
    check_keys(d, {"num_peers", "temperature", "dml_weight", "mmd_weight", "pt_weight"},
               "distill");
    maybe(d, "num_peers", cfg.distill.num_peers);
    maybe(d, "temperature", cfg.distill.temperature);
    maybe(d, "dml_weight", cfg.distill.dml_weight);
    maybe(d, "mmd_weight", cfg.distill.mmd_weight);
    maybe(d, "pt_weight", cfg.distill.pt_weight);
  }
  if (root.contains("optim")) {
    const json& o = root.at("optim");
    check_keys(o,
               {"lr0", "momentum", "weight_decay", "nesterov", "milestones",
                "decay_factor", "max_epochs", "batch_size"},
               "optim");
    maybe(o, "lr0", cfg.optim.lr0);
    maybe(o, "momentum", cfg.optim.momentum);
    maybe(o, "weight_decay", cfg.optim.weight_decay);
    maybe(o, "nesterov", cfg.optim.nesterov);
    maybe(o, "milestones", cfg.optim.milestones);
    maybe(o, "decay_factor", cfg.optim.decay_factor);
    maybe(o, "max_epochs", cfg.optim.max_epochs);
    maybe(o, "batch_size", cfg.optim.batch_size);
  }
  maybe(root, "seed", cfg.seed);
  maybe(root, "out_dir", cfg.out_dir);
  maybe(root, "update_rule", cfg.update_rule);
  maybe(root, "ensemble_rule", cfg.ensemble_rule);
  maybe(root, "eval_train_subset", cfg.eval_train_subset);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string to_json(const RunConfig& cfg) {
  json root;
  root["dataset"] = {{"name", cfg.dataset.name},
                     {"path", cfg.dataset.path},
                     {"num_classes", cfg.dataset.num_classes},
                     {"n_train", cfg.dataset.n_train},
                     {"n_test", cfg.dataset.n_test},
                     {"gen_seed", cfg.dataset.gen_seed},
                     {"difficulty", cfg.dataset.difficulty}};
  root["arch"] = cfg.arch;
  root["mode"] = cfg.mode;
  root["distill"] = {{"num_peers", cfg.distill.num_peers},
                     {"temperature", cfg.distill.temperature},
                     {"dml_weight", cfg.distill.dml_weight},
                     {"mmd_weight", cfg.distill.mmd_weight},
                     {"pt_weight", cfg.distill.pt_weight}};
  root["optim"] = {{"lr0", cfg.optim.lr0},
                   {"momentum", cfg.optim.momentum},
                   {"weight_decay", cfg.optim.weight_decay},
                   {"nesterov", cfg.optim.nesterov},
                   {"milestones", cfg.optim.milestones},
                   {"decay_factor", cfg.optim.decay_factor},
                   {"max_epochs", cfg.optim.max_epochs},
                   {"batch_size", cfg.optim.batch_size}};
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  root["update_rule"] = cfg.update_rule;
  root["ensemble_rule"] = cfg.ensemble_rule;
  root["eval_train_subset"] = cfg.eval_train_subset;
  return root.dump(2) + "\n";
}

void save_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "config.resolved.json").string();
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw std::runtime_error("cannot write '" + path + "'");
  out << to_json(cfg);
}

std::string config_digest(const RunConfig& cfg) {
  const std::string text = to_json(cfg);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

} // namespace cnmix::harness
