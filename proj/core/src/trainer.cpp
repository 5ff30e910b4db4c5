#include "cnmix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "cnmix/augment.hpp"
#include "cnmix/eval.hpp"

namespace cnmix::trainer {

namespace {

// Runs fn(j) for every peer, one thread per extra peer. Each peer touches
// only its own network, optimizer and gradient buffers; shared inputs are
// read-only, so the result is identical to the sequential order.
void for_each_peer(int num_peers, const std::function<void(int)>& fn) {
  if (num_peers == 1) {
    fn(0);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(num_peers));
  std::vector<std::thread> workers;
  for (int j = 1; j < num_peers; ++j)
    workers.emplace_back([&, j] {
      try {
        fn(j);
      } catch (...) {
        errors[static_cast<std::size_t>(j)] = std::current_exception();
      }
    });
  try {
    fn(0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (std::thread& t : workers) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

MatD to_double(const MatF& m) {
  MatD out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i];
  return out;
}

MatF to_float(const MatD& m) {
  MatF out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i)
    out.v[i] = static_cast<float>(m.v[i]);
  return out;
}

void check_finite(double value, const char* part, const TrainState& st) {
  if (!std::isfinite(value))
    throw std::runtime_error("train_step: non-finite " + std::string(part) +
                             " loss at epoch " + std::to_string(st.epoch) + ", step " +
                             std::to_string(st.step));
}

std::vector<int> identity_perm(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

} // namespace

TrainState init_state(const TrainOptions& opt, int num_classes) {
  if (opt.distill.num_peers < 1)
    throw std::invalid_argument("init_state: need at least one peer");
  TrainState st;
  st.seeds = SeedTree(opt.seed);
  st.peers.reserve(static_cast<std::size_t>(opt.distill.num_peers));
  for (int j = 0; j < opt.distill.num_peers; ++j) {
    Rng init = st.seeds.stream(seed_tag::init, static_cast<std::uint64_t>(j));
    st.peers.push_back(models::PeerStudent::build(opt.arch, num_classes, init));
  }
  for (models::PeerStudent& peer : st.peers)
    st.peer_opts.emplace_back(peer.params(), opt.optim);

  if (opt.teacher_enabled) {
    std::vector<int> dims;
    for (const models::PeerStudent& peer : st.peers) dims.push_back(peer.feature_dim());
    Rng init = st.seeds.stream(seed_tag::teacher, 0);
    st.teacher = models::PeerTeacher::build(num_classes, dims, init);
    st.teacher_opt.emplace(st.teacher->params(), opt.optim);
  }
  return st;
}

StepMetrics train_step(TrainState& st, const TrainOptions& opt,
                       const ImageBatch& raw_batch) {
  const int num_peers = static_cast<int>(st.peers.size());
  if (raw_batch.n < 2)
    throw std::invalid_argument("train_step: batch must have n >= 2");

  const auto epoch = static_cast<std::uint64_t>(st.epoch);
  const auto step = static_cast<std::uint64_t>(st.step);

  // per-peer distortion, then the shared mixing plan
  std::vector<ImageBatch> views(static_cast<std::size_t>(num_peers));
  for (int j = 0; j < num_peers; ++j) {
    if (opt.distortion) {
      Rng rng = st.seeds.stream(seed_tag::distort, static_cast<std::uint64_t>(j), epoch, step);
      views[static_cast<std::size_t>(j)] = augment::base_distort(raw_batch, rng);
    } else {
      views[static_cast<std::size_t>(j)] = raw_batch;
    }
  }

  std::vector<MixedBatch> mixed;
  if (opt.mixing) {
    Rng rng = st.seeds.stream(seed_tag::mix, epoch, step);
    const augment::MixPlan plan = augment::detail::plan_impl(
        raw_batch.n, raw_batch.width, raw_batch.height, num_peers, rng);
    mixed = augment::apply_mix_plan(views, plan);
  } else {
    const SoftLabelBatch onehot = augment::mix_soft_labels(
        raw_batch.labels, raw_batch.num_classes, identity_perm(raw_batch.n), 1.0);
    mixed.resize(static_cast<std::size_t>(num_peers));
    for (int j = 0; j < num_peers; ++j) {
      MixedBatch& m = mixed[static_cast<std::size_t>(j)];
      const ImageBatch& v = views[static_cast<std::size_t>(j)];
      m.n = v.n;
      m.channels = v.channels;
      m.height = v.height;
      m.width = v.width;
      m.pixels = v.pixels;
      m.soft_labels = onehot;
    }
  }
  const SoftLabelBatch& targets = mixed[0].soft_labels;

  // forward snapshot of every peer
  std::vector<Tensor4> inputs(static_cast<std::size_t>(num_peers));
  std::vector<models::ForwardResult> fwd(static_cast<std::size_t>(num_peers));
  for (int j = 0; j < num_peers; ++j)
    inputs[static_cast<std::size_t>(j)] = mixed[static_cast<std::size_t>(j)].to_tensor();
  for_each_peer(num_peers, [&](int j) {
    fwd[static_cast<std::size_t>(j)] =
        st.peers[static_cast<std::size_t>(j)].forward(inputs[static_cast<std::size_t>(j)], true);
  });

  std::vector<MatD> logits(static_cast<std::size_t>(num_peers));
  std::vector<MatD> features(static_cast<std::size_t>(num_peers));
  std::vector<MatF> feature_views(static_cast<std::size_t>(num_peers));
  for (int j = 0; j < num_peers; ++j) {
    logits[static_cast<std::size_t>(j)] = to_double(fwd[static_cast<std::size_t>(j)].logits);
    features[static_cast<std::size_t>(j)] = to_double(fwd[static_cast<std::size_t>(j)].features);
    feature_views[static_cast<std::size_t>(j)] = fwd[static_cast<std::size_t>(j)].features;
  }

  // teacher logits from the same snapshot; the values act as constants in
  // every peer loss below
  MatD teacher_logits;
  if (st.teacher) {
    teacher_logits = to_double(st.teacher->forward(feature_views));
  }

  const double lr = lr_at(opt.optim, st.epoch);
  const bool use_dml = opt.distill.dml_weight > 0.0 && num_peers >= 2;
  const bool use_mmd = opt.distill.mmd_weight > 0.0 && num_peers >= 2;
  const bool use_pt = opt.distill.pt_weight > 0.0 && st.teacher.has_value();

  StepMetrics metrics;
  metrics.peer_parts.resize(static_cast<std::size_t>(num_peers));
  metrics.peer_total.resize(static_cast<std::size_t>(num_peers));

  auto update_peer = [&](int j) {
    const auto ju = static_cast<std::size_t>(j);
    losses::LossParts parts;

    const losses::LossValue ce = losses::soft_ce(logits[ju], targets);
    parts.ce = ce.value;
    MatD d_logits = ce.grad;

    if (use_dml) {
      const losses::LossValue dml =
          losses::dml_loss(logits, j, opt.distill.temperature);
      parts.dml = dml.value;
      for (std::size_t i = 0; i < d_logits.v.size(); ++i)
        d_logits.v[i] += opt.distill.dml_weight * dml.grad.v[i];
    }

    MatD d_features;
    if (use_mmd) {
      const losses::LossValue mmd = losses::mmd_loss(features, j);
      parts.mmd = mmd.value;
      d_features = mmd.grad;
      for (double& g : d_features.v) g *= opt.distill.mmd_weight;
    }

    if (use_pt) {
      const losses::LossValue pt =
          losses::pt_loss(logits[ju], teacher_logits, opt.distill.temperature);
      parts.pt = pt.value;
      for (std::size_t i = 0; i < d_logits.v.size(); ++i)
        d_logits.v[i] += opt.distill.pt_weight * pt.grad.v[i];
    }

    check_finite(parts.ce, "ce", st);
    check_finite(parts.dml, "dml", st);
    check_finite(parts.mmd, "mmd", st);
    check_finite(parts.pt, "pt", st);
    const double total = losses::total_loss(opt.distill, parts);
    check_finite(total, "total", st);

    metrics.peer_parts[ju] = parts;
    metrics.peer_total[ju] = total;

    st.peers[ju].zero_grad();
    st.peers[ju].backward(to_float(d_logits),
                          d_features.size() ? to_float(d_features) : MatF{});
    st.peer_opts[ju].step(lr);
  };

  if (opt.update_rule == UpdateRule::simultaneous || num_peers == 1) {
    for_each_peer(num_peers, update_peer);
  } else {
    // alternating: later peers distill from the already-updated predictions
    for (int j = 0; j < num_peers; ++j) {
      update_peer(j);
      if (j + 1 < num_peers) {
        const auto ju = static_cast<std::size_t>(j);
        fwd[ju] = st.peers[ju].forward(inputs[ju], true);
        logits[ju] = to_double(fwd[ju].logits);
        features[ju] = to_double(fwd[ju].features);
        feature_views[ju] = fwd[ju].features;
      }
    }
  }

  // the teacher learns from the snapshot features; students are isolated
  // because no feature gradient is produced here
  if (st.teacher && opt.update_teacher) {
    const losses::LossValue tce = losses::soft_ce(teacher_logits, targets);
    metrics.teacher_ce = tce.value;
    check_finite(tce.value, "teacher_ce", st);
    st.teacher->params().zero_grad();
    st.teacher->accumulate_grads(feature_views, tce.grad);
    st.teacher_opt->step(lr);
  }

  ++st.step;
  return metrics;
}

models::Checkpoint make_checkpoint(const TrainState& st, const TrainOptions& opt,
                                   int num_classes) {
  models::Checkpoint ckpt;
  ckpt.meta["epoch"] = std::to_string(st.epoch);
  ckpt.meta["seed"] = std::to_string(opt.seed);
  ckpt.meta["arch"] = opt.arch;
  ckpt.meta["num_classes"] = std::to_string(num_classes);
  ckpt.meta["num_peers"] = std::to_string(st.peers.size());
  ckpt.meta["teacher"] = st.teacher ? "1" : "0";
  for (const auto& [key, value] : opt.checkpoint_meta) ckpt.meta[key] = value;

  auto dump_registry = [&](nn::ParamRegistry& reg, const std::string& prefix) {
    for (const nn::ParamRef& r : reg.refs()) {
      models::CheckpointArray a;
      a.name = prefix + r.name;
      a.shape = {static_cast<std::int64_t>(r.value->size())};
      a.data = *r.value;
      ckpt.arrays.push_back(std::move(a));
    }
  };
  auto dump_momentum = [&](const Sgd& sgd, const std::string& prefix) {
    const std::vector<std::string> names = sgd.momentum_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      models::CheckpointArray a;
      a.name = prefix + "opt/" + names[i];
      a.shape = {static_cast<std::int64_t>(sgd.momentum()[i].size())};
      a.data = sgd.momentum()[i];
      ckpt.arrays.push_back(std::move(a));
    }
  };

  for (std::size_t j = 0; j < st.peers.size(); ++j) {
    const std::string prefix = "peer" + std::to_string(j) + "/";
    dump_registry(const_cast<models::PeerStudent&>(st.peers[j]).params(), prefix);
    dump_momentum(st.peer_opts[j], prefix);
  }
  if (st.teacher) {
    dump_registry(const_cast<models::PeerTeacher&>(*st.teacher).params(), "teacher/");
    dump_momentum(*st.teacher_opt, "teacher/");
  }
  return ckpt;
}

void restore_checkpoint(const models::Checkpoint& ckpt, TrainState& st) {
  auto load_registry = [&](nn::ParamRegistry& reg, const std::string& prefix) {
    for (nn::ParamRef& r : reg.refs()) {
      const models::CheckpointArray* a = ckpt.find(prefix + r.name);
      if (!a) throw std::runtime_error("checkpoint missing array '" + prefix + r.name + "'");
      if (a->data.size() != r.value->size())
        throw std::runtime_error("checkpoint array '" + prefix + r.name +
                                 "' has the wrong size");
      *r.value = a->data;
    }
  };
  auto load_momentum = [&](Sgd& sgd, const std::string& prefix) {
    const std::vector<std::string> names = sgd.momentum_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string full = prefix + "opt/" + names[i];
      const models::CheckpointArray* a = ckpt.find(full);
      if (!a) throw std::runtime_error("checkpoint missing array '" + full + "'");
      if (a->data.size() != sgd.momentum()[i].size())
        throw std::runtime_error("checkpoint array '" + full + "' has the wrong size");
      sgd.momentum()[i] = a->data;
    }
  };

  for (std::size_t j = 0; j < st.peers.size(); ++j) {
    const std::string prefix = "peer" + std::to_string(j) + "/";
    load_registry(st.peers[j].params(), prefix);
    load_momentum(st.peer_opts[j], prefix);
  }
  if (st.teacher) {
    load_registry(st.teacher->params(), "teacher/");
    load_momentum(*st.teacher_opt, "teacher/");
  }
  st.epoch = std::stoi(ckpt.meta.at("epoch"));
  st.step = 0;
}

TrainResult train(const TrainOptions& opt, const datasets::Dataset& data,
                  const EpochCallback& on_epoch) {
  namespace fs = std::filesystem;
  const int num_peers = opt.distill.num_peers;

  TrainState st = init_state(opt, data.num_classes);
  int start_epoch = 0;

  std::string csv_path, ckpt_path;
  std::unique_ptr<MetricsCsv> csv;
  if (!opt.out_dir.empty()) {
    fs::create_directories(fs::path(opt.out_dir) / "checkpoints");
    csv_path = (fs::path(opt.out_dir) / "metrics.csv").string();
    ckpt_path = (fs::path(opt.out_dir) / "checkpoints" / "last.ckpt").string();
  }

  if (opt.resume) {
    if (ckpt_path.empty())
      throw std::invalid_argument("train: resume requires an output directory");
    const models::Checkpoint ckpt = models::load_checkpoint(ckpt_path);
    if (ckpt.meta.at("seed") != std::to_string(opt.seed))
      throw std::runtime_error("train: checkpoint seed does not match the run seed");
    if (ckpt.meta.at("arch") != opt.arch)
      throw std::runtime_error("train: checkpoint arch does not match the run config");
    restore_checkpoint(ckpt, st);
    start_epoch = st.epoch + 1;

    // drop rows from any interrupted epoch past the checkpoint
    std::vector<MetricRow> rows = MetricsCsv::read(csv_path);
    MetricsCsv rewritten(csv_path, false);
    for (const MetricRow& r : rows)
      if (r.epoch < start_epoch) rewritten.write(r);
    csv = std::make_unique<MetricsCsv>(csv_path, true);
  } else if (!csv_path.empty()) {
    csv = std::make_unique<MetricsCsv>(csv_path, false);
  }

  std::vector<int> train_subset;
  const int subset = std::min(opt.eval_train_subset, data.train_size());
  for (int i = 0; i < subset; ++i) train_subset.push_back(i);

  TrainResult result{std::move(st), {}, 0.0, {}};
  TrainState& state = result.state;

  for (int epoch = start_epoch; epoch < opt.optim.max_epochs; ++epoch) {
    state.epoch = epoch;
    state.step = 0;

    std::vector<losses::LossParts> sums(static_cast<std::size_t>(num_peers));
    std::vector<double> total_sums(static_cast<std::size_t>(num_peers), 0.0);
    int steps = 0;

    const auto batches = datasets::shuffled_batches(data.train_size(),
                                                    opt.optim.batch_size, opt.seed, epoch);
    for (const std::vector<int>& idx : batches) {
      const ImageBatch raw = data.make_batch(true, idx);
      const StepMetrics m = train_step(state, opt, raw);
      for (int j = 0; j < num_peers; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        sums[ju].ce += m.peer_parts[ju].ce;
        sums[ju].dml += m.peer_parts[ju].dml;
        sums[ju].mmd += m.peer_parts[ju].mmd;
        sums[ju].pt += m.peer_parts[ju].pt;
        total_sums[ju] += m.peer_total[ju];
      }
      ++steps;
    }

    const double lr = lr_at(opt.optim, epoch);
    std::vector<MetricRow> rows(static_cast<std::size_t>(num_peers));
    for_each_peer(num_peers, [&](int j) {
      const auto ju = static_cast<std::size_t>(j);
      MetricRow& r = rows[ju];
      r.epoch = epoch;
      r.peer = j;
      if (steps > 0) {
        r.ce = sums[ju].ce / steps;
        r.dml = sums[ju].dml / steps;
        r.mmd = sums[ju].mmd / steps;
        r.pt = sums[ju].pt / steps;
        r.total = total_sums[ju] / steps;
      }
      r.lr = lr;
      r.train_acc = train_subset.empty()
                        ? 0.0
                        : harness::evaluate_indices(state.peers[ju], data, false,
                                                    train_subset);
      r.test_acc = harness::evaluate(state.peers[ju], data, true);
    });

    if (csv)
      for (const MetricRow& r : rows) csv->write(r);
    if (!ckpt_path.empty())
      models::save_checkpoint(make_checkpoint(state, opt, data.num_classes), ckpt_path);
    if (on_epoch) on_epoch(epoch, rows);
    result.last_epoch_rows = rows;
  }

  result.final_test_acc.resize(static_cast<std::size_t>(num_peers));
  for_each_peer(num_peers, [&](int j) {
    result.final_test_acc[static_cast<std::size_t>(j)] =
        harness::evaluate(state.peers[static_cast<std::size_t>(j)], data, true);
  });
  if (num_peers >= 2)
    result.final_ensemble_acc = harness::evaluate_ensemble(
        {state.peers.data(), state.peers.size()}, data);
  if (state.teacher) result.final_teacher_acc = evaluate_teacher(state, data);
  return result;
}

double evaluate_teacher(TrainState& state, const datasets::Dataset& data,
                        int batch_size) {
  if (!state.teacher) throw std::invalid_argument("evaluate_teacher: no teacher");
  const int n = data.test_size();
  if (n == 0) throw std::invalid_argument("evaluate_teacher: empty test split");
  long correct = 0;
  std::vector<int> idx(static_cast<std::size_t>(batch_size));
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    idx.resize(static_cast<std::size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const ImageBatch batch = data.make_batch(false, idx);
    const Tensor4 pixels = batch.to_tensor();
    std::vector<MatF> features(state.peers.size());
    for (std::size_t j = 0; j < state.peers.size(); ++j)
      features[j] = state.peers[j].forward(pixels, false).features;
    const MatF logits = state.teacher->forward(features);
    correct += harness::correct_top1(to_double(logits), batch.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

} // namespace cnmix::trainer
