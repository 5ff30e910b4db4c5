#include "cnmix/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>

#include "cnmix/augment.hpp"
#include "cnmix/datasets.hpp"
#include "cnmix/losses.hpp"
#include "cnmix/rng.hpp"
#include "cnmix/tensor.hpp"

namespace cnmix::selfcheck {

namespace {

std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), format, a, b);
  return buf;
}

// --------------------------------------------------------------------------
// Reference implementations: plain loops, unstabilized softmax, no sharing
// with the library code paths.

std::vector<double> ref_softmax(const double* z, int k, double tau) {
  std::vector<double> p(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    p[static_cast<std::size_t>(j)] = std::exp(z[j] / tau);
    sum += p[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < k; ++j) p[static_cast<std::size_t>(j)] /= sum;
  return p;
}

double ref_soft_ce(const MatD& logits, const SoftLabelBatch& targets) {
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    const std::vector<double> p = ref_softmax(logits.row(i), logits.cols, 1.0);
    const double* t = targets.row(i);
    for (int j = 0; j < logits.cols; ++j)
      if (t[j] > 0.0) total -= t[j] * std::log(p[static_cast<std::size_t>(j)]);
  }
  return total / logits.rows;
}

double ref_kd(const MatD& student, const MatD& teacher, double tau) {
  double total = 0.0;
  for (int i = 0; i < student.rows; ++i) {
    const std::vector<double> ps = ref_softmax(student.row(i), student.cols, tau);
    const std::vector<double> pt = ref_softmax(teacher.row(i), teacher.cols, tau);
    for (int j = 0; j < student.cols; ++j)
      total += pt[static_cast<std::size_t>(j)] *
               std::log(pt[static_cast<std::size_t>(j)] / ps[static_cast<std::size_t>(j)]);
  }
  return tau * tau * total / student.rows;
}

double ref_dml(const std::vector<MatD>& all_logits, int peer, double tau) {
  double total = 0.0;
  int terms = 0;
  for (int other = 0; other < static_cast<int>(all_logits.size()); ++other) {
    if (other == peer) continue;
    total += ref_kd(all_logits[static_cast<std::size_t>(peer)],
                    all_logits[static_cast<std::size_t>(other)], tau);
    ++terms;
  }
  return total / terms;
}

double ref_mmd(const std::vector<MatD>& all_features, int peer) {
  const MatD& self = all_features[static_cast<std::size_t>(peer)];
  const int n = self.rows, d = self.cols;
  double total = 0.0;
  int terms = 0;
  for (int other = 0; other < static_cast<int>(all_features.size()); ++other) {
    if (other == peer) continue;
    const MatD& f = all_features[static_cast<std::size_t>(other)];
    double dist = 0.0;
    for (int j = 0; j < d; ++j) {
      double ma = 0.0, mb = 0.0;
      for (int i = 0; i < n; ++i) {
        ma += self.at(i, j);
        mb += f.at(i, j);
      }
      const double diff = ma / n - mb / n;
      dist += diff * diff;
    }
    total += dist;
    ++terms;
  }
  return total / terms;
}

MatD random_logits(Rng& rng, int n, int k, double scale) {
  MatD m(n, k);
  for (double& v : m.v) v = rng.uniform(-scale, scale);
  return m;
}

SoftLabelBatch random_simplex(Rng& rng, int n, int k) {
  SoftLabelBatch t(n, k);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    double* row = t.row(i);
    for (int j = 0; j < k; ++j) {
      row[j] = -std::log(1.0 - rng.uniform() + 1e-12);
      sum += row[j];
    }
    for (int j = 0; j < k; ++j) row[j] /= sum;
  }
  return t;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({1.0, std::abs(got), std::abs(want)});
}

} // namespace

bool all_pass(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.pass; });
}

std::vector<CheckResult> loss_oracle_suite(int instances, double tol,
                                           std::uint64_t seed) {
  Rng rng((SeedTree(seed).stream(1)));
  double worst_ce = 0, worst_kd = 0, worst_dml = 0, worst_mmd = 0, worst_pt = 0;

  for (int t = 0; t < instances; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    const int d = 1 + static_cast<int>(rng.uniform_int(7));
    const int peers = 2 + static_cast<int>(rng.uniform_int(3));
    const double taus[] = {0.5, 1.0, 2.0, 3.0};
    const double tau = taus[rng.uniform_int(4)];

    std::vector<MatD> logits, features;
    for (int j = 0; j < peers; ++j) {
      logits.push_back(random_logits(rng, n, k, 4.0));
      features.push_back(random_logits(rng, n, d, 2.0));
    }
    const SoftLabelBatch targets = random_simplex(rng, n, k);
    const int peer = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(peers)));

    worst_ce = std::max(worst_ce, rel_err(losses::soft_ce(logits[0], targets).value,
                                          ref_soft_ce(logits[0], targets)));
    worst_kd = std::max(worst_kd, rel_err(losses::kd_kl(logits[0], logits[1], tau).value,
                                          ref_kd(logits[0], logits[1], tau)));
    worst_dml = std::max(worst_dml, rel_err(losses::dml_loss(logits, peer, tau).value,
                                            ref_dml(logits, peer, tau)));
    worst_mmd = std::max(worst_mmd, rel_err(losses::mmd_loss(features, peer).value,
                                            ref_mmd(features, peer)));
    worst_pt = std::max(worst_pt, rel_err(losses::pt_loss(logits[0], logits[1], tau).value,
                                          ref_kd(logits[0], logits[1], tau)));
  }

  auto entry = [&](const char* name, double worst) {
    return CheckResult{name, worst <= tol, fmt("max rel err %.3g (tol %.3g)", worst, tol)};
  };
  return {entry("soft_ce vs direct summation", worst_ce),
          entry("kd_kl vs direct summation", worst_kd),
          entry("dml_loss vs direct summation", worst_dml),
          entry("mmd_loss vs direct summation", worst_mmd),
          entry("pt_loss vs direct summation", worst_pt)};
}

std::vector<CheckResult> gradient_suite(int instances, double tol, std::uint64_t seed) {
  Rng rng((SeedTree(seed).stream(2)));
  constexpr double h = 1e-5;
  double worst[5] = {0, 0, 0, 0, 0};

  auto fd_check = [&](MatD& x, const MatD& grad, const std::function<double()>& value,
                      double& worst_slot) {
    for (std::size_t e = 0; e < x.v.size(); ++e) {
      const double keep = x.v[e];
      x.v[e] = keep + h;
      const double up = value();
      x.v[e] = keep - h;
      const double down = value();
      x.v[e] = keep;
      const double fd = (up - down) / (2.0 * h);
      worst_slot = std::max(worst_slot, rel_err(grad.v[e], fd));
    }
  };

  for (int t = 0; t < instances; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_int(6));
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    const int d = 1 + static_cast<int>(rng.uniform_int(6));
    const int peers = 2 + static_cast<int>(rng.uniform_int(2));
    const double tau = 0.7 + rng.uniform(0.0, 2.5);

    std::vector<MatD> logits, features;
    for (int j = 0; j < peers; ++j) {
      logits.push_back(random_logits(rng, n, k, 3.0));
      features.push_back(random_logits(rng, n, d, 2.0));
    }
    const SoftLabelBatch targets = random_simplex(rng, n, k);

    fd_check(logits[0], losses::soft_ce(logits[0], targets).grad,
             [&] { return losses::soft_ce(logits[0], targets).value; }, worst[0]);
    fd_check(logits[0], losses::kd_kl(logits[0], logits[1], tau).grad,
             [&] { return losses::kd_kl(logits[0], logits[1], tau).value; }, worst[1]);
    fd_check(logits[0], losses::dml_loss(logits, 0, tau).grad,
             [&] { return losses::dml_loss(logits, 0, tau).value; }, worst[2]);
    fd_check(features[0], losses::mmd_loss(features, 0).grad,
             [&] { return losses::mmd_loss(features, 0).value; }, worst[3]);
    fd_check(logits[0], losses::pt_loss(logits[0], logits[1], tau).grad,
             [&] { return losses::pt_loss(logits[0], logits[1], tau).value; }, worst[4]);
  }

  const char* names[5] = {"soft_ce gradient vs finite differences",
                          "kd_kl gradient vs finite differences",
                          "dml_loss gradient vs finite differences",
                          "mmd_loss gradient vs finite differences",
                          "pt_loss gradient vs finite differences"};
  std::vector<CheckResult> out;
  for (int i = 0; i < 5; ++i)
    out.push_back({names[i], worst[i] <= tol,
                   fmt("max rel err %.3g (tol %.3g)", worst[i], tol)});
  return out;
}

std::vector<CheckResult> mixing_suite(int plans, std::uint64_t seed) {
  const SeedTree tree(seed);
  constexpr int W = 32, H = 32, C = 3, K = 7;

  bool provenance_ok = true, area_ok = true, labels_ok = true;
  bool cross_peer_ok = true, determinism_ok = true, perm_ok = true;
  double worst_area = 0.0;

  auto encode = [](int peer, int sample, int pos) {
    return static_cast<float>((peer * 16 + sample) * (C * H * W) + pos);
  };

  for (int p = 0; p < plans && provenance_ok && area_ok && labels_ok &&
                  cross_peer_ok && determinism_ok;
       ++p) {
    Rng setup = tree.stream(3, static_cast<std::uint64_t>(p));
    const int n = 2 + static_cast<int>(setup.uniform_int(7));
    const int peers = 2 + static_cast<int>(setup.uniform_int(2));

    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& label : labels) label = static_cast<int>(setup.uniform_int(K));

    std::vector<ImageBatch> views(static_cast<std::size_t>(peers));
    for (int j = 0; j < peers; ++j) {
      ImageBatch& b = views[static_cast<std::size_t>(j)];
      b.n = n;
      b.channels = C;
      b.height = H;
      b.width = W;
      b.num_classes = K;
      b.labels = labels;
      b.pixels.resize(static_cast<std::size_t>(n) * C * H * W);
      for (int i = 0; i < n; ++i)
        for (int pos = 0; pos < C * H * W; ++pos)
          b.pixels[static_cast<std::size_t>(i) * C * H * W + pos] = encode(j, i, pos);
    }

    Rng plan_rng = tree.stream(4, static_cast<std::uint64_t>(p));
    const augment::MixPlan plan = augment::cutnmix_plan(n, W, H, peers, plan_rng);
    const std::vector<MixedBatch> mixed = augment::apply_mix_plan(views, plan);

    // permutation is a bijection
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int v : plan.perm)
      if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]++) perm_ok = false;

    for (int j = 0; j < peers; ++j) {
      for (int i = 0; i < n; ++i) {
        const augment::RectMask& m = plan.masks[static_cast<std::size_t>(j)]
                                               [static_cast<std::size_t>(i)];
        // mask area bound
        const double frac = static_cast<double>(m.area()) / (W * H);
        worst_area = std::max(worst_area, std::abs(frac - plan.lam));
        if (std::abs(frac - plan.lam) > 0.07) area_ok = false;
        if (m.x0 < 0 || m.y0 < 0 || m.x0 + m.w > W || m.y0 + m.h > H) area_ok = false;

        // pixel provenance from the rectangle coordinates alone
        const int k = plan.perm[static_cast<std::size_t>(i)];
        for (int c = 0; c < C && provenance_ok; ++c)
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
              const int pos = (c * H + y) * W + x;
              const float got = mixed[static_cast<std::size_t>(j)].at(i, c, y, x);
              const float expect =
                  m.contains(x, y) ? encode(j, k, pos) : encode(j, i, pos);
              if (got != expect) {
                provenance_ok = false;
                break;
              }
            }
      }
    }

    // soft labels: simplex rows with at most two support points, identical
    // across peers at the bit level
    const SoftLabelBatch& soft = mixed[0].soft_labels;
    for (int i = 0; i < n; ++i) {
      const double* row = soft.row(i);
      double sum = 0.0;
      int support = 0;
      for (int c = 0; c < K; ++c) {
        if (row[c] < 0.0) labels_ok = false;
        if (row[c] != 0.0) ++support;
        sum += row[c];
      }
      if (std::abs(sum - 1.0) > 1e-6 || support > 2) labels_ok = false;
      if (plan.perm[static_cast<std::size_t>(i)] == i &&
          row[labels[static_cast<std::size_t>(i)]] != 1.0)
        labels_ok = false;
    }
    for (int j = 1; j < peers; ++j) {
      const SoftLabelBatch& other = mixed[static_cast<std::size_t>(j)].soft_labels;
      if (std::memcmp(other.probs.data(), soft.probs.data(),
                      soft.probs.size() * sizeof(double)) != 0)
        cross_peer_ok = false;
    }

    // seed determinism, spot-checked
    if (p % 97 == 0) {
      Rng again = tree.stream(4, static_cast<std::uint64_t>(p));
      const augment::MixPlan plan2 = augment::cutnmix_plan(n, W, H, peers, again);
      if (plan2.lam != plan.lam || plan2.perm != plan.perm) determinism_ok = false;
      for (int j = 0; j < peers && determinism_ok; ++j)
        for (int i = 0; i < n; ++i) {
          const augment::RectMask& a =
              plan.masks[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
          const augment::RectMask& b =
              plan2.masks[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
          if (a.x0 != b.x0 || a.y0 != b.y0 || a.w != b.w || a.h != b.h)
            determinism_ok = false;
        }
      const std::vector<MixedBatch> mixed2 = augment::apply_mix_plan(views, plan2);
      for (int j = 0; j < peers && determinism_ok; ++j)
        if (mixed2[static_cast<std::size_t>(j)].pixels !=
            mixed[static_cast<std::size_t>(j)].pixels)
          determinism_ok = false;
    }
  }

  return {
      {"pixel provenance", provenance_ok && perm_ok,
       provenance_ok ? "every output pixel traces to x_i or x_perm(i)" : "violated"},
      {"mask area bound", area_ok, fmt("max |area/WH - lam| = %.4f (bound 0.07)",
                                       worst_area)},
      {"soft labels on the simplex", labels_ok,
       "rows sum to one with at most two support points"},
      {"cross-peer label identity", cross_peer_ok, "bit-identical soft labels"},
      {"plan seed determinism", determinism_ok, "same seed, same plan and pixels"},
  };
}

std::vector<CheckResult> beta_uniformity_suite(std::uint64_t seed) {
  Rng rng((SeedTree(seed).stream(6)));
  constexpr int kDraws = 10000;
  std::vector<double> draws(kDraws);
  double mean = 0.0;
  bool in_range = true;
  for (double& d : draws) {
    d = augment::sample_lambda(rng, 1.0, 1.0);
    if (d < 0.0 || d > 1.0) in_range = false;
    mean += d;
  }
  mean /= kDraws;

  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double x = draws[static_cast<std::size_t>(i)];
    ks = std::max(ks, std::abs((i + 1.0) / kDraws - x));
    ks = std::max(ks, std::abs(x - static_cast<double>(i) / kDraws));
  }

  return {
      {"lambda draws stay in [0, 1]", in_range, "support of Beta(1,1)"},
      {"lambda mean near 1/2", std::abs(mean - 0.5) <= 0.02,
       fmt("mean %.4f (want 0.5 +/- 0.02)", mean)},
      {"lambda KS statistic", ks < 0.02, fmt("KS %.4f (bound 0.02)", ks)},
  };
}

std::vector<CheckResult> format_suite(const std::string& tmp_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(tmp_dir);
  std::vector<CheckResult> out;

  // record-size arithmetic, enforced by the strict readers
  const long long cifar10_batch = 10000LL * 3073LL;
  const long long cifar100_train = 50000LL * 3074LL;
  out.push_back({"cifar10 batch record arithmetic", cifar10_batch == 30730000LL,
                 "10000 x 3073 = 30730000 bytes"});
  out.push_back({"cifar100 train record arithmetic", cifar100_train == 153700000LL,
                 "50000 x 3074 = 153700000 bytes"});

  // a wrong-length file must be rejected with the expected byte count named
  {
    const std::string bad = (fs::path(tmp_dir) / "data_batch_1.bin").string();
    std::ofstream f(bad, std::ios::binary | std::ios::trunc);
    f << "not a cifar batch";
    f.close();
    bool rejected = false;
    try {
      datasets::read_cifar_file(bad, 1, 10000);
    } catch (const std::exception& e) {
      rejected = std::string(e.what()).find("30730000") != std::string::npos;
    }
    out.push_back({"wrong-length file names expected bytes", rejected,
                   "reader error mentions 30730000"});
  }

  // decode/encode round-trip through a synthetic export
  {
    const datasets::Dataset ds = datasets::make_synthetic(5, 64, 16, 11);
    const std::string path = (fs::path(tmp_dir) / "synthetic_train.bin").string();
    datasets::export_cifar10_layout(ds, true, path);
    const datasets::CifarRecords rec = datasets::read_cifar_file(path, 1);
    const std::string copy = (fs::path(tmp_dir) / "synthetic_roundtrip.bin").string();
    datasets::write_cifar_file(copy, rec);

    std::ifstream a(path, std::ios::binary), b(copy, std::ios::binary);
    std::vector<char> bytes_a((std::istreambuf_iterator<char>(a)),
                              std::istreambuf_iterator<char>());
    std::vector<char> bytes_b((std::istreambuf_iterator<char>(b)),
                              std::istreambuf_iterator<char>());
    const bool same = !bytes_a.empty() && bytes_a == bytes_b;
    out.push_back({"decode/encode round-trip", same,
                   fmt("%g bytes identical", static_cast<double>(bytes_a.size()))});
  }
  return out;
}

} // namespace cnmix::selfcheck
