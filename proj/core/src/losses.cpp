#include "cnmix/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cnmix::losses {

namespace {

constexpr double kLogFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

void softmax_row(const double* z, int k, double tau, double* out) {
  double zmax = z[0];
  for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    out[j] = std::exp((z[j] - zmax) / tau);
    sum += out[j];
  }
  for (int j = 0; j < k; ++j) out[j] /= sum;
}

void require_same_shape(const MatD& a, const MatD& b, const char* who) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

} // namespace

std::vector<double> softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("softmax: tau must be positive");
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  std::vector<double> out(logits.size());
  softmax_row(logits.data(), static_cast<int>(logits.size()), tau, out.data());
  return out;
}

LossValue soft_ce(const MatD& logits, const SoftLabelBatch& targets) {
  if (logits.rows != targets.n || logits.cols != targets.num_classes)
    throw std::invalid_argument("soft_ce: logits/targets shape mismatch");
  if (logits.rows == 0) throw std::invalid_argument("soft_ce: empty batch");

  const int n = logits.rows, k = logits.cols;
  LossValue out;
  out.grad = MatD(n, k);
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* t = targets.row(i);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      if (t[j] < -1e-5)
        throw std::invalid_argument("soft_ce: negative target probability");
      sum += t[j];
    }
    if (std::abs(sum - 1.0) > 1e-5)
      throw std::invalid_argument("soft_ce: target row does not sum to one");

    softmax_row(logits.row(i), k, 1.0, p.data());
    double row_loss = 0.0;
    for (int j = 0; j < k; ++j) {
      if (t[j] != 0.0) row_loss -= t[j] * safe_log(p[j]);
      out.grad.at(i, j) = (p[j] - t[j]) / n;
    }
    total += row_loss;
  }
  out.value = total / n;
  return out;
}

LossValue kd_kl(const MatD& student_logits, const MatD& teacher_logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("kd_kl: tau must be positive");
  require_same_shape(student_logits, teacher_logits, "kd_kl");
  if (student_logits.rows == 0) throw std::invalid_argument("kd_kl: empty batch");

  const int n = student_logits.rows, k = student_logits.cols;
  LossValue out;
  out.grad = MatD(n, k);
  std::vector<double> ps(static_cast<std::size_t>(k)), pt(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    softmax_row(student_logits.row(i), k, tau, ps.data());
    softmax_row(teacher_logits.row(i), k, tau, pt.data());
    double kl = 0.0;
    for (int j = 0; j < k; ++j) {
      if (pt[j] > 0.0) kl += pt[j] * (safe_log(pt[j]) - safe_log(ps[j]));
      out.grad.at(i, j) = tau * (ps[j] - pt[j]) / n;
    }
    total += kl;
  }
  out.value = tau * tau * total / n;
  return out;
}

LossValue dml_loss(std::span<const MatD> all_logits, int peer, double tau) {
  const int num_peers = static_cast<int>(all_logits.size());
  if (num_peers < 2) throw std::invalid_argument("dml_loss: need at least two peers");
  if (peer < 0 || peer >= num_peers)
    throw std::invalid_argument("dml_loss: peer index out of range");

  const MatD& self = all_logits[static_cast<std::size_t>(peer)];
  LossValue out;
  out.grad = MatD(self.rows, self.cols);
  for (int other = 0; other < num_peers; ++other) {
    if (other == peer) continue;
    LossValue term = kd_kl(self, all_logits[static_cast<std::size_t>(other)], tau);
    out.value += term.value;
    for (std::size_t idx = 0; idx < out.grad.size(); ++idx)
      out.grad.v[idx] += term.grad.v[idx];
  }
  const double scale = 1.0 / (num_peers - 1);
  out.value *= scale;
  for (double& g : out.grad.v) g *= scale;
  return out;
}

LossValue mmd_loss(std::span<const MatD> all_features, int peer) {
  const int num_peers = static_cast<int>(all_features.size());
  if (num_peers < 2) throw std::invalid_argument("mmd_loss: need at least two peers");
  if (peer < 0 || peer >= num_peers)
    throw std::invalid_argument("mmd_loss: peer index out of range");

  const MatD& self = all_features[static_cast<std::size_t>(peer)];
  const int n = self.rows, d = self.cols;
  if (n == 0) throw std::invalid_argument("mmd_loss: empty batch");
  for (const MatD& f : all_features)
    if (f.rows != n || f.cols != d)
      throw std::invalid_argument("mmd_loss: feature shape mismatch across peers");

  std::vector<double> self_mean(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = self.row(i);
    for (int j = 0; j < d; ++j) self_mean[static_cast<std::size_t>(j)] += row[j];
  }
  for (double& m : self_mean) m /= n;

  LossValue out;
  out.grad = MatD(n, d);
  std::vector<double> other_mean(static_cast<std::size_t>(d));
  std::vector<double> grad_row(static_cast<std::size_t>(d), 0.0);
  for (int other = 0; other < num_peers; ++other) {
    if (other == peer) continue;
    const MatD& f = all_features[static_cast<std::size_t>(other)];
    std::fill(other_mean.begin(), other_mean.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double* row = f.row(i);
      for (int j = 0; j < d; ++j) other_mean[static_cast<std::size_t>(j)] += row[j];
    }
    for (double& m : other_mean) m /= n;

    for (int j = 0; j < d; ++j) {
      const double diff = self_mean[static_cast<std::size_t>(j)] -
                          other_mean[static_cast<std::size_t>(j)];
      out.value += diff * diff;
      grad_row[static_cast<std::size_t>(j)] += 2.0 * diff / n;
    }
  }
  const double scale = 1.0 / (num_peers - 1);
  out.value *= scale;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out.grad.at(i, j) = grad_row[static_cast<std::size_t>(j)] * scale;
  return out;
}

LossValue pt_loss(const MatD& student_logits, const MatD& teacher_logits, double tau) {
  return kd_kl(student_logits, teacher_logits, tau);
}

double total_loss(const DistillConfig& cfg, const LossParts& parts) {
  const double parts_array[] = {parts.ce, parts.dml, parts.mmd, parts.pt};
  if (!all_finite(std::span<const double>(parts_array, 4)))
    throw std::invalid_argument("total_loss: non-finite loss component");
  return parts.ce + cfg.dml_weight * parts.dml + cfg.mmd_weight * parts.mmd +
         cfg.pt_weight * parts.pt;
}

} // namespace cnmix::losses
