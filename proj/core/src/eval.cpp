#include "cnmix/eval.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cnmix::harness {

namespace {

int argmax_lowest(const double* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void softmax_row_inplace(double* row, int k) {
  double zmax = row[0];
  for (int j = 1; j < k; ++j) zmax = std::max(zmax, row[j]);
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    row[j] = std::exp(row[j] - zmax);
    sum += row[j];
  }
  for (int j = 0; j < k; ++j) row[j] /= sum;
}

MatD to_double(const MatF& m) {
  MatD out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i];
  return out;
}

} // namespace

long correct_top1(const MatD& scores, std::span<const int> labels) {
  if (scores.rows != static_cast<int>(labels.size()))
    throw std::invalid_argument("correct_top1: row/label count mismatch");
  long correct = 0;
  for (int i = 0; i < scores.rows; ++i)
    if (argmax_lowest(scores.row(i), scores.cols) == labels[static_cast<std::size_t>(i)])
      ++correct;
  return correct;
}

MatD ensemble_scores(std::span<const MatD> peer_logits, EnsembleRule rule) {
  if (peer_logits.empty()) throw std::invalid_argument("ensemble_scores: no peers");
  const int n = peer_logits[0].rows, k = peer_logits[0].cols;
  MatD mixed(n, k);
  std::vector<double> row(static_cast<std::size_t>(k));
  for (const MatD& logits : peer_logits) {
    if (logits.rows != n || logits.cols != k)
      throw std::invalid_argument("ensemble_scores: shape mismatch");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = logits.at(i, j);
      if (rule == EnsembleRule::mean_softmax) softmax_row_inplace(row.data(), k);
      for (int j = 0; j < k; ++j) mixed.at(i, j) += row[static_cast<std::size_t>(j)];
    }
  }
  const double inv = 1.0 / static_cast<double>(peer_logits.size());
  for (double& v : mixed.v) v *= inv;
  return mixed;
}

double evaluate_indices(models::PeerStudent& peer, const datasets::Dataset& data,
                        bool test_split, std::span<const int> indices,
                        int batch_size) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty evaluation stream");
  long correct = 0;
  for (std::size_t start = 0; start < indices.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    const ImageBatch batch =
        data.make_batch(!test_split, indices.subspan(start, end - start));
    const models::ForwardResult out = peer.forward(batch.to_tensor(), false);
    correct += correct_top1(to_double(out.logits), batch.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double evaluate(models::PeerStudent& peer, const datasets::Dataset& data,
                bool test_split, int batch_size) {
  const int n = test_split ? data.test_size() : data.train_size();
  if (n == 0) throw std::invalid_argument("evaluate: empty evaluation stream");
  const std::vector<int> idx = all_indices(n);
  return evaluate_indices(peer, data, test_split, idx, batch_size);
}

double evaluate_ensemble(std::span<models::PeerStudent> peers,
                         const datasets::Dataset& data, EnsembleRule rule,
                         bool test_split, int batch_size) {
  if (peers.empty()) throw std::invalid_argument("evaluate_ensemble: no peers");
  const int n = test_split ? data.test_size() : data.train_size();
  if (n == 0) throw std::invalid_argument("evaluate_ensemble: empty evaluation stream");
  const int k = peers[0].num_classes();
  for (models::PeerStudent& p : peers)
    if (p.num_classes() != k)
      throw std::invalid_argument("evaluate_ensemble: class-count mismatch");

  const std::vector<int> idx = all_indices(n);
  long correct = 0;
  std::vector<MatD> logits(peers.size());
  for (std::size_t start = 0; start < idx.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    const ImageBatch batch = data.make_batch(!test_split, {idx.data() + start, end - start});
    const Tensor4 pixels = batch.to_tensor();
    for (std::size_t j = 0; j < peers.size(); ++j)
      logits[j] = to_double(peers[j].forward(pixels, false).logits);
    correct += correct_top1(ensemble_scores(logits, rule), batch.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

} // namespace cnmix::harness
