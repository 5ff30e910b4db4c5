#pragma once

#include <span>
#include <vector>

#include "cnmix/data.hpp"
#include "cnmix/tensor.hpp"

namespace cnmix::losses {

// Peer count, temperature and the weights of the four-part objective.
// Defaults follow the training recipe this toolkit ships with.
struct DistillConfig {
  int num_peers = 2;
  double temperature = 3.0;
  double dml_weight = 0.6;
  double mmd_weight = 0.2;
  double pt_weight = 0.1;
};

// Every loss returns its scalar value together with the analytic gradient
// with respect to the student-side input (logits or features). The teacher
// side of a distillation term is treated as a constant: no gradient for it
// is produced anywhere.
struct LossValue {
  double value = 0.0;
  MatD grad;
};

// Temperature softmax of a single logit row, stabilized by max subtraction.
std::vector<double> softmax(std::span<const double> logits, double tau);

// Mean over the batch of -sum_k target_k log softmax(logits)_k at tau = 1.
LossValue soft_ce(const MatD& logits, const SoftLabelBatch& targets);

// tau^2 * mean_i KL(p_teacher_i || p_student_i) with p = softmax(z / tau).
LossValue kd_kl(const MatD& student_logits, const MatD& teacher_logits, double tau);

// Mean over the other peers of kd_kl(z_peer, z_other, tau).
LossValue dml_loss(std::span<const MatD> all_logits, int peer, double tau);

// Mean over the other peers of the squared L2 distance between batch-mean
// feature vectors.
LossValue mmd_loss(std::span<const MatD> all_features, int peer);

// Distillation from the ensemble teacher; same contract as kd_kl.
LossValue pt_loss(const MatD& student_logits, const MatD& teacher_logits, double tau);

struct LossParts {
  double ce = 0.0, dml = 0.0, mmd = 0.0, pt = 0.0;
};

// ce + dml_weight * dml + mmd_weight * mmd + pt_weight * pt
double total_loss(const DistillConfig& cfg, const LossParts& parts);

} // namespace cnmix::losses
