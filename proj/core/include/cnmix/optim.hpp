#pragma once

#include <vector>

#include "cnmix/nn.hpp"

namespace cnmix::trainer {

// SGD with Nesterov momentum and a multi-step schedule.
struct OptimConfig {
  double lr0 = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
  std::vector<int> milestones{150, 180, 210};
  double decay_factor = 0.1;
  int max_epochs = 240;
  int batch_size = 128;
};

// lr0 * decay_factor^(number of milestones <= epoch); epoch must lie in
// [0, max_epochs).
double lr_at(const OptimConfig& cfg, int epoch);

class Sgd {
public:
  Sgd(nn::ParamRegistry& params, const OptimConfig& cfg);

  void step(double lr);

  // Momentum buffers in registry order (trainable refs only), exposed for
  // checkpointing.
  std::vector<std::vector<float>>& momentum() { return momentum_; }
  const std::vector<std::vector<float>>& momentum() const { return momentum_; }
  std::vector<std::string> momentum_names() const;

private:
  nn::ParamRegistry* params_;
  OptimConfig cfg_;
  std::vector<std::vector<float>> momentum_;
  std::vector<nn::ParamRef*> trainable_;
};

} // namespace cnmix::trainer
