#include "cnmix/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cnmix::trainer {

double lr_at(const OptimConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.max_epochs)
    throw std::invalid_argument("lr_at: epoch out of [0, max_epochs)");
  int decays = 0;
  for (int m : cfg.milestones)
    if (m <= epoch) ++decays;
  return cfg.lr0 * std::pow(cfg.decay_factor, decays);
}

Sgd::Sgd(nn::ParamRegistry& params, const OptimConfig& cfg)
    : params_(&params), cfg_(cfg) {
  for (nn::ParamRef& r : params.refs()) {
    if (!r.trainable) continue;
    trainable_.push_back(&r);
    momentum_.emplace_back(r.value->size(), 0.0f);
  }
}

std::vector<std::string> Sgd::momentum_names() const {
  std::vector<std::string> names;
  names.reserve(trainable_.size());
  for (const nn::ParamRef* r : trainable_) names.push_back(r->name);
  return names;
}

void Sgd::step(double lr) {
  const float flr = static_cast<float>(lr);
  const float mu = static_cast<float>(cfg_.momentum);
  const float wd = static_cast<float>(cfg_.weight_decay);
  for (std::size_t p = 0; p < trainable_.size(); ++p) {
    std::vector<float>& w = *trainable_[p]->value;
    const std::vector<float>& g = *trainable_[p]->grad;
    std::vector<float>& buf = momentum_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float grad = g[i] + wd * w[i];
      buf[i] = mu * buf[i] + grad;
      w[i] -= flr * (cfg_.nesterov ? grad + mu * buf[i] : buf[i]);
    }
  }
}

} // namespace cnmix::trainer
