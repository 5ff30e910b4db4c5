#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnmix/rng.hpp"
#include "cnmix/tensor.hpp"

namespace cnmix::nn {

// Named view of one parameter or buffer array. Buffers (batch-norm running
// statistics) have no gradient and are skipped by optimizers but saved in
// checkpoints.
struct ParamRef {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<float>* grad = nullptr;
  bool trainable = true;
};

class ParamRegistry {
public:
  void add(std::string name, std::vector<float>* value, std::vector<float>* grad,
           bool trainable);
  std::span<ParamRef> refs() { return refs_; }
  std::span<const ParamRef> refs() const { return refs_; }
  ParamRef* find(std::string_view name);
  void zero_grad();
  std::size_t total_values() const;
  std::uint64_t checksum(bool trainable_only = false) const;

private:
  std::vector<ParamRef> refs_;
};

class Layer {
public:
  virtual ~Layer() = default;
  virtual Tensor4 forward(const Tensor4& x, bool train) = 0;
  virtual Tensor4 backward(const Tensor4& dy) = 0;
  virtual void register_params(const std::string& prefix, ParamRegistry& reg) = 0;
};

// 2-D convolution, square kernel, zero padding, no bias (always followed by
// batch norm in the architectures built here).
class Conv2d final : public Layer {
public:
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, Rng& init);
  Tensor4 forward(const Tensor4& x, bool train) override;
  Tensor4 backward(const Tensor4& dy) override;
  void register_params(const std::string& prefix, ParamRegistry& reg) override;

private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  std::vector<float> weight_, wgrad_; // [out_ch, in_ch * k * k]
  Tensor4 x_;
  std::vector<float> cols_;
};

class BatchNorm2d final : public Layer {
public:
  explicit BatchNorm2d(int channels);
  Tensor4 forward(const Tensor4& x, bool train) override;
  Tensor4 backward(const Tensor4& dy) override;
  void register_params(const std::string& prefix, ParamRegistry& reg) override;

  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;

private:
  int channels_;
  std::vector<float> gamma_, beta_, ggrad_, bgrad_;
  std::vector<float> running_mean_, running_var_;
  std::vector<float> invstd_;
  Tensor4 xhat_;
};

class ReLU final : public Layer {
public:
  Tensor4 forward(const Tensor4& x, bool train) override;
  Tensor4 backward(const Tensor4& dy) override;
  void register_params(const std::string&, ParamRegistry&) override {}

private:
  std::vector<std::uint8_t> mask_;
};

class AvgPool2x2 final : public Layer {
public:
  Tensor4 forward(const Tensor4& x, bool train) override;
  Tensor4 backward(const Tensor4& dy) override;
  void register_params(const std::string&, ParamRegistry&) override {}

private:
  int in_h_ = 0, in_w_ = 0;
};

// conv-bn-relu-conv-bn plus shortcut, relu after the join; the shortcut is a
// 1x1 projection with batch norm whenever shape changes.
class ResidualBlock final : public Layer {
public:
  ResidualBlock(int in_ch, int out_ch, int stride, Rng& init);
  Tensor4 forward(const Tensor4& x, bool train) override;
  Tensor4 backward(const Tensor4& dy) override;
  void register_params(const std::string& prefix, ParamRegistry& reg) override;

private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  ReLU relu1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  std::unique_ptr<Conv2d> proj_conv_;
  std::unique_ptr<BatchNorm2d> proj_bn_;
  std::vector<std::uint8_t> out_mask_;
};

// Collapses H x W to a single mean per channel; output is [n, channels].
class GlobalAvgPool {
public:
  MatF forward(const Tensor4& x);
  Tensor4 backward(const MatF& d);

private:
  int c_ = 0, h_ = 0, w_ = 0;
};

class Linear {
public:
  Linear(int in_dim, int out_dim, Rng& init);
  MatF forward(const MatF& x, bool train);
  MatF backward(const MatF& dy);
  void register_params(const std::string& prefix, ParamRegistry& reg);
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  const std::vector<float>& weight() const { return weight_; }
  const std::vector<float>& bias() const { return bias_; }

private:
  int in_dim_, out_dim_;
  std::vector<float> weight_, wgrad_; // [out_dim, in_dim]
  std::vector<float> bias_, bgrad_;
  MatF x_;
};

} // namespace cnmix::nn
