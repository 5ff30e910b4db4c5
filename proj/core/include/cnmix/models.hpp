#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnmix/data.hpp"
#include "cnmix/nn.hpp"
#include "cnmix/rng.hpp"

namespace cnmix::models {

struct ForwardResult {
  MatF features; // penultimate activations, [n, feature_dim]
  MatF logits;   // [n, num_classes]
};

// One peer network: conv trunk, global average pool, linear head. Logits are
// always the head applied to the features of the same pass.
//
// Known architectures (32x32x3 input -> feature_dim):
//   tiny-cnn         128   conv stages 8/16/32 with 2x2 pooling, then a
//                          128-wide fully connected stage
//   resnet-8         64    residual stages 16/32/64, one block each
//   resnet-32        64    residual stages 16/32/64, five blocks each
//   resnet-110       64    eighteen blocks per stage (heavy on CPU)
//   wideresnet-20-8  512   three blocks per stage, widths 128/256/512 (heavy)
class PeerStudent {
public:
  static PeerStudent build(const std::string& arch, int num_classes, Rng& init_rng);

  ForwardResult forward(const Tensor4& pixels, bool train);
  // d_logits from logit-level losses, d_features from feature-level losses;
  // either may be empty (treated as zero).
  void backward(const MatF& d_logits, const MatF& d_features);

  nn::ParamRegistry& params() { return params_; }
  const nn::ParamRegistry& params() const { return params_; }
  void zero_grad() { params_.zero_grad(); }

  const std::string& arch() const { return arch_; }
  int feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }

  PeerStudent(PeerStudent&&) = default;
  PeerStudent& operator=(PeerStudent&&) = default;

private:
  PeerStudent() = default;

  std::string arch_;
  int feature_dim_ = 0;
  int num_classes_ = 0;
  std::vector<std::unique_ptr<nn::Layer>> trunk_;
  nn::GlobalAvgPool gap_;
  std::unique_ptr<nn::Linear> hidden_; // optional fc stage after the pool
  std::vector<std::uint8_t> hidden_mask_;
  std::unique_ptr<nn::Linear> head_;
  nn::ParamRegistry params_;
};

// Ensemble classifier over the concatenated peer features: one affine map.
class PeerTeacher {
public:
  static PeerTeacher build(int num_classes, std::vector<int> feature_dims,
                           Rng& init_rng);

  // logits = W * concat(features) + b; the caller decides what happens with
  // gradients, this is a pure value computation.
  MatF forward(std::span<const MatF> features) const;

  // Accumulates d(loss)/dW and d(loss)/db from d(loss)/d(logits); feature
  // inputs receive no gradient here, which keeps student backbones isolated
  // from the teacher's own supervision.
  void accumulate_grads(std::span<const MatF> features, const MatD& d_logits);

  nn::ParamRegistry& params() { return params_; }
  int num_classes() const { return num_classes_; }
  int input_width() const { return input_width_; }
  const std::vector<int>& feature_dims() const { return feature_dims_; }

  PeerTeacher(PeerTeacher&&) = default;
  PeerTeacher& operator=(PeerTeacher&&) = default;

private:
  PeerTeacher() = default;

  // heap-held so registered pointers survive moves of the teacher itself
  struct Arrays {
    std::vector<float> weight, wgrad; // [num_classes, input_width]
    std::vector<float> bias, bgrad;
  };

  int num_classes_ = 0;
  int input_width_ = 0;
  std::vector<int> feature_dims_;
  std::unique_ptr<Arrays> arrays_;
  nn::ParamRegistry params_;
};

// Spec-level conveniences.
PeerStudent build_student(const std::string& arch, int num_classes, Rng& init_rng);
ForwardResult student_forward(PeerStudent& student, const Tensor4& pixels,
                              bool train = false);
MatF teacher_forward(const PeerTeacher& teacher, std::span<const MatF> features);

std::vector<std::string> known_archs();
bool heavy_for_cpu(const std::string& arch);

} // namespace cnmix::models
