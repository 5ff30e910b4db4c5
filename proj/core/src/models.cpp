#include "cnmix/models.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace cnmix::models {

namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

struct ArchInfo {
  bool heavy = false;
};

const std::vector<std::pair<std::string, ArchInfo>>& arch_table() {
  static const std::vector<std::pair<std::string, ArchInfo>> table = {
      {"tiny-cnn", {false}},   {"resnet-8", {false}},        {"resnet-32", {false}},
      {"resnet-110", {true}},  {"wideresnet-20-8", {true}},
  };
  return table;
}

} // namespace

std::vector<std::string> known_archs() {
  std::vector<std::string> names;
  for (const auto& [name, info] : arch_table()) names.push_back(name);
  return names;
}

bool heavy_for_cpu(const std::string& arch) {
  for (const auto& [name, info] : arch_table())
    if (name == arch) return info.heavy;
  return false;
}

PeerStudent PeerStudent::build(const std::string& arch, int num_classes,
                               Rng& init_rng) {
  if (num_classes < 2)
    throw std::invalid_argument("build_student: need at least two classes");

  PeerStudent s;
  s.arch_ = arch;
  s.num_classes_ = num_classes;

  auto conv_bn_relu = [&](int in_ch, int out_ch) {
    s.trunk_.push_back(std::make_unique<nn::Conv2d>(in_ch, out_ch, 3, 1, 1, init_rng));
    s.trunk_.push_back(std::make_unique<nn::BatchNorm2d>(out_ch));
    s.trunk_.push_back(std::make_unique<nn::ReLU>());
  };
  auto resnet_trunk = [&](int blocks_per_stage, int base_width) {
    conv_bn_relu(3, base_width);
    const int widths[3] = {base_width, base_width * 2, base_width * 4};
    int in_ch = base_width;
    for (int stage = 0; stage < 3; ++stage) {
      for (int b = 0; b < blocks_per_stage; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        s.trunk_.push_back(
            std::make_unique<nn::ResidualBlock>(in_ch, widths[stage], stride, init_rng));
        in_ch = widths[stage];
      }
    }
    s.feature_dim_ = widths[2];
  };

  if (arch == "tiny-cnn") {
    conv_bn_relu(3, 8);
    s.trunk_.push_back(std::make_unique<nn::AvgPool2x2>());
    conv_bn_relu(8, 16);
    s.trunk_.push_back(std::make_unique<nn::AvgPool2x2>());
    conv_bn_relu(16, 32);
    s.hidden_ = std::make_unique<nn::Linear>(32, 128, init_rng);
    s.feature_dim_ = 128;
  } else if (arch == "resnet-8") {
    resnet_trunk(1, 16);
  } else if (arch == "resnet-32") {
    resnet_trunk(5, 16);
  } else if (arch == "resnet-110") {
    resnet_trunk(18, 16);
  } else if (arch == "wideresnet-20-8") {
    resnet_trunk(3, 128);
  } else {
    std::string known;
    for (const std::string& name : known_archs()) known += " " + name;
    throw std::invalid_argument("build_student: unknown arch '" + arch +
                                "'; known archs:" + known);
  }

  s.head_ = std::make_unique<nn::Linear>(s.feature_dim_, num_classes, init_rng);

  int idx = 0;
  for (auto& layer : s.trunk_) layer->register_params("trunk" + std::to_string(idx++), s.params_);
  if (s.hidden_) s.hidden_->register_params("hidden", s.params_);
  s.head_->register_params("head", s.params_);
  return s;
}

ForwardResult PeerStudent::forward(const Tensor4& pixels, bool train) {
  if (pixels.c != 3) throw std::invalid_argument("student_forward: expected 3 channels");
  Tensor4 x = pixels;
  for (auto& layer : trunk_) x = layer->forward(x, train);
  ForwardResult out;
  out.features = gap_.forward(x);
  if (hidden_) {
    out.features = hidden_->forward(out.features, train);
    if (train) hidden_mask_.assign(out.features.size(), 0);
    for (std::size_t i = 0; i < out.features.v.size(); ++i) {
      if (out.features.v[i] > 0.0f) {
        if (train) hidden_mask_[i] = 1;
      } else {
        out.features.v[i] = 0.0f;
      }
    }
  }
  out.logits = head_->forward(out.features, train);
  return out;
}

void PeerStudent::backward(const MatF& d_logits, const MatF& d_features) {
  MatF d_feat;
  if (d_logits.size() > 0) {
    d_feat = head_->backward(d_logits);
  } else {
    d_feat = MatF(d_features.rows, feature_dim_);
  }
  if (d_features.size() > 0) {
    if (d_features.rows != d_feat.rows || d_features.cols != d_feat.cols)
      throw std::invalid_argument("backward: feature gradient shape mismatch");
    for (std::size_t i = 0; i < d_feat.v.size(); ++i) d_feat.v[i] += d_features.v[i];
  }
  if (hidden_) {
    for (std::size_t i = 0; i < d_feat.v.size(); ++i)
      if (!hidden_mask_[i]) d_feat.v[i] = 0.0f;
    d_feat = hidden_->backward(d_feat);
  }
  Tensor4 dx = gap_.backward(d_feat);
  for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it) dx = (*it)->backward(dx);
}

PeerStudent build_student(const std::string& arch, int num_classes, Rng& init_rng) {
  return PeerStudent::build(arch, num_classes, init_rng);
}

ForwardResult student_forward(PeerStudent& student, const Tensor4& pixels, bool train) {
  return student.forward(pixels, train);
}

// ---------------------------------------------------------------------------
// PeerTeacher

PeerTeacher PeerTeacher::build(int num_classes, std::vector<int> feature_dims,
                               Rng& init_rng) {
  if (feature_dims.empty())
    throw std::invalid_argument("PeerTeacher: need at least one feature input");
  PeerTeacher t;
  t.num_classes_ = num_classes;
  t.feature_dims_ = std::move(feature_dims);
  t.input_width_ = 0;
  for (int d : t.feature_dims_) t.input_width_ += d;

  t.arrays_ = std::make_unique<Arrays>();
  t.arrays_->weight.resize(static_cast<std::size_t>(num_classes) * t.input_width_);
  const double std = std::sqrt(2.0 / t.input_width_);
  for (float& w : t.arrays_->weight) w = static_cast<float>(init_rng.normal() * std);
  t.arrays_->wgrad.assign(t.arrays_->weight.size(), 0.0f);
  t.arrays_->bias.assign(static_cast<std::size_t>(num_classes), 0.0f);
  t.arrays_->bgrad.assign(t.arrays_->bias.size(), 0.0f);

  t.params_.add("weight", &t.arrays_->weight, &t.arrays_->wgrad, true);
  t.params_.add("bias", &t.arrays_->bias, &t.arrays_->bgrad, true);
  return t;
}

namespace {

MatF concat_features(std::span<const MatF> features, const std::vector<int>& dims,
                     int input_width) {
  if (features.size() != dims.size())
    throw std::invalid_argument("teacher_forward: wrong number of feature blocks");
  const int n = features.empty() ? 0 : features[0].rows;
  int offset = 0;
  MatF cat(n, input_width);
  for (std::size_t j = 0; j < features.size(); ++j) {
    const MatF& f = features[j];
    if (f.cols != dims[j] || f.rows != n)
      throw std::invalid_argument("teacher_forward: feature width mismatch");
    for (int i = 0; i < n; ++i) {
      const float* src = f.row(i);
      float* dst = cat.row(i) + offset;
      for (int c = 0; c < f.cols; ++c) dst[c] = src[c];
    }
    offset += f.cols;
  }
  return cat;
}

} // namespace

MatF PeerTeacher::forward(std::span<const MatF> features) const {
  const MatF cat = concat_features(features, feature_dims_, input_width_);
  MatF y(cat.rows, num_classes_);
  ECMap xmap(cat.v.data(), cat.rows, cat.cols);
  ECMap wmap(arrays_->weight.data(), num_classes_, input_width_);
  EMap ymap(y.v.data(), y.rows, y.cols);
  ymap.noalias() = xmap * wmap.transpose();
  for (int i = 0; i < y.rows; ++i)
    for (int j = 0; j < num_classes_; ++j)
      y.at(i, j) += arrays_->bias[static_cast<std::size_t>(j)];
  return y;
}

void PeerTeacher::accumulate_grads(std::span<const MatF> features,
                                   const MatD& d_logits) {
  const MatF cat = concat_features(features, feature_dims_, input_width_);
  if (d_logits.rows != cat.rows || d_logits.cols != num_classes_)
    throw std::invalid_argument("teacher grads: logit gradient shape mismatch");
  MatF d(d_logits.rows, d_logits.cols);
  for (std::size_t i = 0; i < d.v.size(); ++i)
    d.v[i] = static_cast<float>(d_logits.v[i]);

  ECMap dmap(d.v.data(), d.rows, d.cols);
  ECMap xmap(cat.v.data(), cat.rows, cat.cols);
  EMap wgmap(arrays_->wgrad.data(), num_classes_, input_width_);
  wgmap.noalias() += dmap.transpose() * xmap;
  for (int i = 0; i < d.rows; ++i)
    for (int j = 0; j < num_classes_; ++j)
      arrays_->bgrad[static_cast<std::size_t>(j)] += d.at(i, j);
}

MatF teacher_forward(const PeerTeacher& teacher, std::span<const MatF> features) {
  return teacher.forward(features);
}

} // namespace cnmix::models
