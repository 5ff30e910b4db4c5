#include "cnmix/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cnmix::nn {

namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void he_normal(std::vector<float>& w, int fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / fan_in);
  for (float& x : w) x = static_cast<float>(rng.normal() * std);
}

int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// One sample's patches into a strided slice of the whole-batch column matrix
// [in_ch * k * k, n * out_h * out_w]; sample i owns columns [i * S, (i+1) * S).
void im2col(const float* x, int in_ch, int h, int w, int k, int stride, int pad,
            int out_h, int out_w, float* cols, std::size_t col_stride) {
  const int spatial = out_h * out_w;
  for (int ci = 0; ci < in_ch; ++ci) {
    const float* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst =
            cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * col_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int sy = oy * stride + ky - pad;
          if (sy < 0 || sy >= h) {
            std::memset(dst + static_cast<std::size_t>(oy) * out_w, 0,
                        sizeof(float) * static_cast<std::size_t>(out_w));
            continue;
          }
          const float* srow = plane + static_cast<std::size_t>(sy) * w;
          float* drow = dst + static_cast<std::size_t>(oy) * out_w;
          if (stride == 1 && kx >= pad && kx - pad + out_w <= w) {
            std::memcpy(drow, srow + (kx - pad),
                        sizeof(float) * static_cast<std::size_t>(out_w));
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int sx = ox * stride + kx - pad;
            drow[ox] = (sx >= 0 && sx < w) ? srow[sx] : 0.0f;
          }
        }
      }
    }
    (void)spatial;
  }
}

void col2im(const float* cols, int in_ch, int h, int w, int k, int stride, int pad,
            int out_h, int out_w, float* dx, std::size_t col_stride) {
  for (int ci = 0; ci < in_ch; ++ci) {
    float* plane = dx + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src =
            cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * col_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int sy = oy * stride + ky - pad;
          if (sy < 0 || sy >= h) continue;
          float* prow = plane + static_cast<std::size_t>(sy) * w;
          const float* srow = src + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int sx = ox * stride + kx - pad;
            if (sx >= 0 && sx < w) prow[sx] += srow[ox];
          }
        }
      }
    }
  }
}

} // namespace

// ---------------------------------------------------------------------------
// ParamRegistry

void ParamRegistry::add(std::string name, std::vector<float>* value,
                        std::vector<float>* grad, bool trainable) {
  refs_.push_back(ParamRef{std::move(name), value, grad, trainable});
}

ParamRef* ParamRegistry::find(std::string_view name) {
  for (ParamRef& r : refs_)
    if (r.name == name) return &r;
  return nullptr;
}

void ParamRegistry::zero_grad() {
  for (ParamRef& r : refs_)
    if (r.grad) std::fill(r.grad->begin(), r.grad->end(), 0.0f);
}

std::size_t ParamRegistry::total_values() const {
  std::size_t total = 0;
  for (const ParamRef& r : refs_) total += r.value->size();
  return total;
}

std::uint64_t ParamRegistry::checksum(bool trainable_only) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ParamRef& r : refs_) {
    if (trainable_only && !r.trainable) continue;
    const std::uint64_t part = fnv1a64(r.value->data(), r.value->size() * sizeof(float));
    h ^= part + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, Rng& init)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride), pad_(pad),
      weight_(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize),
      wgrad_(weight_.size(), 0.0f) {
  he_normal(weight_, in_ch * ksize * ksize, init);
}

Tensor4 Conv2d::forward(const Tensor4& x, bool train) {
  if (x.c != in_ch_) throw std::invalid_argument("Conv2d: channel mismatch");
  const int out_h = conv_out(x.h, k_, stride_, pad_);
  const int out_w = conv_out(x.w, k_, stride_, pad_);
  const int ck = in_ch_ * k_ * k_;
  const std::size_t spatial = static_cast<std::size_t>(out_h) * out_w;

  // per-sample contiguous column blocks; an NCHW sample is itself a
  // [out_ch, spatial] matrix, so the GEMM writes output in place
  cols_.resize(static_cast<std::size_t>(ck) * spatial * x.n);
  Tensor4 y(x.n, out_ch_, out_h, out_w);
  ECMap wmap(weight_.data(), out_ch_, ck);
  for (int i = 0; i < x.n; ++i) {
    float* cols = cols_.data() + static_cast<std::size_t>(i) * ck * spatial;
    im2col(x.sample(i), in_ch_, x.h, x.w, k_, stride_, pad_, out_h, out_w, cols,
           spatial);
    ECMap cmap(cols, ck, static_cast<int>(spatial));
    EMap ymap(y.sample(i), out_ch_, static_cast<int>(spatial));
    ymap.noalias() = wmap * cmap;
  }
  if (train) x_.n = x.n, x_.c = x.c, x_.h = x.h, x_.w = x.w;
  return y;
}

Tensor4 Conv2d::backward(const Tensor4& dy) {
  const int out_h = dy.h, out_w = dy.w;
  const int ck = in_ch_ * k_ * k_;
  const std::size_t spatial = static_cast<std::size_t>(out_h) * out_w;

  Tensor4 dx(x_.n, in_ch_, x_.h, x_.w);
  std::vector<float> dcols(static_cast<std::size_t>(ck) * spatial);
  ECMap wmap(weight_.data(), out_ch_, ck);
  EMap wgmap(wgrad_.data(), out_ch_, ck);
  for (int i = 0; i < x_.n; ++i) {
    const float* cols = cols_.data() + static_cast<std::size_t>(i) * ck * spatial;
    ECMap cmap(cols, ck, static_cast<int>(spatial));
    ECMap dymap(dy.sample(i), out_ch_, static_cast<int>(spatial));
    wgmap.noalias() += dymap * cmap.transpose();
    EMap dcmap(dcols.data(), ck, static_cast<int>(spatial));
    dcmap.noalias() = wmap.transpose() * dymap;
    col2im(dcols.data(), in_ch_, x_.h, x_.w, k_, stride_, pad_, out_h, out_w,
           dx.sample(i), spatial);
  }
  return dx;
}

void Conv2d::register_params(const std::string& prefix, ParamRegistry& reg) {
  reg.add(prefix + ".weight", &weight_, &wgrad_, true);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels)
    : channels_(channels), gamma_(static_cast<std::size_t>(channels), 1.0f),
      beta_(static_cast<std::size_t>(channels), 0.0f), ggrad_(gamma_.size(), 0.0f),
      bgrad_(beta_.size(), 0.0f),
      running_mean_(static_cast<std::size_t>(channels), 0.0f),
      running_var_(static_cast<std::size_t>(channels), 1.0f) {}

Tensor4 BatchNorm2d::forward(const Tensor4& x, bool train) {
  if (x.c != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor4 y(x.n, x.c, x.h, x.w);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t count = static_cast<std::size_t>(x.n) * plane;

  if (!train) {
    for (int ci = 0; ci < channels_; ++ci) {
      const float scale =
          gamma_[ci] / std::sqrt(running_var_[ci] + kEps);
      const float shift = beta_[ci] - scale * running_mean_[ci];
      for (int i = 0; i < x.n; ++i) {
        const float* src = x.sample(i) + ci * plane;
        float* dst = y.sample(i) + ci * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = scale * src[p] + shift;
      }
    }
    return y;
  }

  invstd_.assign(static_cast<std::size_t>(channels_), 0.0f);
  xhat_ = Tensor4(x.n, x.c, x.h, x.w);
  for (int ci = 0; ci < channels_; ++ci) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < x.n; ++i) {
      const float* src = x.sample(i) + ci * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum += src[p];
        sq += static_cast<double>(src[p]) * src[p];
      }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sq / static_cast<double>(count) - mean * mean;
    const float fmean = static_cast<float>(mean);
    const float finvstd = static_cast<float>(1.0 / std::sqrt(var + kEps));
    invstd_[ci] = finvstd;

    for (int i = 0; i < x.n; ++i) {
      const float* src = x.sample(i) + ci * plane;
      float* xh = xhat_.sample(i) + ci * plane;
      float* dst = y.sample(i) + ci * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        xh[p] = (src[p] - fmean) * finvstd;
        dst[p] = gamma_[ci] * xh[p] + beta_[ci];
      }
    }

    const double unbiased =
        count > 1 ? var * static_cast<double>(count) / (static_cast<double>(count) - 1.0)
                  : var;
    running_mean_[ci] = (1.0f - kMomentum) * running_mean_[ci] +
                        kMomentum * fmean;
    running_var_[ci] = (1.0f - kMomentum) * running_var_[ci] +
                       kMomentum * static_cast<float>(unbiased);
  }
  return y;
}

Tensor4 BatchNorm2d::backward(const Tensor4& dy) {
  const std::size_t plane = static_cast<std::size_t>(dy.h) * dy.w;
  const double count = static_cast<double>(dy.n) * plane;
  Tensor4 dx(dy.n, dy.c, dy.h, dy.w);

  for (int ci = 0; ci < channels_; ++ci) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const float* d = dy.sample(i) + ci * plane;
      const float* xh = xhat_.sample(i) + ci * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += d[p];
        sum_dy_xhat += static_cast<double>(d[p]) * xh[p];
      }
    }
    ggrad_[ci] += static_cast<float>(sum_dy_xhat);
    bgrad_[ci] += static_cast<float>(sum_dy);

    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
    const float scale = gamma_[ci] * invstd_[ci];
    for (int i = 0; i < dy.n; ++i) {
      const float* d = dy.sample(i) + ci * plane;
      const float* xh = xhat_.sample(i) + ci * plane;
      float* out = dx.sample(i) + ci * plane;
      for (std::size_t p = 0; p < plane; ++p)
        out[p] = scale * (d[p] - mean_dy - xh[p] * mean_dy_xhat);
    }
  }
  return dx;
}

void BatchNorm2d::register_params(const std::string& prefix, ParamRegistry& reg) {
  reg.add(prefix + ".gamma", &gamma_, &ggrad_, true);
  reg.add(prefix + ".beta", &beta_, &bgrad_, true);
  reg.add(prefix + ".running_mean", &running_mean_, nullptr, false);
  reg.add(prefix + ".running_var", &running_var_, nullptr, false);
}

// ---------------------------------------------------------------------------
// ReLU / AvgPool2x2 / GlobalAvgPool

Tensor4 ReLU::forward(const Tensor4& x, bool train) {
  Tensor4 y = x;
  if (train) mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    if (y.v[i] > 0.0f) {
      if (train) mask_[i] = 1;
    } else {
      y.v[i] = 0.0f;
    }
  }
  return y;
}

Tensor4 ReLU::backward(const Tensor4& dy) {
  Tensor4 dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    if (!mask_[i]) dx.v[i] = 0.0f;
  return dx;
}

Tensor4 AvgPool2x2::forward(const Tensor4& x, bool) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw std::invalid_argument("AvgPool2x2: spatial dims must be even");
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor4 y(x.n, x.c, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i) {
    for (int ci = 0; ci < x.c; ++ci) {
      for (int oy = 0; oy < y.h; ++oy) {
        for (int ox = 0; ox < y.w; ++ox) {
          const float s = x.at(i, ci, 2 * oy, 2 * ox) + x.at(i, ci, 2 * oy, 2 * ox + 1) +
                          x.at(i, ci, 2 * oy + 1, 2 * ox) +
                          x.at(i, ci, 2 * oy + 1, 2 * ox + 1);
          y.at(i, ci, oy, ox) = 0.25f * s;
        }
      }
    }
  }
  return y;
}

Tensor4 AvgPool2x2::backward(const Tensor4& dy) {
  Tensor4 dx(dy.n, dy.c, in_h_, in_w_);
  for (int i = 0; i < dy.n; ++i)
    for (int ci = 0; ci < dy.c; ++ci)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          const float g = 0.25f * dy.at(i, ci, oy, ox);
          dx.at(i, ci, 2 * oy, 2 * ox) = g;
          dx.at(i, ci, 2 * oy, 2 * ox + 1) = g;
          dx.at(i, ci, 2 * oy + 1, 2 * ox) = g;
          dx.at(i, ci, 2 * oy + 1, 2 * ox + 1) = g;
        }
  return dx;
}

MatF GlobalAvgPool::forward(const Tensor4& x) {
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  MatF y(x.n, x.c);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  const float inv = 1.0f / static_cast<float>(plane);
  for (int i = 0; i < x.n; ++i) {
    for (int ci = 0; ci < x.c; ++ci) {
      const float* src = x.sample(i) + ci * plane;
      float s = 0.0f;
      for (std::size_t p = 0; p < plane; ++p) s += src[p];
      y.at(i, ci) = s * inv;
    }
  }
  return y;
}

Tensor4 GlobalAvgPool::backward(const MatF& d) {
  Tensor4 dx(d.rows, c_, h_, w_);
  const std::size_t plane = static_cast<std::size_t>(h_) * w_;
  const float inv = 1.0f / static_cast<float>(plane);
  for (int i = 0; i < d.rows; ++i)
    for (int ci = 0; ci < c_; ++ci) {
      float* dst = dx.sample(i) + ci * plane;
      const float g = d.at(i, ci) * inv;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = g;
    }
  return dx;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int in_ch, int out_ch, int stride, Rng& init)
    : conv1_(in_ch, out_ch, 3, stride, 1, init), bn1_(out_ch),
      conv2_(out_ch, out_ch, 3, 1, 1, init), bn2_(out_ch) {
  if (stride != 1 || in_ch != out_ch) {
    proj_conv_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, init);
    proj_bn_ = std::make_unique<BatchNorm2d>(out_ch);
  }
}

Tensor4 ResidualBlock::forward(const Tensor4& x, bool train) {
  Tensor4 t = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
  Tensor4 u = bn2_.forward(conv2_.forward(t, train), train);
  Tensor4 s = proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x, train), train) : x;
  for (std::size_t i = 0; i < u.v.size(); ++i) u.v[i] += s.v[i];
  if (train) out_mask_.assign(u.size(), 0);
  for (std::size_t i = 0; i < u.v.size(); ++i) {
    if (u.v[i] > 0.0f) {
      if (train) out_mask_[i] = 1;
    } else {
      u.v[i] = 0.0f;
    }
  }
  return u;
}

Tensor4 ResidualBlock::backward(const Tensor4& dy) {
  Tensor4 dsum = dy;
  for (std::size_t i = 0; i < dsum.v.size(); ++i)
    if (!out_mask_[i]) dsum.v[i] = 0.0f;

  Tensor4 dx = conv1_.backward(bn1_.backward(relu1_.backward(
      conv2_.backward(bn2_.backward(dsum)))));
  Tensor4 ds = proj_conv_ ? proj_conv_->backward(proj_bn_->backward(dsum))
                          : std::move(dsum);
  for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += ds.v[i];
  return dx;
}

void ResidualBlock::register_params(const std::string& prefix, ParamRegistry& reg) {
  conv1_.register_params(prefix + ".conv1", reg);
  bn1_.register_params(prefix + ".bn1", reg);
  conv2_.register_params(prefix + ".conv2", reg);
  bn2_.register_params(prefix + ".bn2", reg);
  if (proj_conv_) {
    proj_conv_->register_params(prefix + ".proj", reg);
    proj_bn_->register_params(prefix + ".proj_bn", reg);
  }
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_dim, int out_dim, Rng& init)
    : in_dim_(in_dim), out_dim_(out_dim),
      weight_(static_cast<std::size_t>(out_dim) * in_dim),
      wgrad_(weight_.size(), 0.0f), bias_(static_cast<std::size_t>(out_dim), 0.0f),
      bgrad_(bias_.size(), 0.0f) {
  he_normal(weight_, in_dim, init);
}

MatF Linear::forward(const MatF& x, bool train) {
  if (x.cols != in_dim_) throw std::invalid_argument("Linear: input width mismatch");
  MatF y(x.rows, out_dim_);
  ECMap xmap(x.v.data(), x.rows, x.cols);
  ECMap wmap(weight_.data(), out_dim_, in_dim_);
  EMap ymap(y.v.data(), y.rows, y.cols);
  ymap.noalias() = xmap * wmap.transpose();
  for (int i = 0; i < y.rows; ++i) {
    float* row = y.row(i);
    for (int j = 0; j < out_dim_; ++j) row[j] += bias_[static_cast<std::size_t>(j)];
  }
  if (train) x_ = x;
  return y;
}

MatF Linear::backward(const MatF& dy) {
  ECMap dymap(dy.v.data(), dy.rows, dy.cols);
  ECMap xmap(x_.v.data(), x_.rows, x_.cols);
  EMap wgmap(wgrad_.data(), out_dim_, in_dim_);
  wgmap.noalias() += dymap.transpose() * xmap;
  for (int i = 0; i < dy.rows; ++i) {
    const float* row = dy.row(i);
    for (int j = 0; j < out_dim_; ++j) bgrad_[static_cast<std::size_t>(j)] += row[j];
  }
  MatF dx(dy.rows, in_dim_);
  ECMap wmap(weight_.data(), out_dim_, in_dim_);
  EMap dxmap(dx.v.data(), dx.rows, dx.cols);
  dxmap.noalias() = dymap * wmap;
  return dx;
}

void Linear::register_params(const std::string& prefix, ParamRegistry& reg) {
  reg.add(prefix + ".weight", &weight_, &wgrad_, true);
  reg.add(prefix + ".bias", &bias_, &bgrad_, true);
}

} // namespace cnmix::nn
