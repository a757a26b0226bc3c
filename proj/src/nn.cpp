#include "dclone/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dclone/error.hpp"
#include "dclone/kernels.hpp"

namespace dclone::nn {

using kernels::Trans;

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  const std::size_t total =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                      [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  value.assign(total, 0.0f);
  grad.assign(total, 0.0f);
  velocity.assign(total, 0.0f);
}

namespace {

// col[(ci*9 + ky*3 + kx)][y*w + x] = in[ci][y+ky-1][x+kx-1], zero padded.
void im2col3x3(const float* in, int channels, int h, int w, float* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < channels; ++ci) {
    const float* plane = in + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          float* out = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill_n(out, w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            out[x] = (sx < 0 || sx >= w) ? 0.0f : src[sx];
          }
        }
      }
    }
  }
}

void col2im3x3(const float* col, int channels, int h, int w, float* in_grad) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < channels; ++ci) {
    float* plane = in_grad + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const float* src = row + static_cast<std::size_t>(y) * w;
          float* dst = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Conv3x3::Conv3x3(std::string name, int in_channels, int out_channels)
    : in_(in_channels),
      out_(out_channels),
      weight_(name + ".weight", {out_channels, in_channels, 3, 3}),
      bias_(name + ".bias", {out_channels}) {}

void Conv3x3::init(Rng& rng) {
  const double stddev = std::sqrt(2.0 / (in_ * 9.0));
  for (float& v : weight_.value) v = static_cast<float>(rng.normal(0.0, stddev));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor Conv3x3::forward(const Tensor& x) {
  require(x.c == in_, "conv input channels mismatch");
  input_ = x;
  Tensor out(x.n, out_, x.h, x.w);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t k = static_cast<std::size_t>(in_) * 9;
  std::vector<float> col(k * hw);
  for (int i = 0; i < x.n; ++i) {
    im2col3x3(x.sample(i), in_, x.h, x.w, col.data());
    float* o = out.sample(i);
    for (int co = 0; co < out_; ++co) std::fill_n(o + co * hw, hw, bias_.value[co]);
    kernels::gemm(Trans::kNo, Trans::kNo, out_, hw, k, 1.0f, weight_.value.data(), k, col.data(),
                  hw, 1.0f, o, hw);
  }
  return out;
}

Tensor Conv3x3::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  Tensor grad_in(x.n, x.c, x.h, x.w);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t k = static_cast<std::size_t>(in_) * 9;
  std::vector<float> col(k * hw);
  std::vector<float> dcol(k * hw);
  for (int i = 0; i < x.n; ++i) {
    const float* g = grad_out.sample(i);
    im2col3x3(x.sample(i), in_, x.h, x.w, col.data());
    kernels::gemm(Trans::kNo, Trans::kYes, out_, k, hw, 1.0f, g, hw, col.data(), hw, 1.0f,
                  weight_.grad.data(), k);
    for (int co = 0; co < out_; ++co) {
      const float* row = g + co * hw;
      bias_.grad[co] += std::accumulate(row, row + hw, 0.0f);
    }
    kernels::gemm(Trans::kYes, Trans::kNo, k, hw, out_, 1.0f, weight_.value.data(), k, g, hw, 0.0f,
                  dcol.data(), hw);
    col2im3x3(dcol.data(), in_, x.h, x.w, grad_in.sample(i));
  }
  return grad_in;
}

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".weight", {channels}),
      beta_(name + ".bias", {channels}),
      running_mean_(name + ".running_mean", {channels}),
      running_var_(name + ".running_var", {channels}) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
  std::fill(running_var_.value.begin(), running_var_.value.end(), 1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  require(x.c == channels_, "batch norm channel mismatch");
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t m = hw * static_cast<std::size_t>(x.n);
  Tensor out(x.n, x.c, x.h, x.w);
  if (training) {
    normalized_ = Tensor(x.n, x.c, x.h, x.w);
    inv_std_.assign(static_cast<std::size_t>(channels_), 0.0f);
  }
  for (int c = 0; c < channels_; ++c) {
    double mean = running_mean_.value[c];
    double var = running_var_.value[c];
    if (training) {
      double sum = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const float* p = x.sample(i) + c * hw;
        for (std::size_t k = 0; k < hw; ++k) sum += p[k];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const float* p = x.sample(i) + c * hw;
        for (std::size_t k = 0; k < hw; ++k) sq += (p[k] - mean) * (p[k] - mean);
      }
      var = sq / static_cast<double>(m);
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      running_mean_.value[c] = static_cast<float>((1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean);
      running_var_.value[c] = static_cast<float>((1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    if (training) inv_std_[c] = static_cast<float>(inv);
    const float g = gamma_.value[c];
    const float b = beta_.value[c];
    for (int i = 0; i < x.n; ++i) {
      const float* p = x.sample(i) + c * hw;
      float* o = out.sample(i) + c * hw;
      float* xn = training ? normalized_.sample(i) + c * hw : nullptr;
      for (std::size_t k = 0; k < hw; ++k) {
        const auto v = static_cast<float>((p[k] - mean) * inv);
        if (xn) xn[k] = v;
        o[k] = g * v + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  const Tensor& xn = normalized_;
  require(grad_out.n == xn.n && grad_out.c == xn.c && grad_out.h == xn.h && grad_out.w == xn.w,
          "batch norm backward without a matching training forward");
  const std::size_t hw = static_cast<std::size_t>(xn.h) * xn.w;
  const double m = static_cast<double>(hw) * xn.n;
  Tensor grad_in(xn.n, xn.c, xn.h, xn.w);
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xn = 0.0;
    for (int i = 0; i < xn.n; ++i) {
      const float* dy = grad_out.sample(i) + c * hw;
      const float* v = xn.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum_dy += dy[k];
        sum_dy_xn += static_cast<double>(dy[k]) * v[k];
      }
    }
    beta_.grad[c] += static_cast<float>(sum_dy);
    gamma_.grad[c] += static_cast<float>(sum_dy_xn);
    // dx = gamma * inv_std / m * (m * dy - sum(dy) - xn * sum(dy * xn))
    const double scale = gamma_.value[c] * static_cast<double>(inv_std_[c]) / m;
    for (int i = 0; i < xn.n; ++i) {
      const float* dy = grad_out.sample(i) + c * hw;
      const float* v = xn.sample(i) + c * hw;
      float* dx = grad_in.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        dx[k] = static_cast<float>(scale * (m * dy[k] - sum_dy - v[k] * sum_dy_xn));
      }
    }
  }
  return grad_in;
}

Tensor relu_forward(Tensor x) {
  kernels::active().relu_f32(x.data.data(), x.data.size());
  return x;
}

void relu_backward(const Tensor& activation, Tensor& grad) {
  kernels::active().relu_backward_f32(activation.data.data(), grad.data.data(), grad.data.size());
}

Tensor avgpool2_forward(const Tensor& x) {
  const int oh = x.h / 2;
  const int ow = x.w / 2;
  Tensor out(x.n, x.c, oh, ow);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const float* in = x.sample(i) + static_cast<std::size_t>(c) * x.h * x.w;
      float* o = out.sample(i) + static_cast<std::size_t>(c) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const float* p = in + static_cast<std::size_t>(2 * y) * x.w + 2 * xx;
          o[y * ow + xx] = 0.25f * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
        }
      }
    }
  }
  return out;
}

Tensor avgpool2_backward(const Tensor& grad_out, int in_h, int in_w) {
  Tensor grad_in(grad_out.n, grad_out.c, in_h, in_w);
  const int oh = grad_out.h;
  const int ow = grad_out.w;
  for (int i = 0; i < grad_out.n; ++i) {
    for (int c = 0; c < grad_out.c; ++c) {
      const float* g = grad_out.sample(i) + static_cast<std::size_t>(c) * oh * ow;
      float* d = grad_in.sample(i) + static_cast<std::size_t>(c) * in_h * in_w;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const float v = 0.25f * g[y * ow + xx];
          float* p = d + static_cast<std::size_t>(2 * y) * in_w + 2 * xx;
          p[0] += v;
          p[1] += v;
          p[in_w] += v;
          p[in_w + 1] += v;
        }
      }
    }
  }
  return grad_in;
}

Tensor global_avgpool_forward(const Tensor& x) {
  Tensor out(x.n, x.c, 1, 1);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const float inv = 1.0f / static_cast<float>(hw);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const float* p = x.sample(i) + c * hw;
      out.sample(i)[c] = std::accumulate(p, p + hw, 0.0f) * inv;
    }
  }
  return out;
}

Tensor global_avgpool_backward(const Tensor& grad_out, int in_h, int in_w) {
  Tensor grad_in(grad_out.n, grad_out.c, in_h, in_w);
  const std::size_t hw = static_cast<std::size_t>(in_h) * in_w;
  const float inv = 1.0f / static_cast<float>(hw);
  for (int i = 0; i < grad_out.n; ++i) {
    for (int c = 0; c < grad_out.c; ++c) {
      std::fill_n(grad_in.sample(i) + c * hw, hw, grad_out.sample(i)[c] * inv);
    }
  }
  return grad_in;
}

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}) {}

void Linear::init(Rng& rng, float stddev) {
  for (float& v : weight_.value) v = static_cast<float>(rng.normal(0.0, stddev));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor Linear::forward(const Tensor& x) {
  require(static_cast<int>(x.sample_size()) == in_, "linear input width mismatch");
  input_ = x;
  Tensor out(x.n, out_, 1, 1);
  for (int i = 0; i < x.n; ++i) std::copy(bias_.value.begin(), bias_.value.end(), out.sample(i));
  kernels::gemm(Trans::kNo, Trans::kYes, x.n, out_, in_, 1.0f, x.data.data(), in_,
                weight_.value.data(), in_, 1.0f, out.data.data(), out_);
  return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  kernels::gemm(Trans::kYes, Trans::kNo, out_, in_, x.n, 1.0f, grad_out.data.data(), out_,
                x.data.data(), in_, 1.0f, weight_.grad.data(), in_);
  for (int i = 0; i < x.n; ++i) {
    kernels::axpy(1.0f, std::span<const float>(grad_out.sample(i), out_), bias_.grad);
  }
  Tensor grad_in(x.n, x.c, x.h, x.w);
  kernels::gemm(Trans::kNo, Trans::kNo, x.n, in_, out_, 1.0f, grad_out.data.data(), out_,
                weight_.value.data(), in_, 0.0f, grad_in.data.data(), in_);
  return grad_in;
}

ConvEncoder::ConvEncoder(std::vector<int> widths, int in_channels) : widths_(std::move(widths)) {
  require(!widths_.empty(), "encoder needs at least one stage");
  int prev = in_channels;
  for (std::size_t s = 0; s < widths_.size(); ++s) {
    require(widths_[s] > 0, "encoder widths must be positive");
    convs_.emplace_back("encoder.conv" + std::to_string(s), prev, widths_[s]);
    norms_.emplace_back("encoder.bn" + std::to_string(s), widths_[s]);
    prev = widths_[s];
  }
}

void ConvEncoder::init(Rng& rng) {
  for (auto& conv : convs_) conv.init(rng);
}

Tensor ConvEncoder::forward(const Tensor& x, bool training) {
  activations_.clear();
  pool_inputs_.clear();
  Tensor cur = x;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    cur = relu_forward(norms_[s].forward(convs_[s].forward(cur), training));
    activations_.push_back(cur);
    if (s + 1 < convs_.size() && cur.h >= 2 && cur.w >= 2) {
      pool_inputs_.emplace_back(cur.h, cur.w);
      cur = avgpool2_forward(cur);
    } else {
      pool_inputs_.emplace_back(0, 0);
    }
  }
  gap_input_ = {cur.h, cur.w};
  return global_avgpool_forward(cur);
}

Tensor ConvEncoder::backward(const Tensor& grad_features) {
  Tensor grad = global_avgpool_backward(grad_features, gap_input_.first, gap_input_.second);
  for (std::size_t s = convs_.size(); s-- > 0;) {
    if (pool_inputs_[s].first != 0) {
      grad = avgpool2_backward(grad, pool_inputs_[s].first, pool_inputs_[s].second);
    }
    relu_backward(activations_[s], grad);
    grad = convs_[s].backward(norms_[s].backward(grad));
  }
  return grad;
}

std::vector<Param*> ConvEncoder::params() {
  std::vector<Param*> out;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    for (Param* p : convs_[s].params()) out.push_back(p);
    for (Param* p : norms_[s].params()) out.push_back(p);
  }
  return out;
}

std::vector<Param*> ConvEncoder::buffers() {
  std::vector<Param*> out;
  for (auto& norm : norms_) {
    for (Param* p : norm.buffers()) out.push_back(p);
  }
  return out;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, double scale,
                             Tensor& grad_logits) {
  const int n = logits.n;
  const int k = static_cast<int>(logits.sample_size());
  require(static_cast<int>(labels.size()) == n, "label count mismatch");
  grad_logits = Tensor(n, k, 1, 1);
  double total = 0.0;
  std::vector<double> p(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    const float* z = logits.sample(i);
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(static_cast<double>(z[j]) - zmax);
      sum += p[j];
    }
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < k, "label out of range");
    total += -(static_cast<double>(z[y]) - zmax - std::log(sum));
    float* g = grad_logits.sample(i);
    for (int j = 0; j < k; ++j) {
      g[j] = static_cast<float>(scale * (p[j] / sum - (j == y ? 1.0 : 0.0)));
    }
  }
  return scale * total;
}

void sgd_step(std::span<Param* const> params, const SgdOptions& o) {
  const auto lr = static_cast<float>(o.lr);
  const auto mom = static_cast<float>(o.momentum);
  const auto wd = static_cast<float>(o.weight_decay);
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const float g = p->grad[i] + wd * p->value[i];
      p->velocity[i] = mom * p->velocity[i] + g;
      p->value[i] -= lr * p->velocity[i];
    }
  }
}

void zero_grad(std::span<Param* const> params) {
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

}  // namespace dclone::nn
