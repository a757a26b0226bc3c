#pragma once

// Minimal CPU network pieces for the desk-scale encoder: 3x3 convolutions,
// batch norm, ReLU, 2x2 average pooling, global average pooling and a linear head, with
// hand-written backward passes on top of the dispatched GEMM kernels.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dclone/random.hpp"

namespace dclone::nn {

struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0f) {}

  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  float* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  std::vector<float> velocity;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
};

class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(std::string name, int in_channels, int out_channels);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params() { return {&weight_, &bias_}; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Param weight_;  // [out][in*9]
  Param bias_;    // [out]
  Tensor input_;
};

// Per-channel batch normalization. Training mode normalizes with batch
// statistics and updates the running estimates; inference uses the running
// estimates.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor forward(const Tensor& x, bool training);
  // Valid after a training-mode forward.
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params() { return {&gamma_, &beta_}; }
  // Running mean and variance; saved with the weights but never optimized.
  std::vector<Param*> buffers() { return {&running_mean_, &running_var_}; }

 private:
  int channels_ = 0;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  Param gamma_;
  Param beta_;
  Param running_mean_;
  Param running_var_;
  Tensor normalized_;
  std::vector<float> inv_std_;
};

Tensor relu_forward(Tensor x);
// grad is updated in place using the forward activation.
void relu_backward(const Tensor& activation, Tensor& grad);

Tensor avgpool2_forward(const Tensor& x);
Tensor avgpool2_backward(const Tensor& grad_out, int in_h, int in_w);

// [n][c] = mean over h, w
Tensor global_avgpool_forward(const Tensor& x);
Tensor global_avgpool_backward(const Tensor& grad_out, int in_h, int in_w);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  void init(Rng& rng, float stddev);
  // x: [n][in] packed in Tensor with c = in, h = w = 1.
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params() { return {&weight_, &bias_}; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Param weight_;  // [out][in]
  Param bias_;
  Tensor input_;
};

// Stages of conv3x3 + batch norm + ReLU with 2x2 average pooling between stages, then
// global average pooling. Accepts any input size, so global and local crops
// share weights.
class ConvEncoder {
 public:
  ConvEncoder() = default;
  explicit ConvEncoder(std::vector<int> widths, int in_channels = 3);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool training = false);
  // Valid after a training-mode forward.
  Tensor backward(const Tensor& grad_features);

  int feature_dim() const { return widths_.empty() ? 0 : widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  std::vector<Param*> params();
  std::vector<Param*> buffers();

 private:
  std::vector<int> widths_;
  std::vector<Conv3x3> convs_;
  std::vector<BatchNorm2d> norms_;
  // Forward caches, per stage.
  std::vector<Tensor> activations_;
  std::vector<std::pair<int, int>> pool_inputs_;
  std::pair<int, int> gap_input_{0, 0};
};

// Mean softmax cross-entropy over rows scaled by `scale`; writes dlogits
// (already multiplied by scale) and returns scale * sum of per-row losses.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, double scale,
                             Tensor& grad_logits);

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// v = momentum * v + (grad + wd * w); w -= lr * v
void sgd_step(std::span<Param* const> params, const SgdOptions& options);
void zero_grad(std::span<Param* const> params);

}  // namespace dclone::nn
