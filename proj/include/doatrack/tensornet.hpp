// Copyright 2026 The doatrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Small dense-tensor engine with hand-written forward and backward passes
// for the layers used by the trackers. Scalar is float for production and
// double for gradient checks.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace doatrack::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S(0));
  Tensor(Shape shape, std::vector<S> data);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }
  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const;
  void fill(S v);

 private:
  Shape shape_;
  std::vector<S> data_;
};

template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

// Layers cache what they need for backward when forward runs with
// train = true; backward returns the input gradient and accumulates
// parameter gradients.
template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  /// Throws ShapeError for inputs the layer cannot take.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<S> forward(const Tensor<S>& x, bool train) = 0;
  virtual Tensor<S> backward(const Tensor<S>& dy) = 0;
  virtual void collect(std::vector<Parameter<S>*>& out) { (void)out; }
  virtual void reset_parameters(std::mt19937_64& rng) { (void)rng; }
  /// Past frames an output can see beyond its own.
  virtual std::size_t temporal_reach() const { return 0; }
};

template <typename S>
using LayerPtr = std::unique_ptr<Layer<S>>;

// Causal over time, "same" zero padding over space. Input C x T x H x W,
// weights C_out x C_in x kt x kh x kw. Output frame t sees input frames
// t - (kt - 1) * dilation ... t.
template <typename S>
class Conv3d : public Layer<S> {
 public:
  Conv3d(std::string name, std::size_t c_in, std::size_t c_out, std::size_t kt,
         std::size_t kh, std::size_t kw, std::size_t dilation = 1);

  std::string kind() const override { return "conv3d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;
  void collect(std::vector<Parameter<S>*>& out) override;
  void reset_parameters(std::mt19937_64& rng) override;
  std::size_t temporal_reach() const override { return (kt_ - 1) * dilation_; }

  Parameter<S>& weight() { return weight_; }
  Parameter<S>& bias() { return bias_; }
  std::size_t fan_in() const { return c_in_ * kt_ * kh_ * kw_; }

  /// Frames per GEMM block. Depends only on the spatial size so each frame
  /// always lands in the same column of a same-sized product.
  static std::size_t block_frames(std::size_t spatial);

 protected:
  Tensor<S> forward4(const Tensor<S>& x, bool train);
  Tensor<S> backward4(const Tensor<S>& dy);
  Shape shape4(const Shape& in) const;

 private:
  void im2col(const Tensor<S>& x, std::size_t t0, std::size_t block, std::vector<S>& cols) const;
  void col2im(const std::vector<S>& cols, std::size_t t0, std::size_t block, Tensor<S>& dx) const;

  std::size_t c_in_, c_out_, kt_, kh_, kw_, dilation_;
  Parameter<S> weight_, bias_;
  Tensor<S> cached_x_;
};

// Input C x T, weights C_out x C_in x k.
template <typename S>
class Conv1d : public Conv3d<S> {
 public:
  Conv1d(std::string name, std::size_t c_in, std::size_t c_out, std::size_t k,
         std::size_t dilation);

  std::string kind() const override { return "conv1d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;
};

// y = x for x >= 0, a * x otherwise. Channels run along axis 0; shared mode
// keeps one slope.
template <typename S>
class PRelu : public Layer<S> {
 public:
  PRelu(std::string name, std::size_t channels, bool shared, S init = S(0.25));

  std::string kind() const override { return "prelu"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;
  void collect(std::vector<Parameter<S>*>& out) override;
  void reset_parameters(std::mt19937_64& rng) override;
  Parameter<S>& slopes() { return slopes_; }

 private:
  std::size_t channels_;
  bool shared_;
  Parameter<S> slopes_;
  Tensor<S> cached_x_;
};

// Non-overlapping max over one spatial axis (2 or 3) of a C x T x H x W input.
template <typename S>
class MaxPoolAxis : public Layer<S> {
 public:
  MaxPoolAxis(std::size_t axis, std::size_t size);

  std::string kind() const override { return "maxpool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;

 private:
  std::size_t axis_, size_;
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;  // flat input index per output element
};

template <typename S>
class Tanh : public Layer<S> {
 public:
  std::string kind() const override { return "tanh"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;

 private:
  Tensor<S> cached_y_;
};

// C x T x H x W -> (C * H * W) x T, feature index (c * H + i) * W + j.
template <typename S>
class FrameFlatten : public Layer<S> {
 public:
  std::string kind() const override { return "reshape"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;

 private:
  Shape in_shape_;
};

template <typename S>
class Sequential : public Layer<S> {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr<S>> layers) : layers_(std::move(layers)) {}

  Sequential& add(LayerPtr<S> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  std::string kind() const override { return "sequential"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;
  void collect(std::vector<Parameter<S>*>& out) override;
  void reset_parameters(std::mt19937_64& rng) override;
  std::size_t temporal_reach() const override;
  const std::vector<LayerPtr<S>>& layers() const { return layers_; }

 private:
  std::vector<LayerPtr<S>> layers_;
};

// Runs every branch on the same input and concatenates the 2-D (F_b x T)
// outputs along axis 0.
template <typename S>
class ParallelConcat : public Layer<S> {
 public:
  explicit ParallelConcat(std::vector<LayerPtr<S>> branches) : branches_(std::move(branches)) {}

  std::string kind() const override { return "concat"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<S> forward(const Tensor<S>& x, bool train) override;
  Tensor<S> backward(const Tensor<S>& dy) override;
  void collect(std::vector<Parameter<S>*>& out) override;
  void reset_parameters(std::mt19937_64& rng) override;
  std::size_t temporal_reach() const override;

 private:
  std::vector<LayerPtr<S>> branches_;
  std::vector<std::size_t> rows_;
};

/// Concatenation of 2-D tensors along axis 0 (shared T), and its split.
template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts);
template <typename S>
std::vector<Tensor<S>> split_rows(const Tensor<S>& x, const std::vector<std::size_t>& rows);

/// Mean over frames of ||pred_t - gt_t||_2 for 3 x T tensors. grad (optional)
/// receives dL/dpred; a frame at zero distance contributes zero gradient.
template <typename S>
S euclidean_loss(const Tensor<S>& pred, const Tensor<S>& gt, Tensor<S>* grad = nullptr);

/// PyTorch-style init: conv weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// PReLU slopes 0.25.
template <typename S>
void init_parameters(Layer<S>& model, std::mt19937_64& rng);

template <typename S>
std::vector<Parameter<S>*> parameters(Layer<S>& model);

template <typename S>
std::size_t parameter_count(Layer<S>& model);

template <typename S>
void zero_grad(Layer<S>& model);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
class Adam {
 public:
  Adam(std::vector<Parameter<S>*> params, AdamOptions opts = {});

  void step();
  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  std::uint64_t steps() const { return t_; }

  // Moment buffers exposed for checkpointing.
  std::vector<std::vector<S>>& first_moments() { return m_; }
  std::vector<std::vector<S>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<Parameter<S>*> params_;
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<S>> m_, v_;
};

}  // namespace doatrack::nn
