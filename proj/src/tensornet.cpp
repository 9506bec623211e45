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

#include "doatrack/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "doatrack/error.hpp"

namespace doatrack::nn {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMapMat = Eigen::Map<const RowMat<S>>;

[[noreturn]] void shape_error(const std::string& what, const Shape& got) {
  throw Error(ErrorCode::kShapeError, what + " (got " + shape_str(got) + ")");
}

}  // namespace

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename S>
Tensor<S>::Tensor(Shape shape, S fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename S>
Tensor<S>::Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) shape_error("data does not match shape", shape_);
}

template <typename S>
Tensor<S> Tensor<S>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) shape_error("reshape changes the size", shape);
  return Tensor(std::move(shape), data_);
}

template <typename S>
void Tensor<S>::fill(S v) {
  std::fill(data_.begin(), data_.end(), v);
}

// ---------------------------------------------------------------- Conv3d

template <typename S>
Conv3d<S>::Conv3d(std::string name, std::size_t c_in, std::size_t c_out, std::size_t kt,
                  std::size_t kh, std::size_t kw, std::size_t dilation)
    : c_in_(c_in), c_out_(c_out), kt_(kt), kh_(kh), kw_(kw), dilation_(dilation),
      weight_(name + ".weight", {c_out, c_in, kt, kh, kw}), bias_(name + ".bias", {c_out}) {
  if (!c_in || !c_out || !kt || !kh || !kw || !dilation || kh % 2 == 0 || kw % 2 == 0) {
    throw Error(ErrorCode::kShapeError, "conv3d needs positive sizes and odd spatial kernels");
  }
}

template <typename S>
std::size_t Conv3d<S>::block_frames(std::size_t spatial) {
  const std::size_t target = 512;
  return std::clamp<std::size_t>(target / std::max<std::size_t>(1, spatial), 1, 16);
}

template <typename S>
Shape Conv3d<S>::output_shape(const Shape& in) const {
  return shape4(in);
}

template <typename S>
Shape Conv3d<S>::shape4(const Shape& in) const {
  if (in.size() != 4 || in[0] != c_in_) {
    shape_error("conv3d expects " + std::to_string(c_in_) + " x T x H x W", in);
  }
  return {c_out_, in[1], in[2], in[3]};
}

template <typename S>
void Conv3d<S>::im2col(const Tensor<S>& x, std::size_t t0, std::size_t block,
                       std::vector<S>& cols) const {
  const std::size_t T = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t n_cols = block * H * W;
  const long ph = static_cast<long>(kh_ / 2), pw = static_cast<long>(kw_ / 2);
  cols.assign(fan_in() * n_cols, S(0));
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c_in_; ++ci) {
    for (std::size_t dt = 0; dt < kt_; ++dt) {
      const long lag = static_cast<long>((kt_ - 1 - dt) * dilation_);
      for (std::size_t dy = 0; dy < kh_; ++dy) {
        for (std::size_t dx = 0; dx < kw_; ++dx, ++row) {
          S* dst = cols.data() + row * n_cols;
          for (std::size_t tb = 0; tb < block; ++tb) {
            const long t = static_cast<long>(t0 + tb) - lag;
            if (t < 0 || t >= static_cast<long>(T)) continue;
            const S* plane = x.data() + (ci * T + static_cast<std::size_t>(t)) * H * W;
            for (std::size_t y = 0; y < H; ++y) {
              const long sy = static_cast<long>(y + dy) - ph;
              if (sy < 0 || sy >= static_cast<long>(H)) continue;
              const S* src_row = plane + static_cast<std::size_t>(sy) * W;
              S* dst_row = dst + (tb * H + y) * W;
              const long x_lo = std::max<long>(0, pw - static_cast<long>(dx));
              const long x_hi = std::min<long>(static_cast<long>(W), static_cast<long>(W) + pw - static_cast<long>(dx));
              for (long xx = x_lo; xx < x_hi; ++xx) {
                dst_row[xx] = src_row[xx + static_cast<long>(dx) - pw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename S>
void Conv3d<S>::col2im(const std::vector<S>& cols, std::size_t t0, std::size_t block,
                       Tensor<S>& dx) const {
  const std::size_t T = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const std::size_t n_cols = block * H * W;
  const long ph = static_cast<long>(kh_ / 2), pw = static_cast<long>(kw_ / 2);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c_in_; ++ci) {
    for (std::size_t dt = 0; dt < kt_; ++dt) {
      const long lag = static_cast<long>((kt_ - 1 - dt) * dilation_);
      for (std::size_t dy = 0; dy < kh_; ++dy) {
        for (std::size_t ddx = 0; ddx < kw_; ++ddx, ++row) {
          const S* src = cols.data() + row * n_cols;
          for (std::size_t tb = 0; tb < block; ++tb) {
            const long t = static_cast<long>(t0 + tb) - lag;
            if (t < 0 || t >= static_cast<long>(T)) continue;
            S* plane = dx.data() + (ci * T + static_cast<std::size_t>(t)) * H * W;
            for (std::size_t y = 0; y < H; ++y) {
              const long sy = static_cast<long>(y + dy) - ph;
              if (sy < 0 || sy >= static_cast<long>(H)) continue;
              S* dst_row = plane + static_cast<std::size_t>(sy) * W;
              const S* src_row = src + (tb * H + y) * W;
              const long x_lo = std::max<long>(0, pw - static_cast<long>(ddx));
              const long x_hi = std::min<long>(static_cast<long>(W), static_cast<long>(W) + pw - static_cast<long>(ddx));
              for (long xx = x_lo; xx < x_hi; ++xx) {
                dst_row[xx + static_cast<long>(ddx) - pw] += src_row[xx];
              }
            }
          }
        }
      }
    }
  }
}

template <typename S>
Tensor<S> Conv3d<S>::forward4(const Tensor<S>& x, bool train) {
  const Shape out_shape = shape4(x.shape());
  const std::size_t T = x.dim(1), HW = x.dim(2) * x.dim(3);
  const std::size_t block = block_frames(HW);
  const std::size_t n_cols = block * HW;
  Tensor<S> y(out_shape);
  std::vector<S> cols;
  RowMat<S> yb(c_out_, n_cols);
  const ConstMapMat<S> w(weight_.value.data(), c_out_, fan_in());
  for (std::size_t t0 = 0; t0 < T; t0 += block) {
    im2col(x, t0, block, cols);
    const ConstMapMat<S> xc(cols.data(), fan_in(), n_cols);
    yb.noalias() = w * xc;
    const std::size_t valid = (std::min(block, T - t0)) * HW;
    for (std::size_t co = 0; co < c_out_; ++co) {
      S* dst = y.data() + (co * T + t0) * HW;
      const S b = bias_.value[co];
      for (std::size_t k = 0; k < valid; ++k) dst[k] = yb(co, k) + b;
    }
  }
  if (train) cached_x_ = x;
  return y;
}

template <typename S>
Tensor<S> Conv3d<S>::backward4(const Tensor<S>& dy) {
  if (cached_x_.size() == 0) throw Error(ErrorCode::kShapeError, "conv backward without forward");
  const Tensor<S>& x = cached_x_;
  if (dy.shape() != shape4(x.shape())) shape_error("conv3d gradient shape", dy.shape());
  const std::size_t T = x.dim(1), HW = x.dim(2) * x.dim(3);
  const std::size_t block = block_frames(HW);
  const std::size_t n_cols = block * HW;
  Tensor<S> dx(x.shape());
  std::vector<S> cols, dcols(fan_in() * n_cols);
  RowMat<S> dyb(c_out_, n_cols);
  const ConstMapMat<S> w(weight_.value.data(), c_out_, fan_in());
  MapMat<S> dw(weight_.grad.data(), c_out_, fan_in());
  for (std::size_t t0 = 0; t0 < T; t0 += block) {
    const std::size_t valid = (std::min(block, T - t0)) * HW;
    dyb.setZero();
    for (std::size_t co = 0; co < c_out_; ++co) {
      const S* src = dy.data() + (co * T + t0) * HW;
      S acc = 0;
      for (std::size_t k = 0; k < valid; ++k) {
        dyb(co, k) = src[k];
        acc += src[k];
      }
      bias_.grad[co] += acc;
    }
    im2col(x, t0, block, cols);
    const ConstMapMat<S> xc(cols.data(), fan_in(), n_cols);
    dw.noalias() += dyb * xc.transpose();
    MapMat<S> dc(dcols.data(), fan_in(), n_cols);
    dc.noalias() = w.transpose() * dyb;
    col2im(dcols, t0, block, dx);
  }
  return dx;
}

template <typename S>
Tensor<S> Conv3d<S>::forward(const Tensor<S>& x, bool train) {
  return forward4(x, train);
}

template <typename S>
Tensor<S> Conv3d<S>::backward(const Tensor<S>& dy) {
  return backward4(dy);
}

template <typename S>
void Conv3d<S>::collect(std::vector<Parameter<S>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Conv1d

template <typename S>
Conv1d<S>::Conv1d(std::string name, std::size_t c_in, std::size_t c_out, std::size_t k,
                  std::size_t dilation)
    : Conv3d<S>(std::move(name), c_in, c_out, k, 1, 1, dilation) {}

template <typename S>
Shape Conv1d<S>::output_shape(const Shape& in) const {
  if (in.size() != 2) shape_error("conv1d expects C x T", in);
  const Shape o = this->shape4({in[0], in[1], 1, 1});
  return {o[0], o[1]};
}

template <typename S>
Tensor<S> Conv1d<S>::forward(const Tensor<S>& x, bool train) {
  const Shape o = output_shape(x.shape());
  return this->forward4(x.reshaped({x.dim(0), x.dim(1), 1, 1}), train).reshaped(o);
}

template <typename S>
Tensor<S> Conv1d<S>::backward(const Tensor<S>& dy) {
  if (dy.rank() != 2) shape_error("conv1d gradient shape", dy.shape());
  const Tensor<S> dx = this->backward4(dy.reshaped({dy.dim(0), dy.dim(1), 1, 1}));
  return dx.reshaped({dx.dim(0), dx.dim(1)});
}

// ---------------------------------------------------------------- PReLU

template <typename S>
PRelu<S>::PRelu(std::string name, std::size_t channels, bool shared, S init)
    : channels_(channels), shared_(shared),
      slopes_(name + ".slope", {shared ? std::size_t{1} : channels}) {
  slopes_.value.fill(init);
}

template <typename S>
Shape PRelu<S>::output_shape(const Shape& in) const {
  if (in.empty() || (!shared_ && in[0] != channels_)) shape_error("prelu channel mismatch", in);
  return in;
}

template <typename S>
Tensor<S> PRelu<S>::forward(const Tensor<S>& x, bool train) {
  output_shape(x.shape());
  Tensor<S> y(x.shape());
  const std::size_t per = x.size() / x.dim(0);
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    const S a = slopes_.value[shared_ ? 0 : c];
    const S* src = x.data() + c * per;
    S* dst = y.data() + c * per;
    for (std::size_t k = 0; k < per; ++k) dst[k] = src[k] >= S(0) ? src[k] : a * src[k];
  }
  if (train) cached_x_ = x;
  return y;
}

template <typename S>
Tensor<S> PRelu<S>::backward(const Tensor<S>& dy) {
  if (dy.shape() != cached_x_.shape()) shape_error("prelu gradient shape", dy.shape());
  Tensor<S> dx(dy.shape());
  const std::size_t per = dy.size() / dy.dim(0);
  for (std::size_t c = 0; c < dy.dim(0); ++c) {
    const std::size_t s = shared_ ? 0 : c;
    const S a = slopes_.value[s];
    const S* x = cached_x_.data() + c * per;
    const S* g = dy.data() + c * per;
    S* d = dx.data() + c * per;
    S da = 0;
    for (std::size_t k = 0; k < per; ++k) {
      if (x[k] >= S(0)) {
        d[k] = g[k];
      } else {
        d[k] = a * g[k];
        da += x[k] * g[k];
      }
    }
    slopes_.grad[s] += da;
  }
  return dx;
}

template <typename S>
void PRelu<S>::collect(std::vector<Parameter<S>*>& out) {
  out.push_back(&slopes_);
}

// ---------------------------------------------------------------- MaxPoolAxis

template <typename S>
MaxPoolAxis<S>::MaxPoolAxis(std::size_t axis, std::size_t size) : axis_(axis), size_(size) {
  if (axis != 2 && axis != 3) {
    throw Error(ErrorCode::kShapeError, "max pooling runs over spatial axes 2 or 3 only");
  }
  if (size == 0) throw Error(ErrorCode::kShapeError, "pool size must be positive");
}

template <typename S>
Shape MaxPoolAxis<S>::output_shape(const Shape& in) const {
  if (in.size() != 4) shape_error("maxpool expects C x T x H x W", in);
  if (in[axis_] % size_ != 0) shape_error("pooled axis not divisible by pool size", in);
  Shape out = in;
  out[axis_] /= size_;
  return out;
}

template <typename S>
Tensor<S> MaxPoolAxis<S>::forward(const Tensor<S>& x, bool train) {
  const Shape out_shape = output_shape(x.shape());
  Tensor<S> y(out_shape);
  const std::size_t W = x.dim(3);
  // Element stride along the pooled axis and the number of contiguous
  // "outer" runs that share it.
  const std::size_t stride = axis_ == 3 ? 1 : W;
  const std::size_t inner = axis_ == 3 ? 1 : W;
  const std::size_t len = x.dim(axis_);
  const std::size_t outer = x.size() / (len * inner);
  if (train) argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t b = 0; b < outer; ++b) {
    const std::size_t base = b * len * inner;
    for (std::size_t p = 0; p < len / size_; ++p) {
      for (std::size_t in = 0; in < inner; ++in, ++o) {
        std::size_t best = base + p * size_ * stride + in;
        for (std::size_t k = 1; k < size_; ++k) {
          const std::size_t idx = base + (p * size_ + k) * stride + in;
          if (x[idx] > x[best]) best = idx;
        }
        y[o] = x[best];
        if (train) argmax_[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (train) in_shape_ = x.shape();
  return y;
}

template <typename S>
Tensor<S> MaxPoolAxis<S>::backward(const Tensor<S>& dy) {
  if (dy.size() != argmax_.size()) shape_error("maxpool gradient shape", dy.shape());
  Tensor<S> dx(in_shape_);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------- Tanh

template <typename S>
Tensor<S> Tanh<S>::forward(const Tensor<S>& x, bool train) {
  Tensor<S> y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::tanh(x[k]);
  if (train) cached_y_ = y;
  return y;
}

template <typename S>
Tensor<S> Tanh<S>::backward(const Tensor<S>& dy) {
  if (dy.shape() != cached_y_.shape()) shape_error("tanh gradient shape", dy.shape());
  Tensor<S> dx(dy.shape());
  for (std::size_t k = 0; k < dy.size(); ++k) dx[k] = dy[k] * (S(1) - cached_y_[k] * cached_y_[k]);
  return dx;
}

// ---------------------------------------------------------------- FrameFlatten

template <typename S>
Shape FrameFlatten<S>::output_shape(const Shape& in) const {
  if (in.size() != 4) shape_error("frame flatten expects C x T x H x W", in);
  return {in[0] * in[2] * in[3], in[1]};
}

template <typename S>
Tensor<S> FrameFlatten<S>::forward(const Tensor<S>& x, bool train) {
  const Shape out_shape = output_shape(x.shape());
  const std::size_t C = x.dim(0), T = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> y(out_shape);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t g = 0; g < HW; ++g) y[(c * HW + g) * T + t] = x[(c * T + t) * HW + g];
  if (train) in_shape_ = x.shape();
  return y;
}

template <typename S>
Tensor<S> FrameFlatten<S>::backward(const Tensor<S>& dy) {
  if (in_shape_.size() != 4 || dy.shape() != output_shape(in_shape_)) {
    shape_error("frame flatten gradient shape", dy.shape());
  }
  const std::size_t C = in_shape_[0], T = in_shape_[1], HW = in_shape_[2] * in_shape_[3];
  Tensor<S> dx(in_shape_);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t g = 0; g < HW; ++g) dx[(c * T + t) * HW + g] = dy[(c * HW + g) * T + t];
  return dx;
}

// ---------------------------------------------------------------- containers

template <typename S>
Shape Sequential<S>::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

template <typename S>
Tensor<S> Sequential<S>::forward(const Tensor<S>& x, bool train) {
  output_shape(x.shape());
  Tensor<S> h = x;
  for (auto& l : layers_) h = l->forward(h, train);
  return h;
}

template <typename S>
Tensor<S> Sequential<S>::backward(const Tensor<S>& dy) {
  Tensor<S> g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename S>
void Sequential<S>::collect(std::vector<Parameter<S>*>& out) {
  for (auto& l : layers_) l->collect(out);
}

template <typename S>
std::size_t Sequential<S>::temporal_reach() const {
  std::size_t r = 0;
  for (const auto& l : layers_) r += l->temporal_reach();
  return r;
}

template <typename S>
Shape ParallelConcat<S>::output_shape(const Shape& in) const {
  if (branches_.empty()) throw Error(ErrorCode::kShapeError, "concat without branches");
  std::size_t rows = 0, T = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const Shape s = branches_[b]->output_shape(in);
    if (s.size() != 2) shape_error("concat branches must produce F x T", s);
    if (b == 0) T = s[1];
    if (s[1] != T) shape_error("concat branches disagree on T", s);
    rows += s[0];
  }
  return {rows, T};
}

template <typename S>
Tensor<S> ParallelConcat<S>::forward(const Tensor<S>& x, bool train) {
  output_shape(x.shape());
  std::vector<Tensor<S>> parts;
  parts.reserve(branches_.size());
  for (auto& b : branches_) parts.push_back(b->forward(x, train));
  if (train) {
    rows_.clear();
    for (const auto& p : parts) rows_.push_back(p.dim(0));
  }
  return concat_rows(parts);
}

template <typename S>
Tensor<S> ParallelConcat<S>::backward(const Tensor<S>& dy) {
  const auto parts = split_rows(dy, rows_);
  Tensor<S> dx;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    Tensor<S> g = branches_[b]->backward(parts[b]);
    if (b == 0) {
      dx = std::move(g);
    } else {
      for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += g[k];
    }
  }
  return dx;
}

template <typename S>
void ParallelConcat<S>::collect(std::vector<Parameter<S>*>& out) {
  for (auto& b : branches_) b->collect(out);
}

template <typename S>
std::size_t ParallelConcat<S>::temporal_reach() const {
  std::size_t r = 0;
  for (const auto& b : branches_) r = std::max(r, b->temporal_reach());
  return r;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kShapeError, "nothing to concatenate");
  std::size_t rows = 0;
  const std::size_t T = parts[0].dim(1);
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != T) shape_error("concat_rows needs F x T parts", p.shape());
    rows += p.dim(0);
  }
  Tensor<S> out({rows, T});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.vec().begin(), p.vec().end(), out.vec().begin() + static_cast<long>(off));
    off += p.size();
  }
  return out;
}

template <typename S>
std::vector<Tensor<S>> split_rows(const Tensor<S>& x, const std::vector<std::size_t>& rows) {
  if (x.rank() != 2 || std::accumulate(rows.begin(), rows.end(), std::size_t{0}) != x.dim(0)) {
    shape_error("split_rows size mismatch", x.shape());
  }
  const std::size_t T = x.dim(1);
  std::vector<Tensor<S>> out;
  std::size_t off = 0;
  for (std::size_t r : rows) {
    std::vector<S> d(x.vec().begin() + static_cast<long>(off * T),
                     x.vec().begin() + static_cast<long>((off + r) * T));
    out.emplace_back(Shape{r, T}, std::move(d));
    off += r;
  }
  return out;
}

// ---------------------------------------------------------------- loss, init, Adam

template <typename S>
S euclidean_loss(const Tensor<S>& pred, const Tensor<S>& gt, Tensor<S>* grad) {
  if (pred.shape() != gt.shape() || pred.rank() != 2 || pred.dim(0) != 3 || pred.dim(1) == 0) {
    shape_error("loss expects matching 3 x T tensors", pred.shape());
  }
  const std::size_t T = pred.dim(1);
  if (grad) *grad = Tensor<S>(pred.shape());
  S total = 0;
  for (std::size_t t = 0; t < T; ++t) {
    S d[3];
    S sq = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      d[a] = pred[a * T + t] - gt[a * T + t];
      sq += d[a] * d[a];
    }
    const S dist = std::sqrt(sq);
    total += dist;
    if (grad && dist > S(0)) {
      for (std::size_t a = 0; a < 3; ++a) (*grad)[a * T + t] = d[a] / (dist * static_cast<S>(T));
    }
  }
  return total / static_cast<S>(T);
}

template <typename S>
void Conv3d<S>::reset_parameters(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : weight_.value.vec()) v = static_cast<S>(u(rng));
  for (auto& v : bias_.value.vec()) v = static_cast<S>(u(rng));
}

template <typename S>
void PRelu<S>::reset_parameters(std::mt19937_64& rng) {
  (void)rng;
  slopes_.value.fill(S(0.25));
}

template <typename S>
void Sequential<S>::reset_parameters(std::mt19937_64& rng) {
  for (auto& l : layers_) l->reset_parameters(rng);
}

template <typename S>
void ParallelConcat<S>::reset_parameters(std::mt19937_64& rng) {
  for (auto& b : branches_) b->reset_parameters(rng);
}

template <typename S>
void init_parameters(Layer<S>& model, std::mt19937_64& rng) {
  model.reset_parameters(rng);
}

template <typename S>
std::vector<Parameter<S>*> parameters(Layer<S>& model) {
  std::vector<Parameter<S>*> out;
  model.collect(out);
  return out;
}

template <typename S>
std::size_t parameter_count(Layer<S>& model) {
  std::size_t n = 0;
  for (const auto* p : parameters(model)) n += p->value.size();
  return n;
}

template <typename S>
void zero_grad(Layer<S>& model) {
  for (auto* p : parameters(model)) p->grad.fill(S(0));
}

template <typename S>
Adam<S>::Adam(std::vector<Parameter<S>*> params, AdamOptions opts)
    : params_(std::move(params)), opts_(opts) {
  for (const auto* p : params_) {
    m_.emplace_back(p->value.size(), S(0));
    v_.emplace_back(p->value.size(), S(0));
  }
}

template <typename S>
void Adam<S>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const S b1 = static_cast<S>(opts_.beta1), b2 = static_cast<S>(opts_.beta2);
  const S lr = static_cast<S>(opts_.lr), eps = static_cast<S>(opts_.eps);
  const S ic1 = static_cast<S>(1.0 / c1), ic2 = static_cast<S>(1.0 / c2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& val = params_[k]->value.vec();
    const auto& g = params_[k]->grad.vec();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = b1 * m[i] + (S(1) - b1) * g[i];
      v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
      const S mhat = m[i] * ic1;
      const S vhat = v[i] * ic2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

#define DOATRACK_NN_INSTANTIATE(S)                                                          \
  template class Tensor<S>;                                                                 \
  template class Conv3d<S>;                                                                 \
  template class Conv1d<S>;                                                                 \
  template class PRelu<S>;                                                                  \
  template class MaxPoolAxis<S>;                                                            \
  template class Tanh<S>;                                                                   \
  template class FrameFlatten<S>;                                                           \
  template class Sequential<S>;                                                             \
  template class ParallelConcat<S>;                                                         \
  template class Adam<S>;                                                                   \
  template Tensor<S> concat_rows<S>(const std::vector<Tensor<S>>&);                         \
  template std::vector<Tensor<S>> split_rows<S>(const Tensor<S>&, const std::vector<std::size_t>&); \
  template S euclidean_loss<S>(const Tensor<S>&, const Tensor<S>&, Tensor<S>*);             \
  template void init_parameters<S>(Layer<S>&, std::mt19937_64&);                            \
  template std::vector<Parameter<S>*> parameters<S>(Layer<S>&);                             \
  template std::size_t parameter_count<S>(Layer<S>&);                                       \
  template void zero_grad<S>(Layer<S>&);

DOATRACK_NN_INSTANTIATE(float)
DOATRACK_NN_INSTANTIATE(double)

}  // namespace doatrack::nn
