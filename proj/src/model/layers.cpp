// Copyright 2026 The VarMix Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "varmix/model/layers.hpp"

#include <cmath>
#include <random>

#include "varmix/core/errors.hpp"

namespace varmix {
namespace {

template <typename Scalar>
using RowMajorMap = Eigen::Map<Matrix<Scalar>>;
template <typename Scalar>
using ConstRowMajorMap = Eigen::Map<const Matrix<Scalar>>;
template <typename Scalar>
using ColMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

template <typename Scalar>
void check_input(const Matrix<Scalar>& x, const TensorShape& shape, const char* who) {
  if (x.cols() != shape.size()) {
    throw ShapeError(std::string(who) + " expects rows of " + std::to_string(shape.size()) +
                     " values " + shape.str() + ", got " + std::to_string(x.cols()));
  }
}

template <typename Scalar>
void he_normal(Scalar* w, Index count, Index fan_in, Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Index i = 0; i < count; ++i) w[i] = static_cast<Scalar>(n(rng));
}

template <typename Scalar>
void append_signs(const Matrix<Scalar>& m, std::vector<Index>& out) {
  for (Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > Scalar(0) ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(TensorShape input, ConvSpec spec) : Layer<Scalar>(input), spec_(spec) {
    if (spec.out_channels < 1 || spec.kernel < 1 || spec.stride < 1 || spec.padding < 0)
      throw InvalidArgument("invalid convolution spec");
    out_h_ = (input.height + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    out_w_ = (input.width + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    if (out_h_ < 1 || out_w_ < 1) throw ShapeError("convolution kernel larger than input " + input.str());
    patch_ = input.channels * spec.kernel * spec.kernel;
  }

  std::string kind() const override { return "conv2d"; }
  TensorShape output_shape() const override { return {spec_.out_channels, out_h_, out_w_}; }
  Index param_count() const override {
    return spec_.out_channels * patch_ + (spec_.bias ? spec_.out_channels : 0);
  }

  void initialize(Scalar* params, Scalar*, Rng& rng) const override {
    he_normal(params, spec_.out_channels * patch_, patch_, rng);
    if (spec_.bias)
      for (Index i = 0; i < spec_.out_channels; ++i) params[spec_.out_channels * patch_ + i] = Scalar(0);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar* params, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "conv2d");
    const Index n = x.rows();
    const Index pixels = out_h_ * out_w_;
    ConstRowMajorMap<Scalar> w(params, spec_.out_channels, patch_);
    Matrix<Scalar> out(n, spec_.out_channels * pixels);
    Matrix<Scalar> col(patch_, pixels);
    Matrix<Scalar> y(spec_.out_channels, pixels);
    if (cache != nullptr) {
      cache->mode = mode;
      cache->tensors.assign(1, Matrix<Scalar>(n * patch_, pixels));
    }
    for (Index i = 0; i < n; ++i) {
      im2col(x.row(i).data(), col);
      y.noalias() = w * col;
      if (spec_.bias) {
        Eigen::Map<const Vector<Scalar>> b(params + spec_.out_channels * patch_, spec_.out_channels);
        y.colwise() += b;
      }
      out.row(i) = Eigen::Map<const RowVector<Scalar>>(y.data(), y.size());
      if (cache != nullptr) cache->tensors[0].middleRows(i * patch_, patch_) = col;
    }
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar* params, const Scalar*,
                          const Cache<Scalar>& cache, Scalar* grad) const override {
    const Index n = dy.rows();
    const Index pixels = out_h_ * out_w_;
    ConstRowMajorMap<Scalar> w(params, spec_.out_channels, patch_);
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(n, this->input_.size());
    Matrix<Scalar> dcol(patch_, pixels);
    for (Index i = 0; i < n; ++i) {
      ConstRowMajorMap<Scalar> g(dy.row(i).data(), spec_.out_channels, pixels);
      const auto col = cache.tensors[0].middleRows(i * patch_, patch_);
      if (grad != nullptr) {
        RowMajorMap<Scalar> gw(grad, spec_.out_channels, patch_);
        gw.noalias() += g * col.transpose();
        if (spec_.bias) {
          Eigen::Map<Vector<Scalar>> gb(grad + spec_.out_channels * patch_, spec_.out_channels);
          gb += g.rowwise().sum();
        }
      }
      dcol.noalias() = w.transpose() * g;
      col2im(dcol, dx.row(i).data());
    }
    return dx;
  }

 private:
  void im2col(const Scalar* img, Matrix<Scalar>& col) const {
    const TensorShape& in = this->input_;
    const Index k = spec_.kernel;
    for (Index c = 0; c < in.channels; ++c)
      for (Index ki = 0; ki < k; ++ki)
        for (Index kj = 0; kj < k; ++kj) {
          const Index r = (c * k + ki) * k + kj;
          Scalar* dst = col.row(r).data();
          for (Index oh = 0; oh < out_h_; ++oh) {
            const Index ih = oh * spec_.stride - spec_.padding + ki;
            for (Index ow = 0; ow < out_w_; ++ow) {
              const Index iw = ow * spec_.stride - spec_.padding + kj;
              const bool inside = ih >= 0 && ih < in.height && iw >= 0 && iw < in.width;
              dst[oh * out_w_ + ow] = inside ? img[(c * in.height + ih) * in.width + iw] : Scalar(0);
            }
          }
        }
  }

  void col2im(const Matrix<Scalar>& col, Scalar* img) const {
    const TensorShape& in = this->input_;
    const Index k = spec_.kernel;
    for (Index c = 0; c < in.channels; ++c)
      for (Index ki = 0; ki < k; ++ki)
        for (Index kj = 0; kj < k; ++kj) {
          const Scalar* src = col.row((c * k + ki) * k + kj).data();
          for (Index oh = 0; oh < out_h_; ++oh) {
            const Index ih = oh * spec_.stride - spec_.padding + ki;
            if (ih < 0 || ih >= in.height) continue;
            for (Index ow = 0; ow < out_w_; ++ow) {
              const Index iw = ow * spec_.stride - spec_.padding + kj;
              if (iw < 0 || iw >= in.width) continue;
              img[(c * in.height + ih) * in.width + iw] += src[oh * out_w_ + ow];
            }
          }
        }
  }

  ConvSpec spec_;
  Index out_h_ = 0;
  Index out_w_ = 0;
  Index patch_ = 0;
};

// ---------------------------------------------------------------------------
// Linear: weight stored column-major (out x in), then bias.

template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(TensorShape input, Index out) : Layer<Scalar>(input), out_(out) {
    if (out < 1) throw InvalidArgument("linear layer needs at least one output");
  }

  std::string kind() const override { return "linear"; }
  TensorShape output_shape() const override { return {out_, 1, 1}; }
  Index param_count() const override { return out_ * this->input_.size() + out_; }

  void initialize(Scalar* params, Scalar*, Rng& rng) const override {
    const Index in = this->input_.size();
    he_normal(params, out_ * in, in, rng);
    for (Index i = 0; i < out_; ++i) params[out_ * in + i] = Scalar(0);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar* params, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "linear");
    const Index in = this->input_.size();
    Eigen::Map<const ColMajor<Scalar>> w(params, out_, in);
    Eigen::Map<const Vector<Scalar>> b(params + out_ * in, out_);
    Matrix<Scalar> out(x.rows(), out_);
    if (mode == Mode::kTrain) {
      out.noalias() = x * w.transpose();
      out.rowwise() += b.transpose();
    } else {
      // Per-row matrix-vector products keep every row's arithmetic independent of the batch.
      Vector<Scalar> xin(in);
      Vector<Scalar> y(out_);
      for (Index i = 0; i < x.rows(); ++i) {
        xin = x.row(i).transpose();
        y.noalias() = w * xin;
        y += b;
        out.row(i) = y.transpose();
      }
    }
    if (cache != nullptr) {
      cache->mode = mode;
      cache->tensors.assign(1, x);
    }
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar* params, const Scalar*,
                          const Cache<Scalar>& cache, Scalar* grad) const override {
    const Index in = this->input_.size();
    Eigen::Map<const ColMajor<Scalar>> w(params, out_, in);
    if (grad != nullptr) {
      Eigen::Map<ColMajor<Scalar>> gw(grad, out_, in);
      Eigen::Map<Vector<Scalar>> gb(grad + out_ * in, out_);
      gw.noalias() += dy.transpose() * cache.tensors[0];
      gb += dy.colwise().sum().transpose();
    }
    Matrix<Scalar> dx = dy * w;
    return dx;
  }

 private:
  Index out_;
};

// ---------------------------------------------------------------------------
// Pointwise activations

template <typename Scalar>
class Relu final : public Layer<Scalar> {
 public:
  using Layer<Scalar>::Layer;
  std::string kind() const override { return "relu"; }
  TensorShape output_shape() const override { return this->input_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar*, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "relu");
    if (cache != nullptr) {
      cache->mode = mode;
      cache->tensors.assign(1, x);
    }
    return x.cwiseMax(Scalar(0));
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar*, const Scalar*,
                          const Cache<Scalar>& cache, Scalar*) const override {
    return (cache.tensors[0].array() > Scalar(0)).select(dy, Scalar(0));
  }

  void activation_pattern(const Cache<Scalar>& cache, std::vector<Index>& out) const override {
    append_signs(cache.tensors[0], out);
  }
};

template <typename Scalar>
class Sigmoid final : public Layer<Scalar> {
 public:
  using Layer<Scalar>::Layer;
  std::string kind() const override { return "sigmoid"; }
  TensorShape output_shape() const override { return this->input_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar*, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "sigmoid");
    Matrix<Scalar> y = (Scalar(1) + (-x.array()).exp()).inverse().matrix();
    if (cache != nullptr) {
      cache->mode = mode;
      cache->tensors.assign(1, y);
    }
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar*, const Scalar*,
                          const Cache<Scalar>& cache, Scalar*) const override {
    const auto& y = cache.tensors[0].array();
    return (dy.array() * y * (Scalar(1) - y)).matrix();
  }
};

// ---------------------------------------------------------------------------
// Pooling and resampling

template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  MaxPool2d(TensorShape input, Index window) : Layer<Scalar>(input), window_(window) {
    if (window < 1 || input.height < window || input.width < window)
      throw ShapeError("max-pool window does not fit input " + input.str());
  }
  std::string kind() const override { return "max_pool2d"; }
  TensorShape output_shape() const override {
    return {this->input_.channels, this->input_.height / window_, this->input_.width / window_};
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar*, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "max_pool2d");
    const TensorShape in = this->input_;
    const TensorShape out_shape = output_shape();
    Matrix<Scalar> out(x.rows(), out_shape.size());
    std::vector<Index> arg(static_cast<std::size_t>(x.rows() * out_shape.size()));
    for (Index n = 0; n < x.rows(); ++n) {
      const Scalar* src = x.row(n).data();
      for (Index c = 0; c < in.channels; ++c)
        for (Index oh = 0; oh < out_shape.height; ++oh)
          for (Index ow = 0; ow < out_shape.width; ++ow) {
            Index best = (c * in.height + oh * window_) * in.width + ow * window_;
            for (Index i = 0; i < window_; ++i)
              for (Index j = 0; j < window_; ++j) {
                const Index idx = (c * in.height + oh * window_ + i) * in.width + ow * window_ + j;
                if (src[idx] > src[best]) best = idx;
              }
            const Index o = (c * out_shape.height + oh) * out_shape.width + ow;
            out(n, o) = src[best];
            arg[static_cast<std::size_t>(n * out_shape.size() + o)] = best;
          }
    }
    if (cache != nullptr) {
      cache->mode = mode;
      cache->indices = std::move(arg);
    }
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar*, const Scalar*,
                          const Cache<Scalar>& cache, Scalar*) const override {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(dy.rows(), this->input_.size());
    for (Index n = 0; n < dy.rows(); ++n)
      for (Index o = 0; o < dy.cols(); ++o)
        dx(n, cache.indices[static_cast<std::size_t>(n * dy.cols() + o)]) += dy(n, o);
    return dx;
  }

  void activation_pattern(const Cache<Scalar>& cache, std::vector<Index>& out) const override {
    out.insert(out.end(), cache.indices.begin(), cache.indices.end());
  }

 private:
  Index window_;
};

template <typename Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  using Layer<Scalar>::Layer;
  std::string kind() const override { return "global_avg_pool"; }
  TensorShape output_shape() const override { return {this->input_.channels, 1, 1}; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar*, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "global_avg_pool");
    const Index plane = this->input_.plane();
    Matrix<Scalar> out(x.rows(), this->input_.channels);
    for (Index c = 0; c < this->input_.channels; ++c)
      out.col(c) = x.middleCols(c * plane, plane).rowwise().sum() / static_cast<Scalar>(plane);
    if (cache != nullptr) cache->mode = mode;
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar*, const Scalar*,
                          const Cache<Scalar>&, Scalar*) const override {
    const Index plane = this->input_.plane();
    Matrix<Scalar> dx(dy.rows(), this->input_.size());
    for (Index c = 0; c < this->input_.channels; ++c)
      dx.middleCols(c * plane, plane) =
          (dy.col(c) / static_cast<Scalar>(plane)).replicate(1, plane);
    return dx;
  }
};

template <typename Scalar>
class Upsample2d final : public Layer<Scalar> {
 public:
  Upsample2d(TensorShape input, Index factor) : Layer<Scalar>(input), factor_(factor) {
    if (factor < 1) throw InvalidArgument("upsample factor must be positive");
  }
  std::string kind() const override { return "upsample2d"; }
  TensorShape output_shape() const override {
    return {this->input_.channels, this->input_.height * factor_, this->input_.width * factor_};
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar*, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "upsample2d");
    const TensorShape in = this->input_;
    const TensorShape os = output_shape();
    Matrix<Scalar> out(x.rows(), os.size());
    for (Index n = 0; n < x.rows(); ++n)
      for (Index c = 0; c < in.channels; ++c)
        for (Index i = 0; i < os.height; ++i)
          for (Index j = 0; j < os.width; ++j)
            out(n, (c * os.height + i) * os.width + j) =
                x(n, (c * in.height + i / factor_) * in.width + j / factor_);
    if (cache != nullptr) cache->mode = mode;
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar*, const Scalar*,
                          const Cache<Scalar>&, Scalar*) const override {
    const TensorShape in = this->input_;
    const TensorShape os = output_shape();
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(dy.rows(), in.size());
    for (Index n = 0; n < dy.rows(); ++n)
      for (Index c = 0; c < in.channels; ++c)
        for (Index i = 0; i < os.height; ++i)
          for (Index j = 0; j < os.width; ++j)
            dx(n, (c * in.height + i / factor_) * in.width + j / factor_) +=
                dy(n, (c * os.height + i) * os.width + j);
    return dx;
  }

 private:
  Index factor_;
};

template <typename Scalar>
class Reshape final : public Layer<Scalar> {
 public:
  Reshape(TensorShape input, TensorShape output) : Layer<Scalar>(input), output_(output) {
    if (input.size() != output.size())
      throw ShapeError("reshape " + input.str() + " -> " + output.str() + " changes element count");
  }
  std::string kind() const override { return "reshape"; }
  TensorShape output_shape() const override { return output_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar*, const Scalar*, Mode mode,
                         Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "reshape");
    if (cache != nullptr) cache->mode = mode;
    return x;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar*, const Scalar*,
                          const Cache<Scalar>&, Scalar*) const override {
    return dy;
  }

 private:
  TensorShape output_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d: params (gamma, beta), buffers (running mean, running var).

template <typename Scalar>
class BatchNorm2d final : public Layer<Scalar> {
 public:
  BatchNorm2d(TensorShape input, Scalar momentum, Scalar eps)
      : Layer<Scalar>(input), momentum_(momentum), eps_(eps) {}

  std::string kind() const override { return "batch_norm2d"; }
  TensorShape output_shape() const override { return this->input_; }
  Index param_count() const override { return 2 * this->input_.channels; }
  Index buffer_count() const override { return 2 * this->input_.channels; }

  void initialize(Scalar* params, Scalar* buffers, Rng&) const override {
    const Index c = this->input_.channels;
    for (Index i = 0; i < c; ++i) {
      params[i] = Scalar(1);
      params[c + i] = Scalar(0);
      buffers[i] = Scalar(0);
      buffers[c + i] = Scalar(1);
    }
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar* params, const Scalar* buffers,
                         Mode mode, Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "batch_norm2d");
    const Index channels = this->input_.channels;
    const Index plane = this->input_.plane();
    const Index count = x.rows() * plane;
    if (mode == Mode::kTrain && count < 2)
      throw InvalidArgument("batch norm in train mode needs more than one value per channel");
    Matrix<Scalar> xhat(x.rows(), x.cols());
    RowVector<Scalar> inv_std(channels);
    RowVector<Scalar> batch_mean(channels);
    RowVector<Scalar> batch_var(channels);
    for (Index c = 0; c < channels; ++c) {
      const auto block = x.middleCols(c * plane, plane);
      Scalar mean;
      Scalar var;
      if (mode == Mode::kTrain) {
        mean = block.sum() / static_cast<Scalar>(count);
        var = (block.array() - mean).square().sum() / static_cast<Scalar>(count);
        batch_mean[c] = mean;
        batch_var[c] = var * static_cast<Scalar>(count) / static_cast<Scalar>(count - 1);
      } else {
        mean = buffers[c];
        var = buffers[channels + c];
      }
      inv_std[c] = Scalar(1) / std::sqrt(var + eps_);
      xhat.middleCols(c * plane, plane) = ((block.array() - mean) * inv_std[c]).matrix();
    }
    Matrix<Scalar> y(x.rows(), x.cols());
    for (Index c = 0; c < channels; ++c)
      y.middleCols(c * plane, plane) =
          (xhat.middleCols(c * plane, plane).array() * params[c] + params[channels + c]).matrix();
    if (cache != nullptr) {
      cache->mode = mode;
      cache->tensors = {std::move(xhat), inv_std, batch_mean, batch_var};
    }
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar* params, const Scalar*,
                          const Cache<Scalar>& cache, Scalar* grad) const override {
    const Index channels = this->input_.channels;
    const Index plane = this->input_.plane();
    const auto& xhat = cache.tensors[0];
    const auto& inv_std = cache.tensors[1];
    const auto count = static_cast<Scalar>(dy.rows() * plane);
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Index c = 0; c < channels; ++c) {
      const auto g = dy.middleCols(c * plane, plane).array();
      const auto xh = xhat.middleCols(c * plane, plane).array();
      const Scalar sum_g = g.sum();
      const Scalar sum_gx = (g * xh).sum();
      if (grad != nullptr) {
        grad[c] += sum_gx;
        grad[channels + c] += sum_g;
      }
      const Scalar scale = params[c] * inv_std(0, c);
      if (cache.mode == Mode::kTrain) {
        dx.middleCols(c * plane, plane) =
            (scale / count * (count * g - sum_g - xh * sum_gx)).matrix();
      } else {
        dx.middleCols(c * plane, plane) = (g * scale).matrix();
      }
    }
    return dx;
  }

  void update_buffers(const Cache<Scalar>& cache, Scalar* buffers) const override {
    if (cache.mode != Mode::kTrain) return;
    const Index channels = this->input_.channels;
    for (Index c = 0; c < channels; ++c) {
      buffers[c] = (Scalar(1) - momentum_) * buffers[c] + momentum_ * cache.tensors[2](0, c);
      buffers[channels + c] =
          (Scalar(1) - momentum_) * buffers[channels + c] + momentum_ * cache.tensors[3](0, c);
    }
  }

 private:
  Scalar momentum_;
  Scalar eps_;
};

// ---------------------------------------------------------------------------
// Residual block

template <typename Scalar>
class BasicResidualBlock final : public Layer<Scalar> {
 public:
  BasicResidualBlock(TensorShape input, Index out_channels, Index stride)
      : Layer<Scalar>(input) {
    add(make_conv2d<Scalar>(input, {out_channels, 3, stride, 1, false}));
    add(make_batch_norm2d<Scalar>(main_.back().layer->output_shape()));
    add(make_relu<Scalar>(main_.back().layer->output_shape()));
    add(make_conv2d<Scalar>(main_.back().layer->output_shape(), {out_channels, 3, 1, 1, false}));
    add(make_batch_norm2d<Scalar>(main_.back().layer->output_shape()));
    output_ = main_.back().layer->output_shape();
    if (stride != 1 || input.channels != out_channels) {
      add(make_conv2d<Scalar>(input, {out_channels, 1, stride, 0, false}), true);
      add(make_batch_norm2d<Scalar>(shortcut_.back().layer->output_shape()), true);
      if (!(shortcut_.back().layer->output_shape() == output_))
        throw ShapeError("residual shortcut does not match main path");
    }
  }

  std::string kind() const override { return "basic_residual_block"; }
  TensorShape output_shape() const override { return output_; }
  Index param_count() const override { return params_; }
  Index buffer_count() const override { return buffers_; }

  void initialize(Scalar* params, Scalar* buffers, Rng& rng) const override {
    for (const auto* path : {&main_, &shortcut_})
      for (const Entry& e : *path) e.layer->initialize(params + e.param_off, buffers + e.buffer_off, rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Scalar* params, const Scalar* buffers,
                         Mode mode, Cache<Scalar>* cache) const override {
    check_input(x, this->input_, "basic_residual_block");
    if (cache != nullptr) {
      cache->mode = mode;
      cache->children.assign(main_.size() + shortcut_.size(), Cache<Scalar>{});
    }
    auto child = [&](std::size_t i) { return cache != nullptr ? &cache->children[i] : nullptr; };
    Matrix<Scalar> h = x;
    for (std::size_t i = 0; i < main_.size(); ++i)
      h = main_[i].layer->forward(h, params + main_[i].param_off, buffers + main_[i].buffer_off, mode, child(i));
    Matrix<Scalar> s = x;
    for (std::size_t i = 0; i < shortcut_.size(); ++i)
      s = shortcut_[i].layer->forward(s, params + shortcut_[i].param_off,
                                      buffers + shortcut_[i].buffer_off, mode, child(main_.size() + i));
    h += s;
    if (cache != nullptr) cache->tensors.assign(1, h);
    return h.cwiseMax(Scalar(0));
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, const Scalar* params, const Scalar* buffers,
                          const Cache<Scalar>& cache, Scalar* grad) const override {
    const Matrix<Scalar> g = (cache.tensors[0].array() > Scalar(0)).select(dy, Scalar(0));
    Matrix<Scalar> dh = g;
    for (std::size_t i = main_.size(); i-- > 0;)
      dh = main_[i].layer->backward(dh, params + main_[i].param_off, buffers + main_[i].buffer_off,
                                    cache.children[i],
                                    grad != nullptr ? grad + main_[i].param_off : nullptr);
    Matrix<Scalar> ds = g;
    for (std::size_t i = shortcut_.size(); i-- > 0;)
      ds = shortcut_[i].layer->backward(ds, params + shortcut_[i].param_off,
                                        buffers + shortcut_[i].buffer_off,
                                        cache.children[main_.size() + i],
                                        grad != nullptr ? grad + shortcut_[i].param_off : nullptr);
    return dh + ds;
  }

  void activation_pattern(const Cache<Scalar>& cache, std::vector<Index>& out) const override {
    for (std::size_t i = 0; i < main_.size(); ++i) main_[i].layer->activation_pattern(cache.children[i], out);
    append_signs(cache.tensors[0], out);
  }

  void update_buffers(const Cache<Scalar>& cache, Scalar* buffers) const override {
    for (std::size_t i = 0; i < main_.size(); ++i)
      main_[i].layer->update_buffers(cache.children[i], buffers + main_[i].buffer_off);
    for (std::size_t i = 0; i < shortcut_.size(); ++i)
      shortcut_[i].layer->update_buffers(cache.children[main_.size() + i],
                                         buffers + shortcut_[i].buffer_off);
  }

 private:
  struct Entry {
    LayerPtr<Scalar> layer;
    Index param_off;
    Index buffer_off;
  };

  void add(LayerPtr<Scalar> layer, bool shortcut = false) {
    Entry e{std::move(layer), params_, buffers_};
    params_ += e.layer->param_count();
    buffers_ += e.layer->buffer_count();
    (shortcut ? shortcut_ : main_).push_back(std::move(e));
  }

  std::vector<Entry> main_;
  std::vector<Entry> shortcut_;
  TensorShape output_;
  Index params_ = 0;
  Index buffers_ = 0;
};

}  // namespace

template <typename Scalar>
LayerPtr<Scalar> make_conv2d(TensorShape input, ConvSpec spec) {
  return std::make_unique<Conv2d<Scalar>>(input, spec);
}
template <typename Scalar>
LayerPtr<Scalar> make_linear(TensorShape input, Index out_features) {
  return std::make_unique<Linear<Scalar>>(input, out_features);
}
template <typename Scalar>
LayerPtr<Scalar> make_relu(TensorShape input) {
  return std::make_unique<Relu<Scalar>>(input);
}
template <typename Scalar>
LayerPtr<Scalar> make_sigmoid(TensorShape input) {
  return std::make_unique<Sigmoid<Scalar>>(input);
}
template <typename Scalar>
LayerPtr<Scalar> make_max_pool2d(TensorShape input, Index window) {
  return std::make_unique<MaxPool2d<Scalar>>(input, window);
}
template <typename Scalar>
LayerPtr<Scalar> make_global_avg_pool(TensorShape input) {
  return std::make_unique<GlobalAvgPool<Scalar>>(input);
}
template <typename Scalar>
LayerPtr<Scalar> make_upsample2d(TensorShape input, Index factor) {
  return std::make_unique<Upsample2d<Scalar>>(input, factor);
}
template <typename Scalar>
LayerPtr<Scalar> make_batch_norm2d(TensorShape input, Scalar momentum, Scalar eps) {
  return std::make_unique<BatchNorm2d<Scalar>>(input, momentum, eps);
}
template <typename Scalar>
LayerPtr<Scalar> make_reshape(TensorShape input, TensorShape output) {
  return std::make_unique<Reshape<Scalar>>(input, output);
}
template <typename Scalar>
LayerPtr<Scalar> make_basic_residual_block(TensorShape input, Index out_channels, Index stride) {
  return std::make_unique<BasicResidualBlock<Scalar>>(input, out_channels, stride);
}

#define VARMIX_INSTANTIATE_LAYERS(S)                                                      \
  template LayerPtr<S> make_conv2d<S>(TensorShape, ConvSpec);                            \
  template LayerPtr<S> make_linear<S>(TensorShape, Index);                               \
  template LayerPtr<S> make_relu<S>(TensorShape);                                        \
  template LayerPtr<S> make_sigmoid<S>(TensorShape);                                     \
  template LayerPtr<S> make_max_pool2d<S>(TensorShape, Index);                           \
  template LayerPtr<S> make_global_avg_pool<S>(TensorShape);                             \
  template LayerPtr<S> make_upsample2d<S>(TensorShape, Index);                           \
  template LayerPtr<S> make_batch_norm2d<S>(TensorShape, S, S);                          \
  template LayerPtr<S> make_reshape<S>(TensorShape, TensorShape);                        \
  template LayerPtr<S> make_basic_residual_block<S>(TensorShape, Index, Index);

VARMIX_INSTANTIATE_LAYERS(float)
VARMIX_INSTANTIATE_LAYERS(double)

}  // namespace varmix
