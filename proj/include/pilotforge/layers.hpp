#pragma once

// Layer primitives with recorded forward passes and exact reverse-mode
// backward passes. Dense and conv2d lower onto Eigen GEMM; everything is
// templated on the scalar so tests can run the same graph in double.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/tensor.hpp"

namespace pilotforge::nn {

enum class LayerKind { dense, conv2d, leaky_relu, dropout, batch_norm };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::batch_norm: return "batch_norm";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in = 0;          // dense: input width, conv2d: input channels, bn: channels
  int out = 0;         // dense: output width, conv2d: output channels
  int kernel = 0;      // conv2d edge length, odd (same-size zero padding)
  double slope = 0.0;  // leaky_relu negative slope
  double drop_prob = 0.0;

  static LayerSpec dense(int in, int out) { return {LayerKind::dense, in, out, 0, 0, 0}; }
  static LayerSpec conv2d(int in_ch, int out_ch, int kernel) {
    return {LayerKind::conv2d, in_ch, out_ch, kernel, 0, 0};
  }
  static LayerSpec leaky_relu(double slope) {
    return {LayerKind::leaky_relu, 0, 0, 0, slope, 0};
  }
  static LayerSpec dropout(double p) { return {LayerKind::dropout, 0, 0, 0, 0, p}; }
  static LayerSpec batch_norm(int channels) {
    return {LayerKind::batch_norm, channels, channels, 0, 0, 0};
  }

  void validate() const {
    switch (kind) {
      case LayerKind::dense:
        if (in <= 0 || out <= 0) throw ValidationError("dense: widths must be positive");
        break;
      case LayerKind::conv2d:
        if (in <= 0 || out <= 0) throw ValidationError("conv2d: channels must be positive");
        if (kernel <= 0 || kernel % 2 == 0)
          throw ValidationError("conv2d: kernel must be odd for same-size padding, got " +
                                std::to_string(kernel));
        break;
      case LayerKind::leaky_relu:
        break;
      case LayerKind::dropout:
        if (drop_prob < 0.0 || drop_prob >= 1.0)
          throw ValidationError("dropout: probability must lie in [0,1)");
        break;
      case LayerKind::batch_norm:
        if (in <= 0) throw ValidationError("batch_norm: channel count must be positive");
        break;
    }
  }
};

template <typename S>
using MatMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename S>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) { spec_.validate(); }
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }

  // training=true records the pass for backward; inference passes leave no
  // graph behind.
  Tensor<S> forward(const Tensor<S>& x, bool training, Rng& rng) {
    recorded_ = training;
    return do_forward(x, training, rng);
  }

  Tensor<S> backward(const Tensor<S>& grad_out) {
    if (!recorded_)
      throw RunError(std::string("backward on ") + layer_kind_name(spec_.kind) +
                     " without a recorded forward pass");
    return do_backward(grad_out);
  }

  virtual std::vector<Param<S>*> params() { return {}; }

 protected:
  virtual Tensor<S> do_forward(const Tensor<S>& x, bool training, Rng& rng) = 0;
  virtual Tensor<S> do_backward(const Tensor<S>& grad_out) = 0;

  LayerSpec spec_;
  bool recorded_ = false;
};

// Kaiming-uniform fan-in init; `slope` is the negative slope of the
// activation that follows (1 for a linear output layer).
template <typename S>
void init_kaiming_uniform(Tensor<S>& w, int fan_in, double slope, Rng& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<S>(rng.uniform(-bound, bound));
}

// y = x W^T + b over a [B, in] batch.
template <typename S>
class DenseLayer final : public Layer<S> {
 public:
  DenseLayer(int in, int out, const std::string& prefix)
      : Layer<S>(LayerSpec::dense(in, out)),
        w_{prefix + ".weight", Tensor<S>({out, in})},
        b_{prefix + ".bias", Tensor<S>({out})} {}

  void init(Rng& rng, double slope) {
    init_kaiming_uniform(w_.value, this->spec_.in, slope, rng);
    std::fill(b_.value.data.begin(), b_.value.data.end(), S(0));
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  Param<S>& weight() { return w_; }
  Param<S>& bias() { return b_; }

 protected:
  Tensor<S> do_forward(const Tensor<S>& x, bool training, Rng&) override {
    const int in = this->spec_.in, out = this->spec_.out;
    if (x.shape.size() != 2 || x.shape[1] != in)
      throw ValidationError("dense: input shape " + shape_string(x.shape) +
                            " incompatible with in=" + std::to_string(in));
    const int batch = x.shape[0];
    Tensor<S> y({batch, out});
    ConstMatMap<S> X(x.data.data(), batch, in);
    ConstMatMap<S> W(w_.value.data.data(), out, in);
    MatMap<S> Y(y.data.data(), batch, out);
    Y.noalias() = X * W.transpose();
    Eigen::Map<const Eigen::RowVectorX<S>> bias(b_.value.data.data(), out);
    Y.rowwise() += bias;
    if (training) x_cache_ = x;
    return y;
  }

  Tensor<S> do_backward(const Tensor<S>& dy) override {
    const int in = this->spec_.in, out = this->spec_.out;
    const int batch = x_cache_.shape[0];
    require_shape(dy, {batch, out}, "dense backward");
    w_.value.ensure_grad();
    b_.value.ensure_grad();
    ConstMatMap<S> X(x_cache_.data.data(), batch, in);
    ConstMatMap<S> dY(dy.data.data(), batch, out);
    MatMap<S> dW(w_.value.grad.data(), out, in);
    dW.noalias() += dY.transpose() * X;
    Eigen::Map<Eigen::RowVectorX<S>> db(b_.value.grad.data(), out);
    db += dY.colwise().sum();
    Tensor<S> dx({batch, in});
    ConstMatMap<S> W(w_.value.data.data(), out, in);
    MatMap<S> dX(dx.data.data(), batch, in);
    dX.noalias() = dY * W;
    return dx;
  }

 private:
  Param<S> w_, b_;
  Tensor<S> x_cache_;
};

// Stride-1 conv over [B, C, H, W] with same-size zero padding, lowered to
// one im2col GEMM over the whole mini-batch. Column buffers are rebuilt in
// backward instead of cached; they are pure data movement next to the GEMM.
template <typename S>
class Conv2dLayer final : public Layer<S> {
 public:
  Conv2dLayer(int in_ch, int out_ch, int kernel, const std::string& prefix)
      : Layer<S>(LayerSpec::conv2d(in_ch, out_ch, kernel)),
        w_{prefix + ".weight", Tensor<S>({out_ch, in_ch, kernel, kernel})},
        b_{prefix + ".bias", Tensor<S>({out_ch})} {}

  void init(Rng& rng, double slope) {
    const int fan_in = this->spec_.in * this->spec_.kernel * this->spec_.kernel;
    init_kaiming_uniform(w_.value, fan_in, slope, rng);
    std::fill(b_.value.data.begin(), b_.value.data.end(), S(0));
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  Param<S>& weight() { return w_; }
  Param<S>& bias() { return b_; }

 protected:
  Tensor<S> do_forward(const Tensor<S>& x, bool training, Rng&) override {
    const int C = this->spec_.in, F = this->spec_.out, K = this->spec_.kernel;
    if (x.shape.size() != 4 || x.shape[1] != C)
      throw ValidationError("conv2d: input shape " + shape_string(x.shape) +
                            " incompatible with in_channels=" + std::to_string(C));
    const int B = x.shape[0], H = x.shape[2], W = x.shape[3];
    const int hw = H * W, ckk = C * K * K;
    const int chunk = chunk_samples(ckk, hw);
    Tensor<S> y({B, F, H, W});
    col_.resize(std::size_t(ckk) * chunk * hw);
    scratch_.resize(std::size_t(F) * chunk * hw);
    ConstMatMap<S> Wm(w_.value.data.data(), F, ckk);
    for (int b0 = 0; b0 < B; b0 += chunk) {
      const int bs = std::min(chunk, B - b0);
      const std::size_t cols = std::size_t(bs) * hw;
      for (int b = 0; b < bs; ++b)
        im2col(x.data.data() + std::size_t(b0 + b) * C * hw, C, H, W, K,
               col_.data() + std::size_t(b) * hw, cols);
      ConstMatMap<S> Col(col_.data(), ckk, static_cast<Eigen::Index>(cols));
      MatMap<S> Y(scratch_.data(), F, static_cast<Eigen::Index>(cols));
      Y.noalias() = Wm * Col;
      // [F, bs*hw] -> [bs, F, hw] with the per-channel bias
      for (int b = 0; b < bs; ++b)
        for (int f = 0; f < F; ++f) {
          const S* src = scratch_.data() + std::size_t(f) * cols + std::size_t(b) * hw;
          S* dst = y.data.data() + (std::size_t(b0 + b) * F + f) * hw;
          const S bias = b_.value.data[f];
          for (int i = 0; i < hw; ++i) dst[i] = src[i] + bias;
        }
    }
    if (training) x_cache_ = x;
    return y;
  }

  Tensor<S> do_backward(const Tensor<S>& dy) override {
    const int C = this->spec_.in, F = this->spec_.out, K = this->spec_.kernel;
    const int B = x_cache_.shape[0], H = x_cache_.shape[2], W = x_cache_.shape[3];
    const int hw = H * W, ckk = C * K * K;
    const int chunk = chunk_samples(ckk, hw);
    require_shape(dy, {B, F, H, W}, "conv2d backward");
    w_.value.ensure_grad();
    b_.value.ensure_grad();
    col_.resize(std::size_t(ckk) * chunk * hw);
    dcol_.resize(std::size_t(ckk) * chunk * hw);
    scratch_.resize(std::size_t(F) * chunk * hw);
    MatMap<S> dWm(w_.value.grad.data(), F, ckk);
    Eigen::Map<Eigen::VectorX<S>> db(b_.value.grad.data(), F);
    Tensor<S> dx({B, C, H, W});
    for (int b0 = 0; b0 < B; b0 += chunk) {
      const int bs = std::min(chunk, B - b0);
      const std::size_t cols = std::size_t(bs) * hw;
      // [bs, F, hw] -> [F, bs*hw]
      for (int b = 0; b < bs; ++b)
        for (int f = 0; f < F; ++f)
          std::copy_n(dy.data.data() + (std::size_t(b0 + b) * F + f) * hw, hw,
                      scratch_.data() + std::size_t(f) * cols + std::size_t(b) * hw);
      for (int b = 0; b < bs; ++b)
        im2col(x_cache_.data.data() + std::size_t(b0 + b) * C * hw, C, H, W, K,
               col_.data() + std::size_t(b) * hw, cols);
      ConstMatMap<S> dY(scratch_.data(), F, static_cast<Eigen::Index>(cols));
      ConstMatMap<S> Col(col_.data(), ckk, static_cast<Eigen::Index>(cols));
      dWm.noalias() += dY * Col.transpose();
      db += dY.rowwise().sum();
      MatMap<S> dCol(dcol_.data(), ckk, static_cast<Eigen::Index>(cols));
      dCol.noalias() = ConstMatMap<S>(w_.value.data.data(), F, ckk).transpose() * dY;
      for (int b = 0; b < bs; ++b)
        col2im(dcol_.data() + std::size_t(b) * hw, cols, C, H, W, K,
               dx.data.data() + std::size_t(b0 + b) * C * hw);
    }
    return dx;
  }

 private:
  // Samples per GEMM group: caps the column buffer near 8 MB so patch
  // matrices stay cache-friendly while GEMMs remain large enough to be
  // efficient. Pure function of the shape, so grouping is reproducible.
  static int chunk_samples(int ckk, int hw) {
    const std::size_t budget = std::size_t(8) * 1024 * 1024 / sizeof(S);
    const std::size_t per_sample = std::size_t(ckk) * hw;
    return std::max<int>(1, static_cast<int>(budget / std::max<std::size_t>(1, per_sample)));
  }

  // Writes one sample's patch matrix into its [ckk, hw] column block of the
  // batched [ckk, bs*hw] matrix; row stride is the group width.
  static void im2col(const S* src, int C, int H, int W, int K, S* col,
                     std::size_t row_stride) {
    const int pad = K / 2;
    std::size_t r = 0;
    for (int c = 0; c < C; ++c) {
      const S* plane = src + std::size_t(c) * H * W;
      for (int di = 0; di < K; ++di) {
        for (int dj = 0; dj < K; ++dj, ++r) {
          S* out = col + r * row_stride;
          for (int y = 0; y < H; ++y) {
            const int sy = y + di - pad;
            if (sy < 0 || sy >= H) {
              std::fill(out, out + W, S(0));
              out += W;
              continue;
            }
            const S* row = plane + std::size_t(sy) * W;
            const int sx0 = dj - pad;
            for (int x = 0; x < W; ++x) {
              const int sx = x + sx0;
              *out++ = (sx >= 0 && sx < W) ? row[sx] : S(0);
            }
          }
        }
      }
    }
  }

  // Transpose of im2col: scatter-adds column gradients back onto the image.
  static void col2im(const S* col, std::size_t row_stride, int C, int H, int W, int K,
                     S* dst) {
    const int pad = K / 2;
    std::fill(dst, dst + std::size_t(C) * H * W, S(0));
    std::size_t r = 0;
    for (int c = 0; c < C; ++c) {
      S* plane = dst + std::size_t(c) * H * W;
      for (int di = 0; di < K; ++di) {
        for (int dj = 0; dj < K; ++dj, ++r) {
          const S* in = col + r * row_stride;
          for (int y = 0; y < H; ++y) {
            const int sy = y + di - pad;
            if (sy < 0 || sy >= H) {
              in += W;
              continue;
            }
            S* row = plane + std::size_t(sy) * W;
            const int sx0 = dj - pad;
            for (int x = 0; x < W; ++x) {
              const int sx = x + sx0;
              if (sx >= 0 && sx < W) row[sx] += in[x];
            }
            in += W;
          }
        }
      }
    }
  }

  Param<S> w_, b_;
  Tensor<S> x_cache_;
  aligned_vector<S> col_, dcol_, scratch_;
};

template <typename S>
class LeakyReluLayer final : public Layer<S> {
 public:
  explicit LeakyReluLayer(double slope) : Layer<S>(LayerSpec::leaky_relu(slope)) {}

 protected:
  Tensor<S> do_forward(const Tensor<S>& x, bool training, Rng&) override {
    Tensor<S> y = x;
    const S a = static_cast<S>(this->spec_.slope);
    if (training) {
      neg_mask_.resize(y.data.size());
      shape_cache_ = x.shape;
      for (std::size_t i = 0; i < y.data.size(); ++i) {
        const bool neg = y.data[i] < S(0);
        neg_mask_[i] = neg;
        if (neg) y.data[i] *= a;
      }
    } else {
      for (auto& v : y.data)
        if (v < S(0)) v *= a;
    }
    return y;
  }

  Tensor<S> do_backward(const Tensor<S>& dy) override {
    require_shape(dy, shape_cache_, "leaky_relu backward");
    Tensor<S> dx = dy;
    const S a = static_cast<S>(this->spec_.slope);
    for (std::size_t i = 0; i < dx.data.size(); ++i)
      if (neg_mask_[i]) dx.data[i] *= a;
    return dx;
  }

 private:
  std::vector<unsigned char> neg_mask_;
  std::vector<int> shape_cache_;
};

// Inverted dropout. With training=false the layer is an exact identity.
template <typename S>
class DropoutLayer final : public Layer<S> {
 public:
  explicit DropoutLayer(double p) : Layer<S>(LayerSpec::dropout(p)) {}

 protected:
  Tensor<S> do_forward(const Tensor<S>& x, bool training, Rng& rng) override {
    if (!training) return x;
    const double p = this->spec_.drop_prob;
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    mask_.assign(x.data.size(), S(0));
    Tensor<S> y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      if (rng.u01() >= p) {
        mask_[i] = keep_scale;
        y.data[i] *= keep_scale;
      } else {
        y.data[i] = S(0);
      }
    }
    shape_cache_ = x.shape;
    return y;
  }

  Tensor<S> do_backward(const Tensor<S>& dy) override {
    require_shape(dy, shape_cache_, "dropout backward");
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
  }

 private:
  std::vector<S> mask_;
  std::vector<int> shape_cache_;
};

// Per-channel batch norm over [B, C, H, W]. Training uses batch statistics
// (biased variance) and maintains running buffers for inference.
template <typename S>
class BatchNormLayer final : public Layer<S> {
 public:
  BatchNormLayer(int channels, const std::string& prefix)
      : Layer<S>(LayerSpec::batch_norm(channels)),
        gamma_{prefix + ".gamma", Tensor<S>({channels})},
        beta_{prefix + ".beta", Tensor<S>({channels})},
        run_mean_{prefix + ".running_mean", Tensor<S>({channels}), false},
        run_var_{prefix + ".running_var", Tensor<S>({channels}), false} {
    std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), S(1));
    std::fill(run_var_.value.data.begin(), run_var_.value.data.end(), S(1));
  }

  std::vector<Param<S>*> params() override {
    return {&gamma_, &beta_, &run_mean_, &run_var_};
  }

 protected:
  Tensor<S> do_forward(const Tensor<S>& x, bool training, Rng&) override {
    const int C = this->spec_.in;
    if (x.shape.size() != 4 || x.shape[1] != C)
      throw ValidationError("batch_norm: expected [B," + std::to_string(C) +
                            ",H,W], got " + shape_string(x.shape));
    const int B = x.shape[0], H = x.shape[2], W = x.shape[3];
    const std::int64_t n = std::int64_t(B) * H * W;
    Tensor<S> y(x.shape);
    if (training) {
      mean_.assign(C, 0.0);
      invstd_.assign(C, 0.0);
      for (int c = 0; c < C; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int b = 0; b < B; ++b) {
          const S* p = plane(x, b, c, H, W);
          for (std::int64_t i = 0; i < std::int64_t(H) * W; ++i) {
            sum += p[i];
            sq += double(p[i]) * p[i];
          }
        }
        const double mu = sum / double(n);
        const double var = std::max(0.0, sq / double(n) - mu * mu);
        mean_[c] = mu;
        invstd_[c] = 1.0 / std::sqrt(var + kEps);
        const double unbiased = n > 1 ? var * double(n) / double(n - 1) : var;
        run_mean_.value.data[c] =
            static_cast<S>((1.0 - kMomentum) * run_mean_.value.data[c] + kMomentum * mu);
        run_var_.value.data[c] = static_cast<S>((1.0 - kMomentum) * run_var_.value.data[c] +
                                                kMomentum * unbiased);
      }
      xhat_ = Tensor<S>(x.shape);
      for (int c = 0; c < C; ++c) {
        const S g = gamma_.value.data[c], bt = beta_.value.data[c];
        const S mu = static_cast<S>(mean_[c]), is = static_cast<S>(invstd_[c]);
        for (int b = 0; b < B; ++b) {
          const S* px = plane(x, b, c, H, W);
          S* ph = plane(xhat_, b, c, H, W);
          S* py = plane(y, b, c, H, W);
          for (std::int64_t i = 0; i < std::int64_t(H) * W; ++i) {
            ph[i] = (px[i] - mu) * is;
            py[i] = g * ph[i] + bt;
          }
        }
      }
      batch_ = B;
    } else {
      for (int c = 0; c < C; ++c) {
        const S g = gamma_.value.data[c], bt = beta_.value.data[c];
        const S mu = run_mean_.value.data[c];
        const S is = static_cast<S>(1.0 / std::sqrt(double(run_var_.value.data[c]) + kEps));
        for (int b = 0; b < B; ++b) {
          const S* px = plane(x, b, c, H, W);
          S* py = plane(y, b, c, H, W);
          for (std::int64_t i = 0; i < std::int64_t(H) * W; ++i)
            py[i] = g * (px[i] - mu) * is + bt;
        }
      }
    }
    return y;
  }

  Tensor<S> do_backward(const Tensor<S>& dy) override {
    const int C = this->spec_.in;
    require_shape(dy, xhat_.shape, "batch_norm backward");
    const int B = xhat_.shape[0], H = xhat_.shape[2], W = xhat_.shape[3];
    const std::int64_t n = std::int64_t(B) * H * W;
    gamma_.value.ensure_grad();
    beta_.value.ensure_grad();
    Tensor<S> dx(dy.shape);
    for (int c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < B; ++b) {
        const S* pd = plane(dy, b, c, H, W);
        const S* ph = plane(xhat_, b, c, H, W);
        for (std::int64_t i = 0; i < std::int64_t(H) * W; ++i) {
          sum_dy += pd[i];
          sum_dy_xhat += double(pd[i]) * ph[i];
        }
      }
      gamma_.value.grad[c] += static_cast<S>(sum_dy_xhat);
      beta_.value.grad[c] += static_cast<S>(sum_dy);
      const double g = gamma_.value.data[c], is = invstd_[c];
      for (int b = 0; b < B; ++b) {
        const S* pd = plane(dy, b, c, H, W);
        const S* ph = plane(xhat_, b, c, H, W);
        S* px = plane(dx, b, c, H, W);
        for (std::int64_t i = 0; i < std::int64_t(H) * W; ++i) {
          const double t = double(n) * pd[i] - sum_dy - double(ph[i]) * sum_dy_xhat;
          px[i] = static_cast<S>(g * is * t / double(n));
        }
      }
    }
    return dx;
  }

 private:
  template <typename T>
  static auto plane(T& t, int b, int c, int H, int W) {
    return t.data.data() + (std::size_t(b) * t.shape[1] + c) * H * W;
  }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  Param<S> gamma_, beta_, run_mean_, run_var_;
  std::vector<double> mean_, invstd_;
  Tensor<S> xhat_;
  int batch_ = 0;
};

// Ordered layer stack; backward walks the recorded passes in reverse.
template <typename S>
class Sequential {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  Tensor<S> forward(const Tensor<S>& x, bool training, Rng& rng) {
    Tensor<S> h = x;
    for (auto& l : layers_) h = l->forward(h, training, rng);
    return h;
  }

  Tensor<S> backward(const Tensor<S>& grad_out) {
    Tensor<S> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::size_t layer_count() const { return layers_.size(); }
  Layer<S>& layer(std::size_t i) { return *layers_[i]; }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// Eq-style reconstruction loss: mean over the batch of the squared l2 norm
// of the per-sample error vector. grad() returns dL/dy.
template <typename S>
struct SumSquaredLoss {
  static double value(const Tensor<S>& y, const Tensor<S>& target) {
    if (!y.same_shape(target))
      throw ValidationError("loss: prediction and target shapes differ");
    const int batch = y.shape[0];
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) {
      const double d = double(y.data[i]) - double(target.data[i]);
      acc += d * d;
    }
    return acc / double(batch);
  }

  static Tensor<S> grad(const Tensor<S>& y, const Tensor<S>& target) {
    const int batch = y.shape[0];
    Tensor<S> g(y.shape);
    const S scale = static_cast<S>(2.0 / double(batch));
    for (std::int64_t i = 0; i < y.size(); ++i)
      g.data[i] = scale * (y.data[i] - target.data[i]);
    return g;
  }
};

}  // namespace pilotforge::nn
