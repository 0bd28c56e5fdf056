#pragma once

// Concrete (relaxed one-hot) sampling: Gumbel noise, the tempered softmax
// over log alpha + g, the annealing schedule, and the trainable selector
// layer used by the pilot-selection autoencoder.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/layers.hpp"
#include "pilotforge/tensor.hpp"

namespace pilotforge::pilots {

// g = -log(-log(u)) for u in (0,1); inputs are clamped away from {0,1}.
inline double gumbel_from_u(double u) {
  constexpr double lo = 1e-12;
  u = std::clamp(u, lo, 1.0 - lo);
  return -std::log(-std::log(u));
}

template <typename S = double>
std::vector<S> sample_gumbel(int count, Rng& rng) {
  if (count < 1) throw ValidationError("sample_gumbel: count must be >= 1");
  std::vector<S> g(count);
  for (auto& v : g) v = static_cast<S>(gumbel_from_u(rng.u01()));
  return g;
}

// m_j = exp((log alpha_j + g_j)/T) / sum_k exp((log alpha_k + g_k)/T),
// stabilized by max subtraction.
template <typename S>
void concrete_forward(const S* alpha, const S* gumbel, int d, double temperature, S* m) {
  if (temperature <= 0.0) throw ValidationError("concrete: temperature must be positive");
  double zmax = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < d; ++j) {
    if (!(alpha[j] > S(0)))
      throw ValidationError("concrete: alpha must be strictly positive (index " +
                            std::to_string(j) + ")");
    const double z = (std::log(double(alpha[j])) + double(gumbel[j])) / temperature;
    m[j] = static_cast<S>(z);
    zmax = std::max(zmax, z);
  }
  double sum = 0.0;
  for (int j = 0; j < d; ++j) {
    const double e = std::exp(double(m[j]) - zmax);
    m[j] = static_cast<S>(e);
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < d; ++j) m[j] = static_cast<S>(double(m[j]) * inv);
}

template <typename S>
std::vector<S> concrete_forward(const std::vector<S>& alpha, double temperature,
                                const std::vector<S>& gumbel) {
  if (alpha.size() != gumbel.size())
    throw ValidationError("concrete: alpha and gumbel lengths differ");
  std::vector<S> m(alpha.size());
  concrete_forward(alpha.data(), gumbel.data(), static_cast<int>(alpha.size()),
                   temperature, m.data());
  return m;
}

struct AnnealSchedule {
  double t0 = 10.0;   // start temperature
  double tb = 0.01;   // final temperature
  int total_epochs = 100;

  void validate() const {
    if (!(t0 > tb && tb > 0.0))
      throw ValidationError("anneal schedule requires t0 > tb > 0");
    if (total_epochs < 1) throw ValidationError("anneal schedule requires epochs >= 1");
  }
};

// Exponential decay T(e) = t0 * (tb/t0)^(e/E).
inline double anneal(const AnnealSchedule& s, int epoch) {
  s.validate();
  if (epoch < 0 || epoch > s.total_epochs)
    throw ValidationError("anneal: epoch out of range");
  const double frac = double(epoch) / double(s.total_epochs);
  return s.t0 * std::pow(s.tb / s.t0, frac);
}

// k nodes of strictly positive logits over d grid locations plus the
// sampling temperature.
template <typename S = float>
struct ConcreteSelector {
  int k = 0;
  int d = 0;
  nn::Tensor<S> alpha;  // [k, d], all entries > 0
  double temperature = 1.0;

  void validate() const {
    if (k < 1 || d < 1 || k > d)
      throw ValidationError("selector requires 1 <= k <= d");
    if (alpha.shape != std::vector<int>{k, d})
      throw ValidationError("selector alpha must be [k,d]");
    for (const auto& a : alpha.data)
      if (!(a > S(0))) throw ValidationError("selector alpha must be strictly positive");
    if (temperature <= 0) throw ValidationError("selector temperature must be positive");
  }

  // Categorical selection probabilities softmax(log alpha_i) per node; the
  // mean of the per-node maxima is the convergence diagnostic.
  double mean_max_probability() const {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
      const S* row = alpha.data.data() + std::size_t(i) * d;
      double sum = 0.0, best = 0.0;
      for (int j = 0; j < d; ++j) sum += double(row[j]);
      for (int j = 0; j < d; ++j) best = std::max(best, double(row[j]) / sum);
      acc += best;
    }
    return acc / double(k);
  }
};

// One Concrete draw per node: node i samples m_i ~ Concrete(alpha_i, T) and
// outputs u_i = (<re, m_i>, <im, m_i>) - the same relaxed location applied
// to both parts.
template <typename S>
std::vector<std::array<S, 2>> selector_forward(const ConcreteSelector<S>& sel,
                                               const std::vector<S>& re,
                                               const std::vector<S>& im, Rng& rng) {
  sel.validate();
  if (static_cast<int>(re.size()) != sel.d || static_cast<int>(im.size()) != sel.d)
    throw ValidationError("selector_forward: plane length does not match d=" +
                          std::to_string(sel.d));
  std::vector<std::array<S, 2>> u(sel.k);
  std::vector<S> m(sel.d);
  for (int i = 0; i < sel.k; ++i) {
    const std::vector<S> g = sample_gumbel<S>(sel.d, rng);
    concrete_forward(sel.alpha.data.data() + std::size_t(i) * sel.d, g.data(), sel.d,
                     sel.temperature, m.data());
    double ur = 0.0, ui = 0.0;
    for (int j = 0; j < sel.d; ++j) {
      ur += double(re[j]) * double(m[j]);
      ui += double(im[j]) * double(m[j]);
    }
    u[i] = {static_cast<S>(ur), static_cast<S>(ui)};
  }
  return u;
}

// Trainable layer form of the selector. The free parameter is log alpha, so
// alpha stays strictly positive for any optimizer step. Input is a
// [B, 2d] batch of (re-plane || im-plane) rows; output is [B, 2k] laid out
// as (re picks || im picks). Fresh Gumbel noise is drawn per node per
// sample on every training pass.
template <typename S>
class ConcreteSelectorLayer final : public nn::Layer<S> {
 public:
  ConcreteSelectorLayer(int k, int d, const std::string& prefix)
      : nn::Layer<S>(nn::LayerSpec::dense(2 * d, 2 * k)),
        k_(k),
        d_(d),
        log_alpha_{prefix + ".log_alpha", nn::Tensor<S>({k, d})} {
    if (k < 1 || d < 1 || k > d) throw ValidationError("selector layer requires 1 <= k <= d");
  }

  void init(Rng& rng) {
    for (auto& v : log_alpha_.value.data) v = static_cast<S>(rng.uniform(-0.01, 0.01));
  }

  void set_temperature(double t) {
    if (t <= 0) throw ValidationError("selector temperature must be positive");
    temperature_ = t;
  }
  double temperature() const { return temperature_; }

  std::vector<nn::Param<S>*> params() override { return {&log_alpha_}; }
  nn::Param<S>& log_alpha() { return log_alpha_; }

  ConcreteSelector<S> snapshot() const {
    ConcreteSelector<S> sel;
    sel.k = k_;
    sel.d = d_;
    sel.temperature = temperature_;
    sel.alpha = nn::Tensor<S>({k_, d_});
    for (std::size_t i = 0; i < log_alpha_.value.data.size(); ++i)
      sel.alpha.data[i] = static_cast<S>(std::exp(double(log_alpha_.value.data[i])));
    return sel;
  }

 protected:
  using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
  using ArrMap = Eigen::Map<Arr>;
  using ConstArrMap = Eigen::Map<const Arr>;

  nn::Tensor<S> do_forward(const nn::Tensor<S>& x, bool training, Rng& rng) override {
    if (x.shape.size() != 2 || x.shape[1] != 2 * d_)
      throw ValidationError("selector layer: input must be [B," + std::to_string(2 * d_) +
                            "], got " + nn::shape_string(x.shape));
    const int B = x.shape[0];
    nn::Tensor<S> u({B, 2 * k_});
    if (training) {
      m_cache_ = nn::Tensor<S>({B, k_, d_});
      x_cache_ = x;
    }
    // Clamp keeps -log(-log(u)) finite in the working precision.
    const S ulo = std::is_same_v<S, float> ? S(1e-7) : S(1e-12);
    const S uhi = S(1) - ulo;
    Arr z(d_), scratch(d_);
    const S inv_t = static_cast<S>(1.0 / temperature_);
    for (int b = 0; b < B; ++b) {
      ConstArrMap re(x.data.data() + std::size_t(b) * 2 * d_, d_);
      ConstArrMap im(x.data.data() + std::size_t(b) * 2 * d_ + d_, d_);
      for (int i = 0; i < k_; ++i) {
        ConstArrMap la(log_alpha_.value.data.data() + std::size_t(i) * d_, d_);
        for (int j = 0; j < d_; ++j)
          scratch[j] = std::clamp(static_cast<S>(rng.u01()), ulo, uhi);
        z = (la + (-(-scratch.log()).log())) * inv_t;
        z = (z - z.maxCoeff()).exp();
        ArrMap m(training ? m_cache_.data.data() + (std::size_t(b) * k_ + i) * d_
                          : z.data(),
                 d_);
        m = z / z.sum();
        u.data[std::size_t(b) * 2 * k_ + i] = (re * m).sum();
        u.data[std::size_t(b) * 2 * k_ + k_ + i] = (im * m).sum();
      }
    }
    return u;
  }

  // d(log alpha) only; the grid input is a leaf, so no input gradient is
  // produced (an empty tensor is returned).
  nn::Tensor<S> do_backward(const nn::Tensor<S>& du) override {
    const int B = x_cache_.shape[0];
    nn::require_shape(du, {B, 2 * k_}, "selector backward");
    log_alpha_.value.ensure_grad();
    Arr dm(d_);
    const S inv_t = static_cast<S>(1.0 / temperature_);
    for (int b = 0; b < B; ++b) {
      ConstArrMap re(x_cache_.data.data() + std::size_t(b) * 2 * d_, d_);
      ConstArrMap im(x_cache_.data.data() + std::size_t(b) * 2 * d_ + d_, d_);
      for (int i = 0; i < k_; ++i) {
        const S dur = du.data[std::size_t(b) * 2 * k_ + i];
        const S dui = du.data[std::size_t(b) * 2 * k_ + k_ + i];
        ConstArrMap m(m_cache_.data.data() + (std::size_t(b) * k_ + i) * d_, d_);
        dm = dur * re + dui * im;
        const S inner = (dm * m).sum();
        ArrMap grad(log_alpha_.value.grad.data() + std::size_t(i) * d_, d_);
        grad += m * (dm - inner) * inv_t;
      }
    }
    return nn::Tensor<S>();
  }

 private:
  int k_, d_;
  nn::Param<S> log_alpha_;
  double temperature_ = 1.0;
  nn::Tensor<S> m_cache_, x_cache_;
};

}  // namespace pilotforge::pilots
