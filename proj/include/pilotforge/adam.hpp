#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/tensor.hpp"

namespace pilotforge::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over a fixed parameter set. Moment buffers
// mirror each parameter's shape; non-trainable buffers are skipped.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) slots_.push_back(Slot{
        std::vector<S>(p->trainable ? p->value.data.size() : 0, S(0)),
        std::vector<S>(p->trainable ? p->value.data.size() : 0, S(0))});
  }

  long step_count() const { return step_; }

  void zero_grad() {
    for (auto* p : params_) p->value.zero_grad();
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Param<S>* p = params_[pi];
      if (!p->trainable) continue;
      p->value.ensure_grad();
      Slot& s = slots_[pi];
      for (std::size_t i = 0; i < p->value.data.size(); ++i) {
        const double g = p->value.grad[i];
        if (!std::isfinite(g))
          throw RunError("optimizer: non-finite gradient in parameter '" + p->name + "'");
        const double m = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
        const double v = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
        s.m[i] = static_cast<S>(m);
        s.v[i] = static_cast<S>(v);
        const double update = cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
        p->value.data[i] = static_cast<S>(p->value.data[i] - update);
      }
    }
  }

 private:
  struct Slot {
    std::vector<S> m, v;
  };

  std::vector<Param<S>*> params_;
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  long step_ = 0;
};

}  // namespace pilotforge::nn
