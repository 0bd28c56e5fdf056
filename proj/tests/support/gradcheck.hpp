#pragma once

// Test-only oracle: central finite differences over trainable parameters,
// independent of the backward implementations it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pilotforge/tensor.hpp"

namespace pilotforge::testing {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
  int checked = 0;
};

// rel err = |a - fd| / max(|a|, |fd|, floor)
inline double rel_err(double a, double fd, double floor_val = 1e-6) {
  return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor_val});
}

// exact element-wise equality across container/allocator types
template <typename A, typename B>
bool same_values(const A& a, const B& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

// eval_loss() must be deterministic at fixed parameters (freeze any noise by
// reseeding inside). compute_grads() zeroes and repopulates param grads.
template <typename S>
GradCheckReport gradcheck_params(const std::vector<nn::Param<S>*>& params,
                                 const std::function<double()>& eval_loss,
                                 const std::function<void()>& compute_grads,
                                 double h = 1e-4, int stride = 1) {
  compute_grads();
  GradCheckReport rep;
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.data.size(); i += std::size_t(stride)) {
      const S saved = p->value.data[i];
      p->value.data[i] = static_cast<S>(double(saved) + h);
      const double lp = eval_loss();
      p->value.data[i] = static_cast<S>(double(saved) - h);
      const double lm = eval_loss();
      p->value.data[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = double(p->value.grad[i]);
      const double e = rel_err(a, fd);
      ++rep.checked;
      if (e > rep.max_rel_err) {
        rep.max_rel_err = e;
        rep.worst_param = p->name + "[" + std::to_string(i) + "]";
        rep.worst_analytic = a;
        rep.worst_fd = fd;
      }
    }
  }
  return rep;
}

}  // namespace pilotforge::testing
