#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"

namespace pilotforge::nn {

// Row-major dense tensor over 64-byte aligned storage. `grad` is empty
// until a backward pass (or ensure_grad) touches it; when present it has
// the same length as `data`.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  aligned_vector<S> data;
  aligned_vector<S> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp)
      : shape(std::move(shp)), data(static_cast<std::size_t>(count(shape)), S(0)) {}

  static std::int64_t count(const std::vector<int>& shp) {
    std::int64_t n = 1;
    for (int d : shp) {
      if (d <= 0) throw ValidationError("tensor dimension must be positive, got " +
                                        std::to_string(d));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }

  static Tensor from_vector(std::vector<int> shp, const std::vector<S>& values) {
    Tensor t;
    t.shape = std::move(shp);
    if (count(t.shape) != static_cast<std::int64_t>(values.size()))
      throw ValidationError("tensor data length does not match shape");
    t.data.assign(values.begin(), values.end());
    return t;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }

  S& operator[](std::size_t i) { return data[i]; }
  const S& operator[](std::size_t i) const { return data[i]; }
};

inline std::string shape_string(const std::vector<int>& shp) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shp.size(); ++i) os << (i ? "x" : "") << shp[i];
  os << ']';
  return os.str();
}

template <typename S>
void require_shape(const Tensor<S>& t, const std::vector<int>& expect,
                   const std::string& what) {
  if (t.shape != expect)
    throw ValidationError(what + ": expected shape " + shape_string(expect) +
                          ", got " + shape_string(t.shape));
}

// Named trainable (or buffer) tensor; gradients live in value.grad.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  bool trainable = true;
};

}  // namespace pilotforge::nn
