#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"

namespace pilotforge {

// Nf x Nn complex channel matrix (linear gain), row-major with the
// subcarrier as the slow axis: flat index = subcarrier * nn + slot.
struct ComplexGrid {
  int nf = 0;
  int nn = 0;
  std::vector<std::complex<float>> values;

  ComplexGrid() = default;
  ComplexGrid(int nf_, int nn_) : nf(nf_), nn(nn_) {
    if (nf < 1 || nn < 1)
      throw ValidationError("grid dimensions must be >= 1, got " + std::to_string(nf) +
                            "x" + std::to_string(nn));
    values.assign(static_cast<std::size_t>(nf) * nn, {0.0f, 0.0f});
  }

  int size() const { return nf * nn; }

  std::complex<float>& at(int sub, int slot) {
    return values[static_cast<std::size_t>(sub) * nn + slot];
  }
  const std::complex<float>& at(int sub, int slot) const {
    return values[static_cast<std::size_t>(sub) * nn + slot];
  }

  double mean_power() const {
    double acc = 0.0;
    for (const auto& v : values) acc += std::norm(std::complex<double>(v));
    return acc / static_cast<double>(values.size());
  }

  bool all_finite() const {
    for (const auto& v : values)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

  bool operator==(const ComplexGrid& o) const {
    return nf == o.nf && nn == o.nn && values == o.values;
  }
};

// Vectorized two-plane view: [re(0..d), im(0..d)] in flat-index order.
template <typename S = float>
std::vector<S> grid_to_planes(const ComplexGrid& g) {
  const std::size_t d = g.values.size();
  std::vector<S> out(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = static_cast<S>(g.values[i].real());
    out[d + i] = static_cast<S>(g.values[i].imag());
  }
  return out;
}

template <typename S = float>
ComplexGrid planes_to_grid(const std::vector<S>& planes, int nf, int nn) {
  const std::size_t d = static_cast<std::size_t>(nf) * nn;
  if (planes.size() != 2 * d)
    throw ValidationError("plane vector length " + std::to_string(planes.size()) +
                          " does not match 2*" + std::to_string(d));
  ComplexGrid g(nf, nn);
  for (std::size_t i = 0; i < d; ++i)
    g.values[i] = {static_cast<float>(planes[i]), static_cast<float>(planes[d + i])};
  return g;
}

}  // namespace pilotforge
