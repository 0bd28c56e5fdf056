#pragma once

// Synthetic wideband fading channel: tapped delay line with per-tap Jakes
// sum-of-sinusoids Doppler fading, plus calibrated AWGN.

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/grid.hpp"

namespace pilotforge::sim {

inline constexpr double kSpeedOfLight = 299792458.0;

struct ChannelProfile {
  std::vector<double> tap_delays_s;   // nonnegative, strictly increasing
  std::vector<double> tap_powers_db;  // relative powers
  double carrier_hz = 2.1e9;
  double spacing_hz = 15e3;           // subcarrier spacing
  double symbol_s = 1e-3 / 14.0;      // OFDM symbol duration incl. CP
  double speed_mps = 50.0 / 3.6;      // UE speed

  void validate() const {
    if (tap_delays_s.empty() || tap_delays_s.size() != tap_powers_db.size())
      throw ValidationError("profile: tap delay/power lists must be nonempty and equal length");
    double prev = -1.0;
    for (double d : tap_delays_s) {
      if (d < 0.0 || d <= prev)
        throw ValidationError("profile: tap delays must be nonnegative and strictly increasing");
      prev = d;
    }
    if (carrier_hz <= 0 || spacing_hz <= 0 || symbol_s <= 0)
      throw ValidationError("profile: carrier, spacing and symbol duration must be positive");
    if (speed_mps < 0) throw ValidationError("profile: speed must be nonnegative");
  }

  // Linear tap powers normalized to sum 1, so the grid has unit mean power.
  std::vector<double> linear_powers() const {
    std::vector<double> p(tap_powers_db.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::pow(10.0, tap_powers_db[i] / 10.0);
      sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
  }

  double doppler_hz() const { return speed_mps * carrier_hz / kSpeedOfLight; }

  // ITU-R M.1225 Vehicular-A power-delay profile.
  static ChannelProfile veha() {
    ChannelProfile p;
    p.tap_delays_s = {0e-9, 310e-9, 710e-9, 1090e-9, 1730e-9, 2510e-9};
    p.tap_powers_db = {0.0, -1.0, -9.0, -10.0, -15.0, -20.0};
    return p;
  }
};

inline constexpr int kSinusoidsPerTap = 32;

// Frequency response H[f,t] = sum_l a_l(t) * exp(-j 2 pi f_sub(f) tau_l),
// with a_l(t) a Jakes-style sum of kSinusoidsPerTap random sinusoids at the
// profile's Doppler rate. Zero speed makes every a_l bit-exactly constant
// over the time axis.
inline ComplexGrid generate_channel(const ChannelProfile& profile, std::uint64_t seed,
                                    int nf = 72, int nn = 14) {
  profile.validate();
  const std::size_t taps = profile.tap_delays_s.size();
  const std::vector<double> powers = profile.linear_powers();
  const double fd = profile.doppler_hz();
  Rng rng(mix64(seed, 0x636861756c6b00ull));

  // a[l][t]
  std::vector<std::complex<double>> a(taps * nn);
  for (std::size_t l = 0; l < taps; ++l) {
    const double amp = std::sqrt(powers[l] / double(kSinusoidsPerTap));
    std::vector<double> omega(kSinusoidsPerTap), phase(kSinusoidsPerTap);
    for (int m = 0; m < kSinusoidsPerTap; ++m) {
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      omega[m] = 2.0 * M_PI * fd * std::cos(theta);
      phase[m] = rng.uniform(0.0, 2.0 * M_PI);
    }
    for (int t = 0; t < nn; ++t) {
      const double time = t * profile.symbol_s;
      std::complex<double> acc(0.0, 0.0);
      for (int m = 0; m < kSinusoidsPerTap; ++m) {
        const double arg = omega[m] * time + phase[m];
        acc += std::complex<double>(std::cos(arg), std::sin(arg));
      }
      a[l * nn + t] = amp * acc;
    }
  }

  ComplexGrid g(nf, nn);
  std::vector<std::complex<double>> steer(taps);
  for (int f = 0; f < nf; ++f) {
    for (std::size_t l = 0; l < taps; ++l) {
      const double arg = -2.0 * M_PI * f * profile.spacing_hz * profile.tap_delays_s[l];
      steer[l] = {std::cos(arg), std::sin(arg)};
    }
    for (int t = 0; t < nn; ++t) {
      std::complex<double> h(0.0, 0.0);
      for (std::size_t l = 0; l < taps; ++l) h += a[l * nn + t] * steer[l];
      g.at(f, t) = std::complex<float>(static_cast<float>(h.real()),
                                       static_cast<float>(h.imag()));
    }
  }
  return g;
}

// No-noise sentinel: add_awgn returns its input bit-exactly.
inline constexpr float kNoNoiseSnrDb = std::numeric_limits<float>::infinity();

// output = grid + n, n i.i.d. circular complex Gaussian with per-element
// variance sigma^2 = P_avg * 10^(-snr/10), P_avg = mean |grid|^2.
inline ComplexGrid add_awgn(const ComplexGrid& grid, float snr_db, std::uint64_t seed) {
  if (!grid.all_finite()) throw ValidationError("add_awgn: grid has non-finite entries");
  if (snr_db == kNoNoiseSnrDb) return grid;
  const double p_avg = grid.mean_power();
  if (p_avg <= 0.0)
    throw ValidationError("add_awgn: zero-power grid, SNR undefined");
  const double sigma2 = p_avg * std::pow(10.0, -double(snr_db) / 10.0);
  const double s = std::sqrt(sigma2 / 2.0);
  Rng rng(mix64(seed, 0x6177676e00ull));
  ComplexGrid out = grid;
  for (auto& v : out.values) {
    const auto [zr, zi] = rng.normal_pair();
    v = std::complex<float>(static_cast<float>(v.real() + s * zr),
                            static_cast<float>(v.imag() + s * zi));
  }
  return out;
}

}  // namespace pilotforge::sim
