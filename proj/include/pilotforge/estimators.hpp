#pragma once

// Classical and learned baselines: per-pilot LS, the equally-spaced LTE-like
// lattice, decoder interpolation, and empirical-statistics LMMSE.

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/dataset.hpp"
#include "pilotforge/grid.hpp"
#include "pilotforge/selector.hpp"

namespace pilotforge::est {

// h_p = y_p / x_p elementwise (zero-residual least squares per pilot).
inline std::vector<std::complex<double>> ls_estimate(
    const std::vector<std::complex<double>>& y_p,
    const std::vector<std::complex<double>>& x_p) {
  if (y_p.size() != x_p.size())
    throw ValidationError("ls_estimate: y_p and x_p lengths differ");
  std::vector<std::complex<double>> h(y_p.size());
  for (std::size_t i = 0; i < y_p.size(); ++i) {
    if (std::abs(x_p[i]) == 0.0)
      throw ValidationError("ls_estimate: zero pilot symbol at index " + std::to_string(i));
    h[i] = y_p[i] / x_p[i];
  }
  return h;
}

// LTE-style lattice: pilots on two time columns (slots 3 and 10 of 14,
// scaled for other nn), np/2 per column at uniform subcarrier stride with
// the lattice centered. np == nf*nn returns every location.
inline PilotPattern equally_spaced_pattern(int nf, int nn, int np) {
  if (nf < 1 || nn < 1) throw ValidationError("equally_spaced_pattern: invalid grid");
  if (np < 1 || np > nf * nn)
    throw ValidationError("equally_spaced_pattern: np must lie in [1, nf*nn]");
  PilotPattern p;
  p.nf = nf;
  p.nn = nn;
  if (np == nf * nn) {
    for (int s = 0; s < nf; ++s)
      for (int t = 0; t < nn; ++t) p.indices.emplace_back(s, t);
    p.validate();
    return p;
  }
  std::vector<int> cols;
  if (nn >= 2)
    cols = {(3 * nn) / 14, (10 * nn) / 14};
  else
    cols = {0};
  if (nn >= 2 && cols[0] == cols[1]) cols = {0, nn - 1};
  const int ncols = static_cast<int>(cols.size());
  if (np % ncols != 0)
    throw ValidationError("equally_spaced_pattern: np must be divisible by " +
                          std::to_string(ncols) + " (one slice per pilot column)");
  const int per_col = np / ncols;
  if (per_col > nf)
    throw ValidationError("equally_spaced_pattern: np/" + std::to_string(ncols) +
                          " exceeds subcarrier count");
  const int stride = nf / per_col;
  const int offset = (nf - 1 - stride * (per_col - 1)) / 2;
  for (int c : cols)
    for (int i = 0; i < per_col; ++i) p.indices.emplace_back(offset + i * stride, c);
  p.validate();
  return p;
}

// Runs pilot observations through a trained decoder and reshapes the 2d
// output planes to the grid (the low-resolution estimate H_LR).
template <typename S = float>
ComplexGrid decoder_interpolate(const std::vector<std::array<S, 2>>& u,
                                nn::Sequential<S>& decoder, int nf, int nn, Rng& rng) {
  if (decoder.empty()) throw ValidationError("decoder_interpolate: decoder has no layers");
  const int k = static_cast<int>(u.size());
  const auto& first = decoder.layer(0).spec();
  if (first.kind != nn::LayerKind::dense || first.in != 2 * k)
    throw ValidationError("decoder_interpolate: decoder expects input width " +
                          std::to_string(first.in) + ", got k=" + std::to_string(k));
  nn::Tensor<S> x({1, 2 * k});
  for (int i = 0; i < k; ++i) {
    x.data[i] = u[i][0];
    x.data[k + i] = u[i][1];
  }
  nn::Tensor<S> y = decoder.forward(x, false, rng);
  nn::require_shape(y, {1, 2 * nf * nn}, "decoder_interpolate output");
  std::vector<S> planes(y.data.begin(), y.data.end());
  return planes_to_grid(planes, nf, nn);
}

// Empirical second-order statistics of the ideal channel at the pattern:
// R_hp = E[h h_p^H] (d x k), R_pp = E[h_p h_p^H] (k x k).
struct ChannelStatistics {
  Eigen::MatrixXcd r_hp;
  Eigen::MatrixXcd r_pp;
  int sample_count = 0;
  std::uint32_t pattern_crc = 0;
  std::uint64_t dataset_seed = 0;
};

inline ChannelStatistics fit_statistics(const sim::ChannelDataset& dataset,
                                        const PilotPattern& pattern,
                                        std::optional<float> snr_filter_db = std::nullopt,
                                        bool* ill_conditioned_warning = nullptr) {
  if (dataset.records.empty()) throw ValidationError("fit_statistics: dataset is empty");
  pattern.validate();
  const int d = dataset.header.nf * dataset.header.nn;
  const int k = pattern.k();
  ChannelStatistics st;
  st.r_hp = Eigen::MatrixXcd::Zero(d, k);
  st.r_pp = Eigen::MatrixXcd::Zero(k, k);
  st.pattern_crc = pattern_hash(pattern);
  st.dataset_seed = dataset.header.seed;
  Eigen::VectorXcd h(d), hp(k);
  for (const auto& rec : dataset.records) {
    if (snr_filter_db && rec.snr_db != *snr_filter_db) continue;
    for (int i = 0; i < d; ++i) h(i) = std::complex<double>(rec.ideal.values[i]);
    for (int i = 0; i < k; ++i) hp(i) = h(pattern.flat(i));
    st.r_hp.noalias() += h * hp.adjoint();
    st.r_pp.noalias() += hp * hp.adjoint();
    ++st.sample_count;
  }
  if (st.sample_count == 0)
    throw ValidationError("fit_statistics: no records match the SNR filter");
  st.r_hp /= double(st.sample_count);
  st.r_pp /= double(st.sample_count);
  const bool ill = st.sample_count < k;
  if (ill_conditioned_warning) *ill_conditioned_warning = ill;
  return st;
}

struct PilotObservation {
  PilotPattern pattern;
  std::vector<std::complex<double>> values;  // LS-resolved gains at the pilots

  void validate() const {
    pattern.validate();
    if (values.size() != pattern.indices.size())
      throw ValidationError("observation: value count does not match pattern length");
  }
};

// h_hat = R_hp (R_pp + sigma^2 I)^{-1} h_p^LS with a small trace-scaled
// Tikhonov term for conditioning.
inline Eigen::VectorXcd mmse_estimate_vec(const PilotObservation& obs,
                                          const ChannelStatistics& stats,
                                          double noise_var) {
  obs.validate();
  const int k = obs.pattern.k();
  if (stats.r_pp.rows() != k || stats.r_hp.cols() != k)
    throw ValidationError("mmse_estimate: statistics do not match pattern size");
  if (noise_var < 0) throw ValidationError("mmse_estimate: negative noise variance");
  const double tik = 1e-8 * stats.r_pp.real().trace() / double(k);
  Eigen::MatrixXcd a = stats.r_pp;
  a.diagonal().array() += std::complex<double>(noise_var + tik, 0.0);
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw RunError("mmse_estimate: singular pilot correlation system");
  Eigen::VectorXcd hp(k);
  for (int i = 0; i < k; ++i) hp(i) = obs.values[i];
  return stats.r_hp * ldlt.solve(hp);
}

inline ComplexGrid mmse_estimate(const PilotObservation& obs, const ChannelStatistics& stats,
                                 double noise_var, int nf, int nn) {
  const Eigen::VectorXcd h = mmse_estimate_vec(obs, stats, noise_var);
  if (h.size() != std::int64_t(nf) * nn)
    throw ValidationError("mmse_estimate: statistics grid size mismatch");
  ComplexGrid g(nf, nn);
  for (int i = 0; i < nf * nn; ++i)
    g.values[i] = std::complex<float>(static_cast<float>(h(i).real()),
                                      static_cast<float>(h(i).imag()));
  return g;
}

// Statistics cache: avoids refitting R_hp/R_pp for every evaluation run.
inline constexpr char kStatsMagic[4] = {'P', 'F', 'S', 'T'};
inline constexpr std::uint32_t kStatsVersion = 1;

inline void save_statistics(const std::filesystem::path& path, const ChannelStatistics& st,
                            int nf, int nn) {
  ByteWriter w;
  w.bytes(kStatsMagic, 4);
  w.u32(kStatsVersion);
  w.u32(static_cast<std::uint32_t>(nf));
  w.u32(static_cast<std::uint32_t>(nn));
  w.u32(static_cast<std::uint32_t>(st.r_pp.rows()));
  w.u32(st.pattern_crc);
  w.u64(st.dataset_seed);
  w.u32(static_cast<std::uint32_t>(st.sample_count));
  for (int c = 0; c < st.r_hp.cols(); ++c)
    for (int r = 0; r < st.r_hp.rows(); ++r) {
      w.f64(st.r_hp(r, c).real());
      w.f64(st.r_hp(r, c).imag());
    }
  for (int c = 0; c < st.r_pp.cols(); ++c)
    for (int r = 0; r < st.r_pp.rows(); ++r) {
      w.f64(st.r_pp(r, c).real());
      w.f64(st.r_pp(r, c).imag());
    }
  w.write_file_with_crc(path);
}

inline ChannelStatistics load_statistics(const std::filesystem::path& path, int nf, int nn) {
  ByteReader r = ByteReader::from_file_checked(path);
  char magic[4];
  for (auto& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kStatsMagic, 4) != 0)
    throw RunError("not a statistics cache: " + path.string());
  if (r.u32() != kStatsVersion) throw RunError("unsupported statistics version");
  const int file_nf = static_cast<int>(r.u32());
  const int file_nn = static_cast<int>(r.u32());
  if (file_nf != nf || file_nn != nn)
    throw RunError("statistics cache grid mismatch: " + path.string());
  const int k = static_cast<int>(r.u32());
  ChannelStatistics st;
  st.pattern_crc = r.u32();
  st.dataset_seed = r.u64();
  st.sample_count = static_cast<int>(r.u32());
  const int d = nf * nn;
  st.r_hp.resize(d, k);
  st.r_pp.resize(k, k);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < d; ++i) {
      const double re = r.f64(), im = r.f64();
      st.r_hp(i, c) = {re, im};
    }
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < k; ++i) {
      const double re = r.f64(), im = r.f64();
      st.r_pp(i, c) = {re, im};
    }
  return st;
}

}  // namespace pilotforge::est
