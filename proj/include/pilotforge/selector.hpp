#pragma once

// Pilot patterns and the selector autoencoder trainer: learn k grid
// locations by minimizing decoder reconstruction error under annealed
// Concrete sampling, then freeze into a discrete argmax gather.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pilotforge/adam.hpp"
#include "pilotforge/common.hpp"
#include "pilotforge/concrete.hpp"
#include "pilotforge/dataset.hpp"
#include "pilotforge/grid.hpp"
#include "pilotforge/layers.hpp"

namespace pilotforge {

// Ordered set of k distinct (subcarrier, time-slot) grid locations.
struct PilotPattern {
  int nf = 0;
  int nn = 0;
  std::vector<std::pair<int, int>> indices;

  int k() const { return static_cast<int>(indices.size()); }
  int flat(int i) const { return indices[i].first * nn + indices[i].second; }

  void validate() const {
    if (nf < 1 || nn < 1) throw ValidationError("pattern: invalid grid shape");
    if (indices.empty()) throw ValidationError("pattern: empty index list");
    std::vector<int> flats;
    flats.reserve(indices.size());
    for (const auto& [s, t] : indices) {
      if (s < 0 || s >= nf || t < 0 || t >= nn)
        throw ValidationError("pattern: index (" + std::to_string(s) + "," +
                              std::to_string(t) + ") out of bounds for " +
                              std::to_string(nf) + "x" + std::to_string(nn));
      flats.push_back(s * nn + t);
    }
    std::sort(flats.begin(), flats.end());
    if (std::adjacent_find(flats.begin(), flats.end()) != flats.end())
      throw ValidationError("pattern: duplicate indices");
  }

  std::string canonical_text() const {
    std::ostringstream os;
    os << "# grid " << nf << "x" << nn << " k=" << indices.size() << "\n";
    for (const auto& [s, t] : indices) os << s << "," << t << "\n";
    return os.str();
  }
};

inline void save_pattern(const std::filesystem::path& path, const PilotPattern& p) {
  p.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RunError("cannot write pattern file: " + path.string());
  out << p.canonical_text();
  if (!out) throw RunError("pattern write failed: " + path.string());
}

inline PilotPattern load_pattern(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RunError("cannot read pattern file: " + path.string());
  PilotPattern p;
  std::string line;
  std::size_t expect_k = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      int nf = 0, nn = 0;
      unsigned long k = 0;
      if (std::sscanf(line.c_str(), "# grid %dx%d k=%lu", &nf, &nn, &k) == 3) {
        p.nf = nf;
        p.nn = nn;
        expect_k = k;
        have_header = true;
      }
      continue;
    }
    int s = 0, t = 0;
    if (std::sscanf(line.c_str(), "%d,%d", &s, &t) != 2)
      throw RunError("malformed pattern line '" + line + "' in " + path.string());
    p.indices.emplace_back(s, t);
  }
  if (!have_header)
    throw RunError("pattern file missing '# grid NFxNN k=K' header: " + path.string());
  if (p.indices.size() != expect_k)
    throw RunError("pattern file index count does not match header k: " + path.string());
  p.validate();
  return p;
}

inline std::uint32_t pattern_hash(const PilotPattern& p) {
  return crc32(p.canonical_text());
}

namespace pilots {

// u_i = (Re grid[idx_i], Im grid[idx_i]); the frozen inference-time
// counterpart of the stochastic selector.
inline std::vector<std::array<float, 2>> argmax_gather(const ComplexGrid& grid,
                                                       const PilotPattern& pattern) {
  if (pattern.nf != grid.nf || pattern.nn != grid.nn)
    throw ValidationError("argmax_gather: pattern grid " + std::to_string(pattern.nf) + "x" +
                          std::to_string(pattern.nn) + " does not match grid " +
                          std::to_string(grid.nf) + "x" + std::to_string(grid.nn));
  std::vector<std::array<float, 2>> u(pattern.indices.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto& [s, t] = pattern.indices[i];
    if (s < 0 || s >= grid.nf || t < 0 || t >= grid.nn)
      throw ValidationError("argmax_gather: index out of bounds");
    const auto v = grid.at(s, t);
    u[i] = {v.real(), v.imag()};
  }
  return u;
}

// Flattened (re picks || im picks) row, the decoder's input convention.
template <typename S = float>
std::vector<S> gather_row(const ComplexGrid& grid, const PilotPattern& pattern) {
  const auto u = argmax_gather(grid, pattern);
  const std::size_t k = u.size();
  std::vector<S> row(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    row[i] = static_cast<S>(u[i][0]);
    row[k + i] = static_cast<S>(u[i][1]);
  }
  return row;
}

// index_i = argmax_j alpha_j^i. Collisions resolve in node order by moving
// to the next-highest alpha entry, so the result is always k distinct
// in-bounds locations.
template <typename S>
PilotPattern extract_pattern(const ConcreteSelector<S>& sel, int nf, int nn,
                             int* collision_count = nullptr) {
  sel.validate();
  if (nf * nn != sel.d)
    throw ValidationError("extract_pattern: grid size does not match selector d");
  std::vector<char> taken(sel.d, 0);
  std::vector<int> order(sel.d);
  PilotPattern p;
  p.nf = nf;
  p.nn = nn;
  int collisions = 0;
  for (int i = 0; i < sel.k; ++i) {
    const S* row = sel.alpha.data.data() + std::size_t(i) * sel.d;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    int chosen = -1;
    for (int j : order) {
      if (!taken[j]) {
        chosen = j;
        break;
      }
      if (j == order.front()) ++collisions;
    }
    taken[chosen] = 1;
    p.indices.emplace_back(chosen / nn, chosen % nn);
  }
  if (collision_count) *collision_count = collisions;
  p.validate();
  return p;
}

struct DecoderSpec {
  std::vector<int> hidden = {256, 512, 1024};
  double slope = 0.2;     // LeakyReLU negative slope
  double dropout = 0.1;
};

// 3-hidden-layer MLP decoder: 2k -> hidden... -> 2d, LeakyReLU + Dropout
// after every hidden layer, linear output.
template <typename S = float>
nn::Sequential<S> build_decoder(int k, int d, const DecoderSpec& spec, Rng* init_rng) {
  nn::Sequential<S> net;
  int width = 2 * k;
  for (std::size_t li = 0; li < spec.hidden.size(); ++li) {
    auto* dense = net.template add<nn::DenseLayer<S>>(width, spec.hidden[li],
                                                      "decoder.d" + std::to_string(li));
    if (init_rng) dense->init(*init_rng, spec.slope);
    net.template add<nn::LeakyReluLayer<S>>(spec.slope);
    net.template add<nn::DropoutLayer<S>>(spec.dropout);
    width = spec.hidden[li];
  }
  auto* out = net.template add<nn::DenseLayer<S>>(width, 2 * d, "decoder.out");
  if (init_rng) out->init(*init_rng, 1.0);
  return net;
}

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;            // Eq-style: mean per-sample squared l2 norm
  double mean_max_prob = 0.0;   // selection discreteness diagnostic
  double temperature = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct SelectorTrainConfig {
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t seed = 1;
};

template <typename S = float>
struct SelectorTrainResult {
  ConcreteSelector<S> selector;
  nn::Sequential<S> decoder;
  TrainHistory history;
  double final_mean_max_prob = 0.0;
  bool converged = false;  // final mean max probability >= 0.95
};

// Minimizes L = (1/N) sum_n ||decoder(u^n) - h_ideal^n||^2 over the
// selector logits and decoder weights; inputs are noisy grids, targets are
// ideal grids. Aborts with the epoch index if the loss goes non-finite.
template <typename S = float>
SelectorTrainResult<S> train_selector(const sim::ChannelDataset& dataset, int k,
                                      const AnnealSchedule& schedule,
                                      const DecoderSpec& decoder_spec,
                                      const SelectorTrainConfig& cfg) {
  schedule.validate();
  if (dataset.records.empty()) throw ValidationError("train_selector: dataset is empty");
  const int nf = dataset.header.nf, nn_slots = dataset.header.nn;
  const int d = nf * nn_slots;
  if (k < 1 || k > d) throw ValidationError("train_selector: requires 1 <= k <= d");
  const int N = static_cast<int>(dataset.records.size());
  const int batch = std::min(cfg.batch, N);

  // Materialize plane rows once.
  std::vector<S> X(std::size_t(N) * 2 * d), Y(std::size_t(N) * 2 * d);
  for (int n = 0; n < N; ++n) {
    const auto xr = grid_to_planes<S>(dataset.records[n].noisy);
    const auto yr = grid_to_planes<S>(dataset.records[n].ideal);
    std::copy(xr.begin(), xr.end(), X.begin() + std::size_t(n) * 2 * d);
    std::copy(yr.begin(), yr.end(), Y.begin() + std::size_t(n) * 2 * d);
  }

  Rng init_rng(mix64(cfg.seed, 0x73656c6563746f72ull));
  ConcreteSelectorLayer<S> selector(k, d, "selector");
  selector.init(init_rng);
  nn::Sequential<S> decoder = build_decoder<S>(k, d, decoder_spec, &init_rng);

  std::vector<nn::Param<S>*> params = selector.params();
  for (auto* p : decoder.params()) params.push_back(p);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::Adam<S> opt(params, adam_cfg);

  Rng train_rng(mix64(cfg.seed, 0x747261696e00ull));
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);

  SelectorTrainResult<S> result;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    selector.set_temperature(anneal(schedule, epoch));
    // Fisher-Yates over the visit order, seeded by the training stream.
    for (int i = N - 1; i > 0; --i) {
      const int j = static_cast<int>(train_rng.next_u64() % std::uint64_t(i + 1));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    int seen = 0;
    for (int start = 0; start < N; start += batch) {
      const int bs = std::min(batch, N - start);
      nn::Tensor<S> xb({bs, 2 * d}), yb({bs, 2 * d});
      for (int b = 0; b < bs; ++b) {
        const int n = order[start + b];
        std::copy_n(X.begin() + std::size_t(n) * 2 * d, 2 * d,
                    xb.data.begin() + std::size_t(b) * 2 * d);
        std::copy_n(Y.begin() + std::size_t(n) * 2 * d, 2 * d,
                    yb.data.begin() + std::size_t(b) * 2 * d);
      }
      opt.zero_grad();
      nn::Tensor<S> u = selector.forward(xb, true, train_rng);
      nn::Tensor<S> yhat = decoder.forward(u, true, train_rng);
      const double loss = nn::SumSquaredLoss<S>::value(yhat, yb);
      if (!std::isfinite(loss))
        throw RunError("train_selector: loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss * bs;
      seen += bs;
      nn::Tensor<S> dy = nn::SumSquaredLoss<S>::grad(yhat, yb);
      selector.backward(decoder.backward(dy));
      try {
        opt.step();
      } catch (const RunError& e) {
        throw RunError("train_selector: diverged at epoch " + std::to_string(epoch) +
                       " (" + e.what() + ")");
      }
    }
    const auto snap = selector.snapshot();
    result.history.epochs.push_back(EpochStats{epoch, loss_sum / seen,
                                               snap.mean_max_probability(),
                                               selector.temperature()});
  }

  selector.set_temperature(schedule.tb);
  result.selector = selector.snapshot();
  result.decoder = std::move(decoder);
  result.final_mean_max_prob = result.selector.mean_max_probability();
  result.converged = result.final_mean_max_prob >= 0.95;
  return result;
}

template <typename S = float>
struct DecoderTrainResult {
  nn::Sequential<S> decoder;
  TrainHistory history;
};

// Decoder-only reconstruction training against a fixed pilot pattern (the
// uniform-baseline counterpart of the selector stage): inputs are gathered
// noisy pilots, targets are ideal grids.
template <typename S = float>
DecoderTrainResult<S> train_decoder_supervised(const sim::ChannelDataset& dataset,
                                               const PilotPattern& pattern, int epochs,
                                               const DecoderSpec& decoder_spec,
                                               const SelectorTrainConfig& cfg) {
  if (dataset.records.empty())
    throw ValidationError("train_decoder_supervised: dataset is empty");
  pattern.validate();
  if (epochs < 1) throw ValidationError("train_decoder_supervised: epochs must be >= 1");
  const int nf = dataset.header.nf, nn_slots = dataset.header.nn;
  if (pattern.nf != nf || pattern.nn != nn_slots)
    throw ValidationError("train_decoder_supervised: pattern does not match dataset grid");
  const int k = pattern.k();
  const int d = nf * nn_slots;
  const int N = static_cast<int>(dataset.records.size());
  const int batch = std::min(cfg.batch, N);

  std::vector<S> U(std::size_t(N) * 2 * k), Y(std::size_t(N) * 2 * d);
  for (int n = 0; n < N; ++n) {
    const auto row = gather_row<S>(dataset.records[n].noisy, pattern);
    std::copy(row.begin(), row.end(), U.begin() + std::size_t(n) * 2 * k);
    const auto planes = grid_to_planes<S>(dataset.records[n].ideal);
    std::copy(planes.begin(), planes.end(), Y.begin() + std::size_t(n) * 2 * d);
  }

  Rng init_rng(mix64(cfg.seed, 0x6465636f64657200ull));
  DecoderTrainResult<S> result;
  result.decoder = build_decoder<S>(k, d, decoder_spec, &init_rng);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::Adam<S> opt(result.decoder.params(), adam_cfg);

  Rng train_rng(mix64(cfg.seed, 0x646563747261696eull));
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = N - 1; i > 0; --i) {
      const int j = static_cast<int>(train_rng.next_u64() % std::uint64_t(i + 1));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    int seen = 0;
    for (int start = 0; start < N; start += batch) {
      const int bs = std::min(batch, N - start);
      nn::Tensor<S> ub({bs, 2 * k}), yb({bs, 2 * d});
      for (int b = 0; b < bs; ++b) {
        const int n = order[start + b];
        std::copy_n(U.begin() + std::size_t(n) * 2 * k, 2 * k,
                    ub.data.begin() + std::size_t(b) * 2 * k);
        std::copy_n(Y.begin() + std::size_t(n) * 2 * d, 2 * d,
                    yb.data.begin() + std::size_t(b) * 2 * d);
      }
      opt.zero_grad();
      nn::Tensor<S> yhat = result.decoder.forward(ub, true, train_rng);
      const double loss = nn::SumSquaredLoss<S>::value(yhat, yb);
      if (!std::isfinite(loss))
        throw RunError("train_decoder_supervised: loss diverged at epoch " +
                       std::to_string(epoch));
      loss_sum += loss * bs;
      seen += bs;
      result.decoder.backward(nn::SumSquaredLoss<S>::grad(yhat, yb));
      try {
        opt.step();
      } catch (const RunError& e) {
        throw RunError("train_decoder_supervised: diverged at epoch " +
                       std::to_string(epoch) + " (" + e.what() + ")");
      }
    }
    result.history.epochs.push_back(EpochStats{epoch, loss_sum / seen, 0.0, 0.0});
  }
  return result;
}

}  // namespace pilots
}  // namespace pilotforge
