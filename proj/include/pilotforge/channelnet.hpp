#pragma once

// End-to-end estimation cascade: gathered pilots -> decoder interpolation
// (H_LR) -> SRCNN refinement -> residual blind denoiser (DnCNN-B), trained
// jointly on mean squared reconstruction error against the ideal grid.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pilotforge/adam.hpp"
#include "pilotforge/checkpoint.hpp"
#include "pilotforge/common.hpp"
#include "pilotforge/dataset.hpp"
#include "pilotforge/grid.hpp"
#include "pilotforge/selector.hpp"

namespace pilotforge::cnet {

struct SrcnnSpec {
  std::vector<int> filters = {64, 32};  // hidden feature maps
  std::vector<int> kernels = {9, 1, 5};

  void validate() const {
    if (kernels.size() != filters.size() + 1)
      throw ValidationError("srcnn: need one more kernel than hidden filter count");
    for (int f : filters)
      if (f < 1) throw ValidationError("srcnn: filter counts must be positive");
  }
};

struct DncnnSpec {
  int depth = 8;
  int filters = 16;

  void validate() const {
    if (depth < 2) throw ValidationError("dncnn: depth must be >= 2");
    if (filters < 1) throw ValidationError("dncnn: filter count must be positive");
  }
};

// Fully convolutional super-resolution stack over 2-plane frames; spatial
// size is preserved by same-padding.
template <typename S = float>
nn::Sequential<S> build_srcnn(const SrcnnSpec& spec, Rng* init_rng) {
  spec.validate();
  nn::Sequential<S> net;
  int ch = 2;
  for (std::size_t i = 0; i < spec.kernels.size(); ++i) {
    const bool last = i + 1 == spec.kernels.size();
    const int out = last ? 2 : spec.filters[i];
    auto* conv = net.template add<nn::Conv2dLayer<S>>(ch, out, spec.kernels[i],
                                                      "srcnn.c" + std::to_string(i));
    if (init_rng) conv->init(*init_rng, last ? 1.0 : 0.0);
    if (!last) net.template add<nn::LeakyReluLayer<S>>(0.0);
    ch = out;
  }
  return net;
}

// Noise-prediction branch of the residual denoiser: conv+relu, then
// (depth-2) conv+BN+relu blocks, then a linear conv back to 2 planes.
template <typename S = float>
nn::Sequential<S> build_dncnn(const DncnnSpec& spec, Rng* init_rng) {
  spec.validate();
  nn::Sequential<S> net;
  auto* first = net.template add<nn::Conv2dLayer<S>>(2, spec.filters, 3, "dncnn.c0");
  if (init_rng) first->init(*init_rng, 0.0);
  net.template add<nn::LeakyReluLayer<S>>(0.0);
  for (int i = 1; i + 1 < spec.depth; ++i) {
    auto* conv = net.template add<nn::Conv2dLayer<S>>(spec.filters, spec.filters, 3,
                                                      "dncnn.c" + std::to_string(i));
    if (init_rng) conv->init(*init_rng, 0.0);
    net.template add<nn::BatchNormLayer<S>>(spec.filters,
                                            "dncnn.bn" + std::to_string(i));
    net.template add<nn::LeakyReluLayer<S>>(0.0);
  }
  auto* lastc = net.template add<nn::Conv2dLayer<S>>(
      spec.filters, 2, 3, "dncnn.c" + std::to_string(spec.depth - 1));
  if (init_rng) lastc->init(*init_rng, 1.0);
  return net;
}

// output = input - predicted_noise(input).
template <typename S>
nn::Tensor<S> dncnn_forward(nn::Sequential<S>& branch, const nn::Tensor<S>& x,
                            bool training, Rng& rng) {
  nn::Tensor<S> residual = branch.forward(x, training, rng);
  nn::require_shape(residual, x.shape, "dncnn residual");
  nn::Tensor<S> y = x;
  for (std::int64_t i = 0; i < y.size(); ++i) y.data[i] -= residual.data[i];
  return y;
}

template <typename S = float>
nn::Tensor<S> srcnn_forward(nn::Sequential<S>& srcnn, const nn::Tensor<S>& x,
                            bool training, Rng& rng) {
  if (x.shape.size() != 4 || x.shape[1] != 2)
    throw ValidationError("srcnn: expected [B,2,H,W] input, got " +
                          nn::shape_string(x.shape));
  nn::Tensor<S> y = srcnn.forward(x, training, rng);
  nn::require_shape(y, x.shape, "srcnn output");
  return y;
}

// The trainable cascade. The decoder consumes [B,2k] gathered pilot rows;
// its [B,2d] output is viewed as [B,2,nf,nn] (identical memory layout) for
// the convolutional stages.
template <typename S = float>
struct ChannelNetModel {
  int nf = 0, nn_slots = 0, k = 0;
  nn::Sequential<S> decoder;
  nn::Sequential<S> srcnn;
  nn::Sequential<S> dncnn;
  bool finetune_decoder = true;

  nn::Tensor<S> forward(const nn::Tensor<S>& u, bool training, Rng& rng) {
    const int B = u.shape[0];
    nn::Tensor<S> lr = decoder.forward(u, training, rng);
    nn::require_shape(lr, {B, 2 * nf * nn_slots}, "decoder output");
    lr.shape = {B, 2, nf, nn_slots};
    nn::Tensor<S> sr = srcnn_forward(srcnn, lr, training, rng);
    return dncnn_forward(dncnn, sr, training, rng);
  }

  void backward(const nn::Tensor<S>& grad_out) {
    // y = s - branch(s), so the branch output sees -dy and
    // ds = dy + branch_backward(-dy).
    nn::Tensor<S> neg = grad_out;
    for (auto& v : neg.data) v = -v;
    nn::Tensor<S> dbranch = dncnn.backward(neg);
    nn::Tensor<S> ds = grad_out;
    for (std::int64_t i = 0; i < ds.size(); ++i) ds.data[i] += dbranch.data[i];
    nn::Tensor<S> dlr = srcnn.backward(ds);
    dlr.shape = {dlr.shape[0], 2 * nf * nn_slots};
    if (finetune_decoder) decoder.backward(dlr);
  }

  std::vector<nn::Param<S>*> params() {
    std::vector<nn::Param<S>*> out;
    if (finetune_decoder)
      for (auto* p : decoder.params()) out.push_back(p);
    for (auto* p : srcnn.params()) out.push_back(p);
    for (auto* p : dncnn.params()) out.push_back(p);
    return out;
  }

  std::vector<nn::Param<S>*> all_params() {
    std::vector<nn::Param<S>*> out;
    for (auto* p : decoder.params()) out.push_back(p);
    for (auto* p : srcnn.params()) out.push_back(p);
    for (auto* p : dncnn.params()) out.push_back(p);
    return out;
  }
};

struct PipelineSpec {
  SrcnnSpec srcnn;
  DncnnSpec dncnn;
  pilots::DecoderSpec decoder;
  bool finetune_decoder = true;
  double lr = 1e-3;
  int batch = 32;
  int epochs = 150;
};

// Frozen inference bundle.
struct EstimatorPipeline {
  int nf = 0, nn_slots = 0;
  PilotPattern pattern;
  PipelineSpec spec;
  ChannelNetModel<float> model;

  ComplexGrid estimate(const ComplexGrid& noisy) {
    if (noisy.nf != nf || noisy.nn != nn_slots)
      throw ValidationError("estimate: grid does not match the pipeline frame size");
    const auto row = pilots::gather_row<float>(noisy, pattern);
    nn::Tensor<float> u = nn::Tensor<float>::from_vector(
        {1, static_cast<int>(row.size())}, row);
    Rng rng(0);  // inference consumes no randomness
    nn::Tensor<float> y = model.forward(u, false, rng);
    std::vector<float> planes(y.data.begin(), y.data.end());
    return planes_to_grid(planes, nf, nn_slots);
  }
};

// raw = mean |est - ideal|^2 per element; normalized = raw / mean |ideal|^2.
struct MseResult {
  double raw = 0.0;
  double normalized = 0.0;
};

inline MseResult mse(const ComplexGrid& estimate, const ComplexGrid& ideal) {
  if (estimate.nf != ideal.nf || estimate.nn != ideal.nn)
    throw ValidationError("mse: grid shapes differ");
  double err = 0.0, pow = 0.0;
  for (std::size_t i = 0; i < ideal.values.size(); ++i) {
    err += std::norm(std::complex<double>(estimate.values[i]) -
                     std::complex<double>(ideal.values[i]));
    pow += std::norm(std::complex<double>(ideal.values[i]));
  }
  err /= double(ideal.values.size());
  pow /= double(ideal.values.size());
  MseResult r;
  r.raw = err;
  r.normalized = pow > 0.0 ? err / pow : err;
  return r;
}

struct EndToEndResult {
  EstimatorPipeline pipeline;
  pilots::TrainHistory history;
};

// Joint training of (optionally) decoder, SRCNN and DnCNN-B on
// L = (1/N) sum_n ||f_R(f_S(H_LR^n)) - H_ideal^n||^2. One network serves
// every SNR present in the record set.
inline EndToEndResult train_end_to_end(const sim::ChannelDataset& dataset,
                                       const std::vector<int>& record_subset,
                                       const PilotPattern& pattern,
                                       nn::Sequential<float>&& trained_decoder,
                                       const PipelineSpec& spec, std::uint64_t seed) {
  if (trained_decoder.empty())
    throw ValidationError("train_end_to_end: missing trained decoder for this pattern");
  pattern.validate();
  const int nf = dataset.header.nf, nn_slots = dataset.header.nn;
  if (pattern.nf != nf || pattern.nn != nn_slots)
    throw ValidationError("train_end_to_end: pattern grid does not match dataset");
  std::vector<int> subset = record_subset;
  if (subset.empty()) throw ValidationError("train_end_to_end: empty record subset");
  for (int idx : subset)
    if (idx < 0 || idx >= int(dataset.records.size()))
      throw ValidationError("train_end_to_end: record index out of range");

  const int k = pattern.k();
  const int d = nf * nn_slots;
  const int N = static_cast<int>(subset.size());
  const int batch = std::min(spec.batch, N);

  EndToEndResult result;
  EstimatorPipeline& pipe = result.pipeline;
  pipe.nf = nf;
  pipe.nn_slots = nn_slots;
  pipe.pattern = pattern;
  pipe.spec = spec;
  ChannelNetModel<float>& model = pipe.model;
  model.nf = nf;
  model.nn_slots = nn_slots;
  model.k = k;
  model.finetune_decoder = spec.finetune_decoder;
  Rng init_rng(mix64(seed, 0x636e657400ull));
  model.decoder = std::move(trained_decoder);
  model.srcnn = build_srcnn<float>(spec.srcnn, &init_rng);
  model.dncnn = build_dncnn<float>(spec.dncnn, &init_rng);

  // Gathered pilot rows and ideal-plane targets, materialized once.
  std::vector<float> U(std::size_t(N) * 2 * k), Y(std::size_t(N) * 2 * d);
  for (int n = 0; n < N; ++n) {
    const auto& rec = dataset.records[subset[n]];
    const auto row = pilots::gather_row<float>(rec.noisy, pattern);
    std::copy(row.begin(), row.end(), U.begin() + std::size_t(n) * 2 * k);
    const auto planes = grid_to_planes<float>(rec.ideal);
    std::copy(planes.begin(), planes.end(), Y.begin() + std::size_t(n) * 2 * d);
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = spec.lr;
  nn::Adam<float> opt(model.params(), adam_cfg);
  Rng train_rng(mix64(seed, 0x6532653274726eull));
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (int i = N - 1; i > 0; --i) {
      const int j = static_cast<int>(train_rng.next_u64() % std::uint64_t(i + 1));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    int seen = 0;
    for (int start = 0; start < N; start += batch) {
      const int bs = std::min(batch, N - start);
      nn::Tensor<float> ub({bs, 2 * k});
      nn::Tensor<float> yb({bs, 2, nf, nn_slots});
      for (int b = 0; b < bs; ++b) {
        const int n = order[start + b];
        std::copy_n(U.begin() + std::size_t(n) * 2 * k, 2 * k,
                    ub.data.begin() + std::size_t(b) * 2 * k);
        std::copy_n(Y.begin() + std::size_t(n) * 2 * d, 2 * d,
                    yb.data.begin() + std::size_t(b) * 2 * d);
      }
      opt.zero_grad();
      nn::Tensor<float> yhat = model.forward(ub, true, train_rng);
      const double loss = nn::SumSquaredLoss<float>::value(yhat, yb);
      if (!std::isfinite(loss))
        throw RunError("train_end_to_end: loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss * bs;
      seen += bs;
      model.backward(nn::SumSquaredLoss<float>::grad(yhat, yb));
      try {
        opt.step();
      } catch (const RunError& e) {
        throw RunError("train_end_to_end: diverged at epoch " + std::to_string(epoch) +
                       " (" + e.what() + ")");
      }
    }
    result.history.epochs.push_back(
        pilots::EpochStats{epoch, loss_sum / seen, 0.0, 0.0});
  }
  return result;
}

// Pipeline checkpoints bundle decoder/SRCNN/DnCNN parameter sections and
// the pattern hash in one nn-core checkpoint file.
inline void save_pipeline(const std::filesystem::path& path, EstimatorPipeline& pipe,
                          std::map<std::string, std::string> extra_meta = {}) {
  auto params = pipe.model.all_params();
  std::map<std::string, std::string> meta = std::move(extra_meta);
  meta["kind"] = "pipeline";
  meta["nf"] = std::to_string(pipe.nf);
  meta["nn"] = std::to_string(pipe.nn_slots);
  meta["np"] = std::to_string(pipe.pattern.k());
  meta["pattern_crc"] = std::to_string(pattern_hash(pipe.pattern));
  meta["srcnn_kernels"] = std::to_string(pipe.spec.srcnn.kernels.size());
  meta["dncnn_depth"] = std::to_string(pipe.spec.dncnn.depth);
  meta["dncnn_filters"] = std::to_string(pipe.spec.dncnn.filters);
  save_checkpoint(path, nn::named_params(params), meta);
}

// Rebuilds a pipeline from a checkpoint; architecture hyperparameters come
// from the caller's spec, which must match the stored manifest.
inline EstimatorPipeline load_pipeline(const std::filesystem::path& path,
                                       const PilotPattern& pattern,
                                       const PipelineSpec& spec) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.meta_at("kind") != "pipeline")
    throw RunError("not a pipeline checkpoint: " + path.string());
  if (std::stoul(ck.meta_at("pattern_crc")) != pattern_hash(pattern))
    throw RunError("pipeline checkpoint was trained for a different pattern: " +
                   path.string());
  EstimatorPipeline pipe;
  pipe.nf = std::stoi(ck.meta_at("nf"));
  pipe.nn_slots = std::stoi(ck.meta_at("nn"));
  pipe.pattern = pattern;
  pipe.spec = spec;
  pipe.model.nf = pipe.nf;
  pipe.model.nn_slots = pipe.nn_slots;
  pipe.model.k = pattern.k();
  pipe.model.finetune_decoder = spec.finetune_decoder;
  pipe.model.decoder = pilots::build_decoder<float>(pattern.k(), pipe.nf * pipe.nn_slots,
                                                    spec.decoder, nullptr);
  pipe.model.srcnn = build_srcnn<float>(spec.srcnn, nullptr);
  pipe.model.dncnn = build_dncnn<float>(spec.dncnn, nullptr);
  nn::restore_params(ck, pipe.model.all_params());
  return pipe;
}

}  // namespace pilotforge::cnet
