#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "pilotforge/channelnet.hpp"
#include "pilotforge/estimators.hpp"
#include "support/gradcheck.hpp"

using namespace pilotforge;
using namespace pilotforge::cnet;
namespace fs = std::filesystem;

namespace {

SrcnnSpec tiny_srcnn() {
  SrcnnSpec s;
  s.filters = {6, 4};
  s.kernels = {3, 1, 3};
  return s;
}

DncnnSpec tiny_dncnn() {
  DncnnSpec d;
  d.depth = 3;
  d.filters = 4;
  return d;
}

PipelineSpec tiny_pipeline(int epochs, double lr = 3e-3) {
  PipelineSpec s;
  s.srcnn = tiny_srcnn();
  s.dncnn = tiny_dncnn();
  s.decoder.hidden = {24, 24};
  s.decoder.dropout = 0.0;
  s.lr = lr;
  s.batch = 10;
  s.epochs = epochs;
  return s;
}

PilotPattern toy_pattern(int nf, int nn) {
  PilotPattern p;
  p.nf = nf;
  p.nn = nn;
  p.indices = {{0, 0}, {nf / 2, nn / 2}, {nf - 1, nn - 1}, {1, nn - 2}};
  return p;
}

}  // namespace

TEST_CASE("srcnn preserves spatial shape for any frame size") {
  Rng rng(1);
  for (auto [h, w] : {std::pair{8, 4}, {5, 7}, {12, 3}}) {
    auto net = build_srcnn<float>(SrcnnSpec{}, &rng);
    nn::Tensor<float> x({2, 2, h, w});
    for (auto& v : x.data) v = float(rng.uniform(-1, 1));
    const auto y = srcnn_forward(net, x, false, rng);
    CHECK(y.shape == x.shape);
  }
}

TEST_CASE("srcnn: zero input with zero biases maps to zero") {
  Rng rng(2);
  auto net = build_srcnn<float>(SrcnnSpec{}, &rng);  // biases init to zero
  nn::Tensor<float> x({1, 2, 6, 5});
  const auto y = srcnn_forward(net, x, false, rng);
  for (float v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("dncnn: zero residual branch is an exact identity") {
  Rng rng(3);
  auto branch = build_dncnn<float>(tiny_dncnn(), &rng);
  for (auto* p : branch.params())
    if (p->name.find("gamma") == std::string::npos &&
        p->name.find("running_var") == std::string::npos)
      std::fill(p->value.data.begin(), p->value.data.end(), 0.f);
  nn::Tensor<float> x({2, 2, 6, 4});
  for (auto& v : x.data) v = float(rng.uniform(-2, 2));
  const auto y = dncnn_forward(branch, x, false, rng);
  REQUIRE(y.shape == x.shape);
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("dncnn trained on noisy frames beats the identity baseline", "[slow]") {
  // toy denoising: clean flat frames + awgn, small residual net
  sim::ChannelProfile flat;
  flat.tap_delays_s = {0.0};
  flat.tap_powers_db = {0.0};
  flat.speed_mps = 0.0;
  const int nf = 8, nn = 4, N = 96;
  const auto ds = sim::generate_dataset(flat, N, {5.0f}, 77, 0, nf, nn);

  Rng init(11);
  auto branch = build_dncnn<float>(tiny_dncnn(), &init);
  nn::AdamConfig acfg;
  acfg.lr = 3e-3;
  nn::Adam<float> opt(branch.params(), acfg);
  Rng train(12);
  const int B = 16;
  for (int epoch = 0; epoch < 60; ++epoch) {
    for (int start = 0; start < N; start += B) {
      nn::Tensor<float> x({B, 2, nf, nn}), t({B, 2, nf, nn});
      for (int b = 0; b < B; ++b) {
        const auto xp = grid_to_planes<float>(ds.records[start + b].noisy);
        const auto tp = grid_to_planes<float>(ds.records[start + b].ideal);
        std::copy(xp.begin(), xp.end(), x.data.begin() + b * 2 * nf * nn);
        std::copy(tp.begin(), tp.end(), t.data.begin() + b * 2 * nf * nn);
      }
      opt.zero_grad();
      const auto y = dncnn_forward(branch, x, true, train);
      auto dy = nn::SumSquaredLoss<float>::grad(y, t);
      for (auto& v : dy.data) v = -v;  // y = x - branch(x)
      branch.backward(dy);
      opt.step();
    }
  }

  // held-out frames
  const auto held = sim::generate_dataset(flat, 32, {5.0f}, 991, 1000, nf, nn);
  double mse_in = 0, mse_out = 0;
  Rng rng(0);
  for (const auto& rec : held.records) {
    nn::Tensor<float> x({1, 2, nf, nn});
    const auto xp = grid_to_planes<float>(rec.noisy);
    std::copy(xp.begin(), xp.end(), x.data.begin());
    const auto y = dncnn_forward(branch, x, false, rng);
    const auto yg = planes_to_grid(std::vector<float>(y.data.begin(), y.data.end()), nf, nn);
    mse_in += mse(rec.noisy, rec.ideal).raw;
    mse_out += mse(yg, rec.ideal).raw;
  }
  INFO("identity " << mse_in << " denoised " << mse_out);
  CHECK(mse_out < mse_in);
}

TEST_CASE("mse: identical grids, zero estimate, constant offset") {
  ComplexGrid h(4, 3);
  Rng rng(9);
  for (auto& v : h.values) {
    const auto [a, b] = rng.normal_pair();
    v = std::complex<float>(float(a / std::sqrt(2)), float(b / std::sqrt(2)));
  }
  const auto zero_mse = mse(h, h);
  CHECK(zero_mse.raw == 0.0);
  CHECK(zero_mse.normalized == 0.0);

  ComplexGrid zero(4, 3);
  const auto z = mse(zero, h);
  CHECK(z.normalized == Catch::Approx(1.0).epsilon(1e-9));

  const double c = 0.75;
  ComplexGrid off = h;
  for (auto& v : off.values) v += std::complex<float>(float(c), 0.0f);
  CHECK(mse(off, h).raw == Catch::Approx(c * c).epsilon(1e-5));

  ComplexGrid wrong(3, 3);
  CHECK_THROWS_AS(mse(wrong, h), ValidationError);
}

TEST_CASE("end-to-end training requires a trained decoder") {
  const auto ds = sim::generate_dataset(sim::ChannelProfile::veha(), 10,
                                        {10.0f}, 3, 0, 8, 4);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  nn::Sequential<float> empty;
  CHECK_THROWS_WITH(train_end_to_end(ds, all, toy_pattern(8, 4), std::move(empty),
                                     tiny_pipeline(1), 1),
                    Catch::Matchers::ContainsSubstring("decoder"));
}

TEST_CASE("end-to-end training aborts on divergence with the epoch index") {
  const int nf = 8, nn = 4;
  const auto ds =
      sim::generate_dataset(sim::ChannelProfile::veha(), 10, {10.0f}, 5, 0, nf, nn);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(1);
  auto dec = pilots::build_decoder<float>(4, nf * nn, tiny_pipeline(1).decoder, &rng);
  CHECK_THROWS_WITH(train_end_to_end(ds, all, toy_pattern(nf, nn), std::move(dec),
                                     tiny_pipeline(3, 1e14), 1),
                    Catch::Matchers::ContainsSubstring("epoch"));
}

TEST_CASE("end-to-end memorizes a 10-sample set within 2000 epochs", "[slow]") {
  const int nf = 10, nn = 6;
  const auto ds =
      sim::generate_dataset(sim::ChannelProfile::veha(), 10, {15.0f}, 21, 0, nf, nn);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);

  PipelineSpec spec = tiny_pipeline(2000);
  Rng rng(2);
  auto dec = pilots::build_decoder<float>(4, nf * nn, spec.decoder, &rng);
  // pretraining is not the point here; the cascade must be able to memorize
  auto result =
      train_end_to_end(ds, all, toy_pattern(nf, nn), std::move(dec), spec, 7);

  const int d = nf * nn;
  double best = 1e9;
  int reached_at = -1;
  for (const auto& e : result.history.epochs) {
    best = std::min(best, e.loss / d);  // per-element raw MSE
    if (best < 1e-3 && reached_at < 0) reached_at = e.epoch;
  }
  INFO("best per-element train MSE " << best);
  CHECK(reached_at >= 0);
  CHECK(reached_at < 2000);
}

TEST_CASE("end-to-end loss is non-increasing over 5-epoch windows", "[slow]") {
  const int nf = 10, nn = 6;
  const auto ds = sim::generate_dataset(sim::ChannelProfile::veha(), 48,
                                        {10.0f, 20.0f}, 31, 0, nf, nn);
  std::vector<int> all(48);
  std::iota(all.begin(), all.end(), 0);
  PipelineSpec spec = tiny_pipeline(60, 1e-3);
  spec.batch = 16;
  Rng rng(3);
  auto dec = pilots::build_decoder<float>(4, nf * nn, spec.decoder, &rng);
  auto result =
      train_end_to_end(ds, all, toy_pattern(nf, nn), std::move(dec), spec, 9);

  const auto& ep = result.history.epochs;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w + 5 <= ep.size(); w += 5) {
    double avg = 0;
    for (int i = 0; i < 5; ++i) avg += ep[w + i].loss;
    avg /= 5;
    CHECK(avg <= prev);
    prev = avg;
  }
}

TEST_CASE("cascade gradient matches finite differences on a toy frame") {
  const int nf = 6, nn = 4, k = 3, B = 2;
  Rng rng(17);
  ChannelNetModel<double> model;
  model.nf = nf;
  model.nn_slots = nn;
  model.k = k;
  model.finetune_decoder = true;
  pilots::DecoderSpec dspec;
  dspec.hidden = {10};
  dspec.dropout = 0.1;
  model.decoder = pilots::build_decoder<double>(k, nf * nn, dspec, &rng);
  SrcnnSpec sspec = tiny_srcnn();
  DncnnSpec nspec = tiny_dncnn();
  model.srcnn = build_srcnn<double>(sspec, &rng);
  model.dncnn = build_dncnn<double>(nspec, &rng);

  nn::Tensor<double> u({B, 2 * k}), t({B, 2, nf, nn});
  for (auto& v : u.data) v = rng.uniform(-1, 1);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  const std::uint64_t noise_seed = 4242;

  auto eval_loss = [&] {
    Rng noise(noise_seed);
    return nn::SumSquaredLoss<double>::value(model.forward(u, true, noise), t);
  };
  auto params = model.all_params();
  auto compute = [&] {
    for (auto* p : params) p->value.zero_grad();
    Rng noise(noise_seed);
    const auto y = model.forward(u, true, noise);
    model.backward(nn::SumSquaredLoss<double>::grad(y, t));
  };
  const auto rep = testing::gradcheck_params<double>(params, eval_loss, compute);
  INFO("worst " << rep.worst_param << " a=" << rep.worst_analytic
                << " fd=" << rep.worst_fd << " over " << rep.checked);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradient flows into decoder, SRCNN and DnCNN parameters") {
  const int nf = 8, nn = 4, k = 4;
  Rng rng(4);
  ChannelNetModel<float> model;
  model.nf = nf;
  model.nn_slots = nn;
  model.k = k;
  model.finetune_decoder = true;
  PipelineSpec spec = tiny_pipeline(1);
  model.decoder = pilots::build_decoder<float>(k, nf * nn, spec.decoder, &rng);
  model.srcnn = build_srcnn<float>(spec.srcnn, &rng);
  model.dncnn = build_dncnn<float>(spec.dncnn, &rng);

  nn::Tensor<float> u({3, 2 * k});
  for (auto& v : u.data) v = float(rng.uniform(-1, 1));
  nn::Tensor<float> t({3, 2, nf, nn});
  for (auto& v : t.data) v = float(rng.uniform(-1, 1));

  const auto y = model.forward(u, true, rng);
  model.backward(nn::SumSquaredLoss<float>::grad(y, t));

  auto has_nonzero_grad = [](const std::vector<nn::Param<float>*>& params,
                             const std::string& prefix) {
    for (const auto* p : params) {
      if (p->name.rfind(prefix, 0) != 0 || !p->trainable) continue;
      for (float g : p->value.grad)
        if (g != 0.0f) return true;
    }
    return false;
  };
  const auto params = model.all_params();
  CHECK(has_nonzero_grad(params, "decoder."));
  CHECK(has_nonzero_grad(params, "srcnn."));
  CHECK(has_nonzero_grad(params, "dncnn."));
}

TEST_CASE("cascade preserves spatial shape for arbitrary frame sizes") {
  for (auto [nf, nn] : {std::pair{9, 5}, {16, 3}}) {
    Rng rng(6);
    ChannelNetModel<float> model;
    model.nf = nf;
    model.nn_slots = nn;
    model.k = 4;
    PipelineSpec spec = tiny_pipeline(1);
    model.decoder = pilots::build_decoder<float>(4, nf * nn, spec.decoder, &rng);
    model.srcnn = build_srcnn<float>(spec.srcnn, &rng);
    model.dncnn = build_dncnn<float>(spec.dncnn, &rng);
    nn::Tensor<float> u({2, 8});
    for (auto& v : u.data) v = float(rng.uniform(-1, 1));
    const auto y = model.forward(u, false, rng);
    CHECK(y.shape == std::vector<int>{2, 2, nf, nn});
  }
}

TEST_CASE("pipeline estimate: shape, purity and checkpoint round-trip") {
  const int nf = 8, nn = 4;
  const auto ds =
      sim::generate_dataset(sim::ChannelProfile::veha(), 12, {10.0f}, 31, 0, nf, nn);
  std::vector<int> all(12);
  std::iota(all.begin(), all.end(), 0);
  PipelineSpec spec = tiny_pipeline(2);
  Rng rng(5);
  auto dec = pilots::build_decoder<float>(4, nf * nn, spec.decoder, &rng);
  auto result =
      train_end_to_end(ds, all, toy_pattern(nf, nn), std::move(dec), spec, 9);

  const auto& probe = ds.records[0].noisy;
  const auto est1 = result.pipeline.estimate(probe);
  const auto est2 = result.pipeline.estimate(probe);
  CHECK(est1.nf == nf);
  CHECK(est1.nn == nn);
  CHECK(est1 == est2);

  ComplexGrid wrong(nf + 1, nn);
  CHECK_THROWS_AS(result.pipeline.estimate(wrong), ValidationError);

  const auto dir = fs::temp_directory_path() / "pilotforge_tests";
  fs::create_directories(dir);
  const auto path = dir / "pipe.pfck";
  save_pipeline(path, result.pipeline, {{"note", "test"}});
  auto loaded = load_pipeline(path, result.pipeline.pattern, spec);
  CHECK(loaded.estimate(probe) == est1);

  PilotPattern other = toy_pattern(nf, nn);
  other.indices[0] = {2, 2};
  CHECK_THROWS_WITH(load_pipeline(path, other, spec),
                    Catch::Matchers::ContainsSubstring("different pattern"));
}

TEST_CASE("same seed produces an identical end-to-end checkpoint") {
  const int nf = 8, nn = 4;
  const auto ds =
      sim::generate_dataset(sim::ChannelProfile::veha(), 16, {10.0f, 20.0f}, 41, 0, nf, nn);
  std::vector<int> all(16);
  std::iota(all.begin(), all.end(), 0);
  auto run = [&](std::uint64_t seed) {
    PipelineSpec spec = tiny_pipeline(3);
    Rng rng(8);
    auto dec = pilots::build_decoder<float>(4, nf * nn, spec.decoder, &rng);
    auto r = train_end_to_end(ds, all, toy_pattern(nf, nn), std::move(dec), spec, seed);
    std::vector<float> flat;
    for (auto* p : r.pipeline.model.all_params())
      flat.insert(flat.end(), p->value.data.begin(), p->value.data.end());
    return flat;
  };
  CHECK(run(123) == run(123));
  CHECK(run(123) != run(124));
}
