#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "pilotforge/channel.hpp"
#include "pilotforge/dataset.hpp"
#include "pilotforge/selector.hpp"
#include "support/gradcheck.hpp"

using namespace pilotforge;
using namespace pilotforge::pilots;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "pilotforge_tests";
  fs::create_directories(dir);
  return dir / name;
}

sim::ChannelDataset toy_dataset(int count, int nf, int nn, std::uint64_t seed,
                                std::vector<float> snrs = {10.0f}) {
  return sim::generate_dataset(sim::ChannelProfile::veha(), count, snrs, seed, 0, nf, nn);
}

// Cells drawn independently per record: reconstruction then hinges entirely
// on which cells the selector observes, so selection must sharpen.
sim::ChannelDataset iid_dataset(int n, int nf, int nn, std::uint64_t seed) {
  sim::ChannelDataset ds;
  ds.header.profile = sim::ChannelProfile::veha();
  ds.header.nf = nf;
  ds.header.nn = nn;
  ds.header.count = n;
  ds.header.snr_list_db = {0.0f};
  ds.header.seed = seed;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    sim::ChannelRecord r;
    r.ideal = ComplexGrid(nf, nn);
    for (auto& v : r.ideal.values) {
      const auto [a, b] = rng.normal_pair();
      v = std::complex<float>(float(a / std::sqrt(2)), float(b / std::sqrt(2)));
    }
    r.noisy = r.ideal;
    r.snr_db = 0.0f;
    ds.records.push_back(std::move(r));
  }
  return ds;
}
}  // namespace

TEST_CASE("pattern validation and file round-trip") {
  PilotPattern p;
  p.nf = 6;
  p.nn = 4;
  p.indices = {{0, 0}, {2, 3}, {5, 1}};
  p.validate();

  const auto path = temp_file("pattern.txt");
  save_pattern(path, p);
  const auto back = load_pattern(path);
  CHECK(back.nf == p.nf);
  CHECK(back.nn == p.nn);
  CHECK(back.indices == p.indices);
  CHECK(pattern_hash(back) == pattern_hash(p));

  p.indices.push_back({2, 3});
  CHECK_THROWS_WITH(p.validate(), Catch::Matchers::ContainsSubstring("duplicate"));
  p.indices.back() = {6, 0};
  CHECK_THROWS_WITH(p.validate(), Catch::Matchers::ContainsSubstring("out of bounds"));
}

TEST_CASE("load_pattern rejects malformed files") {
  const auto path = temp_file("bad_pattern.txt");
  std::ofstream(path, std::ios::trunc) << "1,2\n";
  CHECK_THROWS_WITH(load_pattern(path), Catch::Matchers::ContainsSubstring("header"));
  std::ofstream(path, std::ios::trunc) << "# grid 4x4 k=2\n1,2\nnonsense\n";
  CHECK_THROWS_AS(load_pattern(path), RunError);
  std::ofstream(path, std::ios::trunc) << "# grid 4x4 k=3\n1,2\n2,2\n";
  CHECK_THROWS_WITH(load_pattern(path), Catch::Matchers::ContainsSubstring("count"));
}

TEST_CASE("argmax_gather: values, scatter identity, bounds") {
  ComplexGrid g(4, 3);
  for (int i = 0; i < g.size(); ++i) g.values[i] = {float(i), float(-i)};
  PilotPattern p;
  p.nf = 4;
  p.nn = 3;
  p.indices = {{1, 2}, {3, 0}};
  const auto u = argmax_gather(g, p);
  CHECK(u[0][0] == 5.0f);
  CHECK(u[0][1] == -5.0f);
  CHECK(u[1][0] == 9.0f);
  CHECK(u[1][1] == -9.0f);

  // scatter back reproduces the grid at pattern locations exactly
  ComplexGrid scattered(4, 3);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto& [s, t] = p.indices[i];
    scattered.at(s, t) = {u[i][0], u[i][1]};
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto& [s, t] = p.indices[i];
    CHECK(scattered.at(s, t) == g.at(s, t));
  }

  ComplexGrid ones(4, 3);
  for (auto& v : ones.values) v = {1.0f, 0.0f};
  for (const auto& ui : argmax_gather(ones, p)) {
    CHECK(ui[0] == 1.0f);
    CHECK(ui[1] == 0.0f);
  }

  PilotPattern wrong = p;
  wrong.nf = 5;
  CHECK_THROWS_AS(argmax_gather(g, wrong), ValidationError);
}

TEST_CASE("extract_pattern picks per-row argmax locations") {
  ConcreteSelector<float> sel;
  sel.k = 3;
  sel.d = 8;
  sel.temperature = 0.01;
  sel.alpha = nn::Tensor<float>({3, 8});
  for (auto& a : sel.alpha.data) a = 0.01f;
  sel.alpha.data[0 * 8 + 5] = 1.0f;
  sel.alpha.data[1 * 8 + 0] = 1.0f;
  sel.alpha.data[2 * 8 + 6] = 1.0f;
  const auto p = extract_pattern(sel, 4, 2);
  REQUIRE(p.indices.size() == 3);
  CHECK(p.indices[0] == std::pair{2, 1});  // flat 5
  CHECK(p.indices[1] == std::pair{0, 0});  // flat 0
  CHECK(p.indices[2] == std::pair{3, 0});  // flat 6
}

TEST_CASE("extract_pattern resolves duplicate argmax by next-highest alpha") {
  ConcreteSelector<float> sel;
  sel.k = 2;
  sel.d = 6;
  sel.temperature = 0.01;
  sel.alpha = nn::Tensor<float>::from_vector(
      {2, 6}, {0.1f, 0.9f, 0.2f, 0.1f, 0.1f, 0.1f,
               0.1f, 0.9f, 0.1f, 0.6f, 0.1f, 0.1f});
  int collisions = 0;
  const auto p = extract_pattern(sel, 3, 2, &collisions);
  CHECK(collisions == 1);
  CHECK(p.indices[0] == std::pair{0, 1});  // flat 1
  CHECK(p.indices[1] == std::pair{1, 1});  // flat 3: next-highest after taken 1
}

TEST_CASE("extract_pattern always yields k distinct in-bounds indices") {
  Rng rng(2718);
  for (int trial = 0; trial < 200; ++trial) {
    const int nf = 2 + int(rng.next_u64() % 6);
    const int nn = 1 + int(rng.next_u64() % 5);
    const int d = nf * nn;
    const int k = 1 + int(rng.next_u64() % d);
    ConcreteSelector<float> sel;
    sel.k = k;
    sel.d = d;
    sel.temperature = 0.5;
    sel.alpha = nn::Tensor<float>({k, d});
    for (auto& a : sel.alpha.data) a = static_cast<float>(std::exp(rng.uniform(-2, 2)));
    const auto p = extract_pattern(sel, nf, nn);
    p.validate();  // distinct + in-bounds
    CHECK(p.k() == k);
  }
}

TEST_CASE("selector layer gradient matches finite differences with frozen noise") {
  const int k = 3, nf = 4, nn = 3, d = nf * nn, B = 4;
  Rng rng(55);
  ConcreteSelectorLayer<double> layer(k, d, "selector");
  layer.init(rng);
  layer.set_temperature(0.7);
  nn::Tensor<double> x({B, 2 * d});
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  nn::Tensor<double> c({B, 2 * k});
  for (auto& v : c.data) v = rng.uniform(-1, 1);
  const std::uint64_t noise_seed = 1234;

  auto eval_loss = [&] {
    Rng noise(noise_seed);
    const auto y = layer.forward(x, true, noise);
    double acc = 0;
    for (std::int64_t i = 0; i < y.size(); ++i) acc += y.data[i] * c.data[i];
    return acc;
  };
  auto compute = [&] {
    layer.log_alpha().value.zero_grad();
    Rng noise(noise_seed);
    layer.forward(x, true, noise);
    layer.backward(c);
  };
  const auto rep = testing::gradcheck_params<double>(layer.params(), eval_loss, compute);
  INFO("worst " << rep.worst_param << " a=" << rep.worst_analytic
                << " fd=" << rep.worst_fd);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("train_selector: same seed reproduces alpha bit for bit", "[slow]") {
  const int nf = 4, nn = 3, k = 3;
  const auto ds = toy_dataset(96, nf, nn, 11, {10.0f, 20.0f});
  AnnealSchedule schedule{10.0, 0.01, 20};
  DecoderSpec dec;
  dec.hidden = {24, 24};
  SelectorTrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch = 16;
  cfg.seed = 5;

  auto a = train_selector<float>(ds, k, schedule, dec, cfg);
  auto b = train_selector<float>(ds, k, schedule, dec, cfg);
  CHECK(a.selector.alpha.data == b.selector.alpha.data);  // bit-identical

  const auto p = extract_pattern(a.selector, nf, nn);
  p.validate();
  CHECK(p.k() == k);
}

TEST_CASE("train_selector: selection sharpens and stays sharp", "[slow]") {
  const int nf = 3, nn = 2;
  const auto ds = iid_dataset(256, nf, nn, 7);
  AnnealSchedule schedule{10.0, 0.01, 60};
  DecoderSpec dec;
  dec.hidden = {24};
  dec.dropout = 0.0;
  SelectorTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 32;
  cfg.seed = 5;

  const auto r = train_selector<float>(ds, 2, schedule, dec, cfg);
  REQUIRE(r.history.epochs.size() == 60);
  CHECK(r.final_mean_max_prob > 0.9);
  CHECK(r.converged);
  // discreteness diagnostic is non-decreasing through the last quarter
  const std::size_t q = r.history.epochs.size() - r.history.epochs.size() / 4;
  for (std::size_t e = q; e < r.history.epochs.size(); ++e)
    CHECK(r.history.epochs[e].mean_max_prob >=
          r.history.epochs[e - 1].mean_max_prob - 1e-6);
}

TEST_CASE("train_selector: k=d beats k<d on reconstruction loss", "[slow]") {
  const int nf = 3, nn = 2;
  const auto ds = toy_dataset(64, nf, nn, 21);
  AnnealSchedule schedule{10.0, 0.05, 50};
  DecoderSpec dec;
  dec.hidden = {24, 24};
  dec.dropout = 0.0;  // cleaner loss comparison
  SelectorTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 16;
  cfg.seed = 9;

  const auto full = train_selector<float>(ds, nf * nn, schedule, dec, cfg);
  const auto part = train_selector<float>(ds, 2, schedule, dec, cfg);
  CHECK(full.history.epochs.back().loss < part.history.epochs.back().loss);
}

TEST_CASE("train_selector aborts on divergence with the epoch index") {
  const auto ds = toy_dataset(16, 3, 2, 31);
  AnnealSchedule schedule{10.0, 0.01, 4};
  DecoderSpec dec;
  dec.hidden = {8};
  SelectorTrainConfig cfg;
  cfg.lr = 1e14;  // guaranteed blow-up
  cfg.batch = 8;
  cfg.seed = 1;
  CHECK_THROWS_WITH(train_selector<float>(ds, 2, schedule, dec, cfg),
                    Catch::Matchers::ContainsSubstring("epoch"));
}

TEST_CASE("train_decoder_supervised learns a fixed-pattern reconstruction") {
  const int nf = 3, nn = 2;
  const auto ds = toy_dataset(64, nf, nn, 41, {20.0f});
  PilotPattern p;
  p.nf = nf;
  p.nn = nn;
  p.indices = {{0, 0}, {2, 1}};
  DecoderSpec dec;
  dec.hidden = {24};
  dec.dropout = 0.0;
  SelectorTrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch = 16;
  cfg.seed = 3;
  auto r = train_decoder_supervised<float>(ds, p, 40, dec, cfg);
  REQUIRE(r.history.epochs.size() == 40);
  CHECK(r.history.epochs.back().loss < r.history.epochs.front().loss);
}
