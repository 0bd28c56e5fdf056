#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pilotforge/adam.hpp"
#include "pilotforge/layers.hpp"
#include "pilotforge/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace pilotforge;
using nn::Tensor;

namespace {

// L = sum(c .* y) makes the seed gradient exactly c.
template <typename S>
double weighted_sum(const Tensor<S>& y, const Tensor<S>& c) {
  double acc = 0;
  for (std::int64_t i = 0; i < y.size(); ++i) acc += double(y.data[i]) * double(c.data[i]);
  return acc;
}

template <typename S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-scale, scale));
  return t;
}

// Full layer gradient check (params and input) against central differences.
// Noise inside the layer (dropout) is frozen by reseeding per evaluation.
template <typename S, typename MakeLayer>
void check_layer(MakeLayer make, const std::vector<int>& in_shape, std::uint64_t seed,
                 double tol) {
  Rng rng(seed);
  auto layer = make(rng);
  Tensor<S> x = random_tensor<S>(in_shape, rng);
  const std::uint64_t noise_seed = rng.next_u64();

  Tensor<S> probe;
  {
    Rng noise(noise_seed);
    probe = layer->forward(x, true, noise);
  }
  Tensor<S> c = random_tensor<S>(probe.shape, rng);

  auto eval_loss = [&]() {
    Rng noise(noise_seed);
    return weighted_sum(layer->forward(x, true, noise), c);
  };

  Tensor<S> dx;
  auto compute = [&]() {
    for (auto* p : layer->params()) p->value.zero_grad();
    Rng noise(noise_seed);
    Tensor<S> y = layer->forward(x, true, noise);
    dx = layer->backward(c);
  };

  auto rep = testing::gradcheck_params<S>(layer->params(), eval_loss, compute);
  INFO("param gradcheck worst: " << rep.worst_param << " analytic=" << rep.worst_analytic
                                 << " fd=" << rep.worst_fd);
  CHECK(rep.max_rel_err < tol);

  // Input gradient, same oracle.
  compute();
  double max_err = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const S saved = x.data[i];
    const double h = 1e-4;
    x.data[i] = static_cast<S>(double(saved) + h);
    const double lp = eval_loss();
    x.data[i] = static_cast<S>(double(saved) - h);
    const double lm = eval_loss();
    x.data[i] = saved;
    max_err = std::max(max_err, testing::rel_err(double(dx.data[i]), (lp - lm) / (2 * h)));
  }
  CHECK(max_err < tol);
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3});
  REQUIRE(t.size() == 6);
  CHECK_THROWS_AS(Tensor<float>({2, 0}), ValidationError);
  CHECK_THROWS_AS(Tensor<float>::from_vector({2, 2}, {1.f, 2.f, 3.f}), ValidationError);
  t.ensure_grad();
  REQUIRE(t.grad.size() == t.data.size());
}

TEST_CASE("dense identity weight passes input through") {
  Rng rng(7);
  nn::DenseLayer<float> dense(4, 4, "t");
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) dense.weight().value.data[i * 4 + j] = i == j ? 1.f : 0.f;
  Tensor<float> x = random_tensor<float>({3, 4}, rng);
  Tensor<float> y = dense.forward(x, false, rng);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("leaky_relu applies the negative slope") {
  Rng rng(1);
  nn::LeakyReluLayer<float> act(0.2);
  Tensor<float> x = Tensor<float>::from_vector({1, 2}, {-1.f, 2.f});
  Tensor<float> y = act.forward(x, false, rng);
  CHECK(y.data[0] == Catch::Approx(-0.2f));
  CHECK(y.data[1] == Catch::Approx(2.0f));
}

TEST_CASE("conv2d zero kernel annihilates any input") {
  Rng rng(2);
  nn::Conv2dLayer<float> conv(2, 3, 3, "t");
  Tensor<float> x = random_tensor<float>({2, 2, 5, 4}, rng);
  Tensor<float> y = conv.forward(x, false, rng);
  REQUIRE(y.shape == std::vector<int>{2, 3, 5, 4});
  for (float v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d kernel must be odd") {
  CHECK_THROWS_AS(nn::LayerSpec::conv2d(1, 1, 4).validate(), ValidationError);
  CHECK_THROWS_AS(nn::LayerSpec::dropout(1.0).validate(), ValidationError);
}

TEST_CASE("backward of a linear map returns the fixed input") {
  // loss = sum(w .* x) => dL/dw = x
  Rng rng(3);
  nn::DenseLayer<double> dense(5, 1, "t");
  std::fill(dense.bias().value.data.begin(), dense.bias().value.data.end(), 0.0);
  Tensor<double> x = random_tensor<double>({1, 5}, rng);
  Tensor<double> y = dense.forward(x, true, rng);
  Tensor<double> seed = Tensor<double>::from_vector({1, 1}, {1.0});
  dense.backward(seed);
  for (int j = 0; j < 5; ++j)
    CHECK(dense.weight().value.grad[j] == Catch::Approx(x.data[j]));
}

TEST_CASE("constant loss produces zero gradients") {
  Rng rng(4);
  nn::DenseLayer<double> dense(3, 2, "t");
  Tensor<double> x = random_tensor<double>({2, 3}, rng);
  dense.forward(x, true, rng);
  Tensor<double> zero_seed({2, 2});
  dense.backward(zero_seed);
  for (double g : dense.weight().value.grad) CHECK(g == 0.0);
  for (double g : dense.bias().value.grad) CHECK(g == 0.0);
}

TEST_CASE("backward without a recorded forward is a usage error") {
  Rng rng(5);
  nn::DenseLayer<float> dense(2, 2, "t");
  Tensor<float> dy({1, 2});
  CHECK_THROWS_AS(dense.backward(dy), RunError);
  Tensor<float> x({1, 2});
  dense.forward(x, false, rng);  // inference records no graph
  CHECK_THROWS_AS(dense.backward(dy), RunError);
}

TEST_CASE("gradient check: every layer kind vs central differences, 100 seeds") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng shapes(mix64(seed, 99));
    const int B = 1 + int(shapes.next_u64() % 3);
    const int H = 2 + int(shapes.next_u64() % 4);
    const int W = 2 + int(shapes.next_u64() % 4);
    const int C = 1 + int(shapes.next_u64() % 3);
    const int F = 1 + int(shapes.next_u64() % 3);
    const int in = 2 + int(shapes.next_u64() % 5);
    const int out = 1 + int(shapes.next_u64() % 5);

    check_layer<double>(
        [&](Rng& r) {
          auto l = std::make_unique<nn::DenseLayer<double>>(in, out, "d");
          l->init(r, 0.2);
          return l;
        },
        {B, in}, seed, 1e-3);

    check_layer<double>(
        [&](Rng& r) {
          auto l = std::make_unique<nn::Conv2dLayer<double>>(C, F, 3, "c");
          l->init(r, 0.0);
          return l;
        },
        {B, C, H, W}, seed, 1e-3);

    check_layer<double>(
        [&](Rng&) { return std::make_unique<nn::LeakyReluLayer<double>>(0.2); },
        {B, in}, seed, 1e-3);

    check_layer<double>(
        [&](Rng&) { return std::make_unique<nn::DropoutLayer<double>>(0.3); },
        {B, in}, seed, 1e-3);

    check_layer<double>(
        [&](Rng&) { return std::make_unique<nn::BatchNormLayer<double>>(C, "bn"); },
        {B, C, H, W}, seed, 1e-3);
  }
}

TEST_CASE("dropout with training=false is an exact identity") {
  Rng rng(11);
  nn::DropoutLayer<float> drop(0.4);
  Tensor<float> x = random_tensor<float>({4, 7}, rng);
  Tensor<float> y = drop.forward(x, false, rng);
  REQUIRE(y.data == x.data);
}

TEST_CASE("forward is deterministic given seed, inputs and params") {
  auto run = [](std::uint64_t seed) {
    Rng init(seed);
    nn::Sequential<float> net;
    auto* dn = net.add<nn::DenseLayer<float>>(6, 5, "d0");
    dn->init(init, 0.2);
    net.add<nn::LeakyReluLayer<float>>(0.2);
    net.add<nn::DropoutLayer<float>>(0.2);
    Rng data(seed + 1);
    Tensor<float> x = random_tensor<float>({3, 6}, data);
    Rng fwd(seed + 2);
    return net.forward(x, true, fwd).data;
  };
  CHECK(run(42) == run(42));
  CHECK(run(42) != run(43));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, step count advances") {
  nn::Param<float> p{"w", Tensor<float>::from_vector({2}, {1.f, -2.f})};
  p.value.ensure_grad();
  nn::Adam<float> opt({&p}, {});
  opt.step();
  CHECK(opt.step_count() == 1);
  CHECK(testing::same_values(p.value.data, std::vector<float>{1.f, -2.f}));
}

TEST_CASE("adam: constant gradient moves parameter against its sign") {
  nn::Param<float> p{"w", Tensor<float>::from_vector({1}, {0.f})};
  p.value.ensure_grad();
  nn::Adam<float> opt({&p}, {});
  for (int i = 0; i < 50; ++i) {
    p.value.grad[0] = 3.0f;  // positive gradient
    opt.step();
  }
  CHECK(p.value.data[0] < 0.0f);
}

TEST_CASE("adam: quadratic bowl converges, matching the scalar recursion oracle") {
  // Oracle: the textbook recursion run independently on f(w) = w^2.
  double ow = 1.0, om = 0.0, ov = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> oracle_track;
  for (int t = 1; t <= 200; ++t) {
    const double g = 2.0 * ow;
    om = b1 * om + (1 - b1) * g;
    ov = b2 * ov + (1 - b2) * g * g;
    const double mhat = om / (1 - std::pow(b1, t));
    const double vhat = ov / (1 - std::pow(b2, t));
    ow -= lr * mhat / (std::sqrt(vhat) + eps);
    oracle_track.push_back(ow);
  }
  REQUIRE(std::abs(ow) < 0.05);

  nn::Param<double> p{"w", Tensor<double>::from_vector({1}, {1.0})};
  p.value.ensure_grad();
  nn::AdamConfig cfg;
  cfg.lr = lr;
  nn::Adam<double> opt({&p}, cfg);
  for (int t = 0; t < 200; ++t) {
    p.value.grad[0] = 2.0 * p.value.data[0];
    opt.step();
    CHECK(p.value.data[0] == Catch::Approx(oracle_track[t]).margin(1e-12));
  }
  CHECK(std::abs(p.value.data[0]) < 0.05);
}

TEST_CASE("adam: non-finite gradient raises an error naming the parameter") {
  nn::Param<float> p{"decoder.d0.weight", Tensor<float>::from_vector({1}, {0.f})};
  p.value.ensure_grad();
  nn::Adam<float> opt({&p}, {});
  p.value.grad[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH(opt.step(), Catch::Matchers::ContainsSubstring("decoder.d0.weight"));
}
