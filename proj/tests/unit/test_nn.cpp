#include <doctest.h>

#include <cmath>
#include <random>

#include "hrd/nn.hpp"

using namespace hrd;
using namespace hrd::nn;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Tensor t(r, c);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = g(rng);
  return t;
}

MLPModel tiny(double dropout = 0.0) {
  Architecture a;
  a.input_width = 4;
  a.hidden = {3};
  a.output_width = 2;
  a.dropout = dropout;
  auto m = MLPModel::create(a, 17);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& b : m.hidden) {
    for (Eigen::Index k = 0; k < b.dense.bias.size(); ++k) {
      b.dense.bias[k] = u(rng);
      b.norm.gamma[k] = 1.0 + u(rng);
      b.norm.beta[k] = u(rng);
    }
  }
  return m;
}

double loss_of(const MLPModel& m, const Tensor& x, const Tensor& y) {
  return mse_loss(forward(m, x, Mode::train), y).value;
}

}  // namespace

TEST_CASE("backward matches central differences on a 4-3-2 network") {
  auto m = tiny();
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(6, 4, rng);
  const Tensor y = random_tensor(6, 2, rng);
  ForwardCache cache;
  const Tensor out = forward(m, x, Mode::train, nullptr, &cache);
  const auto grads = backward(m, cache, mse_loss(out, y).grad);
  const auto g = gradient_spans(grads);
  auto p = parameter_spans(m);
  REQUIRE(p.size() == g.size());
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    REQUIRE(p[s].size() == g[s].size());
    for (std::size_t k = 0; k < p[s].size(); ++k) {
      const double keep = p[s][k];
      p[s][k] = keep + h;
      const double up = loss_of(m, x, y);
      p[s][k] = keep - h;
      const double down = loss_of(m, x, y);
      p[s][k] = keep;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(numeric - g[s][k]) / std::max({std::abs(numeric), std::abs(g[s][k]), 1e-5}));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batchnorm normalizes with batch statistics and tracks running ones") {
  auto m = tiny();
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor(32, 4, rng);
  ForwardCache cache;
  (void)forward(m, x, Mode::train, nullptr, &cache);
  const Tensor& xhat = cache.blocks[0].xhat;
  for (Eigen::Index c = 0; c < xhat.cols(); ++c) {
    const double mean = xhat.col(c).mean();
    const double var = (xhat.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  const RowVector before = m.hidden[0].norm.running_mean;
  update_running_stats(m, cache);
  const RowVector expect = 0.9 * before + 0.1 * cache.blocks[0].batch_mean;
  CHECK((m.hidden[0].norm.running_mean - expect).norm() < 1e-12);
}

TEST_CASE("inverted dropout keeps the expected activation") {
  auto m = tiny(0.3);
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor(200, 4, rng);
  double sum = 0.0;
  std::size_t count = 0;
  std::size_t zeros = 0;
  for (int rep = 0; rep < 50; ++rep) {
    ForwardCache cache;
    (void)forward(m, x, Mode::train, &rng, &cache);
    const Tensor& mask = cache.blocks[0].mask;
    REQUIRE(mask.size() > 0);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      const double v = mask.data()[i];
      CHECK((v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-12));
      zeros += v == 0.0;
      sum += v;
      ++count;
    }
  }
  CHECK(sum / static_cast<double>(count) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(static_cast<double>(zeros) / static_cast<double>(count) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("infer mode is deterministic and ignores the dropout stream") {
  auto m = tiny(0.5);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(5, 4, rng);
  const Tensor a = forward(m, x, Mode::infer, &rng);
  const Tensor b = forward(m, x, Mode::infer);
  CHECK(a == b);
  CHECK_THROWS_AS(forward(m, random_tensor(5, 3, rng), Mode::infer), ShapeError);
}

TEST_CASE("mse loss value and gradient") {
  Tensor p(2, 2);
  p << 1, 2, 3, 4;
  const Tensor t = Tensor::Zero(2, 2);
  const auto l = mse_loss(p, t);
  CHECK(l.value == doctest::Approx(7.5));
  CHECK(l.grad(1, 1) == doctest::Approx(2.0));
  CHECK(mse_loss(t, t).value == 0.0);
  CHECK_THROWS_AS(mse_loss(p, Tensor::Zero(1, 2)), ShapeError);
}

TEST_CASE("adam step sizes") {
  std::vector<double> w{1.0, -2.0, 3.0};
  const std::vector<double> g{0.5, -4.0, 0.0};
  AdamState st;
  adam_step(st, {std::span<double>(w)}, {std::span<const double>(g)});
  CHECK(w[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.001).epsilon(1e-6));
  CHECK(w[2] == 3.0);
  for (int k = 0; k < 10; ++k) adam_step(st, {std::span<double>(w)}, {std::span<const double>(g)});
  CHECK(w[0] == doctest::Approx(1.0 - 0.011).epsilon(1e-6));
  CHECK(st.step == 11);

  const std::vector<double> bad{1.0, NAN, 0.0};
  const std::vector<double> keep = w;
  CHECK_THROWS_AS(adam_step(st, {std::span<double>(w)}, {std::span<const double>(bad)}), TrainingError);
  CHECK(w == keep);
}

TEST_CASE("fit reduces the loss and restores the best epoch") {
  Architecture a;
  a.input_width = 3;
  a.hidden = {16};
  a.output_width = 1;
  a.dropout = 0.0;
  auto m = MLPModel::create(a, 3);
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor(256, 3, rng);
  Tensor y(256, 1);
  for (Eigen::Index i = 0; i < 256; ++i) y(i, 0) = 0.5 * x(i, 0) - 0.25 * x(i, 1);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 60;
  cfg.patience = 10;
  cfg.adam.learning_rate = 0.01;
  const auto r = fit(m, x, y, x, y, cfg);
  REQUIRE(r.curve.size() >= 2);
  CHECK(r.best_val_mse < 0.5 * r.curve.front().val_mse);
  CHECK(evaluate_mse(m, x, y) == doctest::Approx(r.best_val_mse).epsilon(1e-9));

  auto m2 = MLPModel::create(a, 3);
  const auto r2 = fit(m2, x, y, x, y, cfg);
  CHECK(r2.best_val_mse == r.best_val_mse);
}
