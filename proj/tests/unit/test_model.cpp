#include <cmath>
#include <vector>

#include "doctest.h"
#include "otafl/data.hpp"
#include "otafl/model.hpp"
#include "otafl/rng.hpp"
#include "support/oracles.hpp"

namespace data = otafl::data;
namespace model = otafl::model;
using otafl::RngStream;

namespace {

data::Dataset small_dataset(std::size_t n, std::size_t d, int classes,
                            std::uint64_t seed) {
  return data::synth_classify(n, d, classes, 0.15, seed);
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("loss at zero weights is log of the class count") {
  // With w = 0 every class gets probability 1/C, so the cross entropy is
  // ln C regardless of the data.
  const data::Dataset d10 = small_dataset(40, 5, 10, 3);
  const std::vector<double> w(model::param_dim(d10), 0.0);
  CHECK(model::loss(w, d10, 0.0) ==
        doctest::Approx(2.302585092994046).epsilon(1e-12));

  const data::Dataset d3 = small_dataset(30, 4, 3, 4);
  const std::vector<double> w3(model::param_dim(d3), 0.0);
  CHECK(model::loss(w3, d3, 0.0) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("l2 penalty adds half lambda times the squared norm") {
  const data::Dataset d = small_dataset(20, 4, 3, 5);
  std::vector<double> w(model::param_dim(d));
  RngStream rng(6);
  double ss = 0.0;
  for (auto& v : w) {
    v = rng.next_normal() * 0.1;
    ss += v * v;
  }
  const double plain = model::loss(w, d, 0.0);
  const double ridged = model::loss(w, d, 0.8);
  CHECK(ridged - plain == doctest::Approx(0.4 * ss).epsilon(1e-10));
}

TEST_CASE("stochastic gradient matches central differences") {
  const data::Dataset d = small_dataset(25, 6, 4, 7);
  const std::size_t p = model::param_dim(d);
  const auto batch = all_rows(d.size());
  const double lambda = 0.3;

  RngStream rng(11);
  for (int probe = 0; probe < 20; ++probe) {
    std::vector<double> w(p);
    for (auto& v : w) v = rng.next_normal() * 0.5;

    std::vector<double> grad(p);
    model::stochastic_gradient(w, d, batch, lambda, grad);

    const auto fd = oracles::central_difference(
        [&](std::span<const double> x) { return model::loss(x, d, lambda); },
        w, 1e-6);

    double worst = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double rel =
          std::abs(grad[i] - fd[i]) / std::max(1.0, std::abs(grad[i]));
      worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  const data::Dataset d = small_dataset(12, 3, 3, 8);
  const std::size_t p = model::param_dim(d);
  std::vector<double> w(p);
  RngStream rng(9);
  for (auto& v : w) v = rng.next_normal() * 0.3;

  const std::vector<std::size_t> batch = {2, 5, 7, 11};
  std::vector<double> grad(p);
  model::stochastic_gradient(w, d, batch, 0.0, grad);

  std::vector<double> acc(p, 0.0);
  std::vector<double> single(p);
  for (const std::size_t idx : batch) {
    const std::size_t one[1] = {idx};
    model::stochastic_gradient(w, d, one, 0.0, single);
    for (std::size_t i = 0; i < p; ++i) acc[i] += single[i];
  }
  for (std::size_t i = 0; i < p; ++i) {
    CHECK(grad[i] == doctest::Approx(acc[i] / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("gradient rejects out-of-range batch indices") {
  const data::Dataset d = small_dataset(10, 3, 3, 10);
  std::vector<double> w(model::param_dim(d), 0.0);
  std::vector<double> grad(w.size());
  const std::vector<std::size_t> bad = {0, 10};
  CHECK_THROWS_AS(model::stochastic_gradient(w, d, bad, 0.0, grad),
                  std::out_of_range);
}

TEST_CASE("accuracy uses strict argmax with lowest-index ties") {
  data::Dataset d;
  d.dim = 2;  // one feature + bias
  d.num_classes = 3;
  d.features = {1.0, 1.0, 2.0, 1.0};
  d.labels = {0, 1};

  // All-zero weights: every logit ties at 0, argmax resolves to class 0.
  std::vector<double> w(6, 0.0);
  CHECK(model::accuracy(w, d) == doctest::Approx(0.5));

  // Class 1 wins on the second sample only.
  w = {0.0, 0.0, 1.0, -1.5, 0.0, 0.0};
  CHECK(model::accuracy(w, d) == doctest::Approx(1.0));
}

TEST_CASE("full-batch updates leave the rng untouched") {
  const data::Dataset d = small_dataset(8, 3, 3, 12);
  model::LocalSgdConfig cfg;
  cfg.steps = 3;
  cfg.batch = 16;  // larger than the shard: deterministic full batch
  cfg.eta = 0.05;

  std::vector<double> w0(model::param_dim(d), 0.0);
  RngStream used(77);
  const auto m = model::local_sgd(w0, d, cfg, used);
  RngStream fresh(77);
  CHECK(used.next_u64() == fresh.next_u64());

  // And the result equals three explicit full-batch steps.
  std::vector<double> w(w0);
  std::vector<double> g(w.size());
  const auto batch = all_rows(d.size());
  for (int s = 0; s < 3; ++s) {
    model::stochastic_gradient(w, d, batch, cfg.lambda, g);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.eta * g[i];
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(m[i] == doctest::Approx(w[i] - w0[i]).epsilon(1e-15));
  }
}

TEST_CASE("mini-batch updates are deterministic in the stream") {
  const data::Dataset d = small_dataset(30, 4, 3, 13);
  model::LocalSgdConfig cfg;
  cfg.steps = 5;
  cfg.batch = 4;
  cfg.eta = 0.02;

  const std::vector<double> w0(model::param_dim(d), 0.0);
  RngStream r1(123), r2(123), r3(124);
  const auto m1 = model::local_sgd(w0, d, cfg, r1);
  const auto m2 = model::local_sgd(w0, d, cfg, r2);
  const auto m3 = model::local_sgd(w0, d, cfg, r3);
  CHECK(m1 == m2);
  CHECK(m1 != m3);
}

TEST_CASE("sgd_update validates its configuration") {
  model::LocalSgdConfig cfg;
  const std::vector<double> w0 = {0.0};
  RngStream rng(1);
  const auto grad = [](std::span<const std::size_t>, std::span<const double>,
                       std::span<double> g) { g[0] = 0.0; };

  cfg.batch = 0;
  CHECK_THROWS_AS(model::sgd_update(w0, 5, cfg, rng, grad),
                  std::invalid_argument);
  cfg = {};
  cfg.eta = 0.0;
  CHECK_THROWS_AS(model::sgd_update(w0, 5, cfg, rng, grad),
                  std::invalid_argument);
  cfg = {};
  CHECK_THROWS_AS(model::sgd_update(w0, 0, cfg, rng, grad),
                  std::invalid_argument);
}

TEST_CASE("diverging parameters are reported, not silently propagated") {
  model::LocalSgdConfig cfg;
  cfg.steps = 40;
  cfg.batch = 1;
  cfg.eta = 10.0;
  RngStream rng(3);
  const std::vector<double> w0 = {1.0};
  // A gradient that doubles the parameter each step at eta = 10 overflows.
  const auto grad = [](std::span<const std::size_t>, std::span<const double> w,
                       std::span<double> g) { g[0] = -w[0] * w[0] * w[0]; };
  CHECK_THROWS_AS(model::sgd_update(w0, 4, cfg, rng, grad), std::runtime_error);
}

}  // TEST_SUITE
