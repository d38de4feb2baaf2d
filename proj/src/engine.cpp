#include "otafl/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace otafl::engine {

void validate(const SimConfig& cfg) {
  const auto fail = [](const std::string& what) {
    throw std::invalid_argument("config: " + what);
  };
  if (cfg.clients == 0) fail("sim.clients must be positive");
  if (cfg.groups == 0 || cfg.groups > cfg.clients) {
    fail("sim.groups must lie in [1, sim.clients]");
  }
  if (cfg.clients % cfg.groups != 0) {
    fail("sim.groups must divide sim.clients evenly");
  }
  if (cfg.rounds < 1) fail("sim.rounds must be at least 1");
  if (cfg.eval_every < 1) fail("sim.eval_every must be at least 1");
  if (cfg.sgd.steps < 1) fail("sgd.steps must be at least 1");
  if (cfg.sgd.batch == 0) fail("sgd.batch must be positive");
  if (cfg.sgd.eta <= 0.0) fail("sgd.eta must be positive");
  if (cfg.sgd.lambda < 0.0) fail("sgd.lambda must be non-negative");
  if (cfg.ota.P <= 0.0) fail("ota.power must be positive");
  if (cfg.ota.sigma2 < 0.0) fail("ota.sigma2 must be non-negative");
  if (cfg.ota.h_min <= 0.0) fail("ota.h_min must be positive");
  if (cfg.ota.rho_mode == ota::RhoMode::fixed && cfg.ota.rho <= 0.0) {
    fail("ota.rho must be positive in fixed mode");
  }
  if (cfg.ota.rayleigh_scale <= 0.0) fail("ota.rayleigh_scale must be positive");
  if (cfg.geomed.epsilon <= 0.0) fail("geomed.epsilon must be positive");
  if (cfg.geomed.tol < 0.0) fail("geomed.tol must be non-negative");
  if (cfg.geomed.max_iters < 1) fail("geomed.max_iters must be at least 1");
  if (cfg.attack.byzantine_count >= cfg.clients) {
    fail("attack.byzantine must be smaller than sim.clients");
  }
  if (cfg.attack.variance < 0.0) fail("attack.variance must be non-negative");
  if (cfg.attack.kind == attack::Kind::classflip &&
      cfg.model != ModelKind::logistic) {
    fail("attack.kind=classflip requires model=logistic");
  }
}

std::uint64_t resolved_data_seed(const SimConfig& cfg) {
  if (cfg.data.seed != 0) return cfg.data.seed;
  return StreamForker(cfg.seed).derive("data");
}

std::uint64_t resolved_selection_seed(const SimConfig& cfg) {
  if (cfg.attack.selection_seed != 0) return cfg.attack.selection_seed;
  return StreamForker(cfg.seed).derive("attack-selection");
}

// ---------------------------------------------------------------------------
// LogisticProblem

LogisticProblem::LogisticProblem(data::Dataset train, data::Partition partition,
                                 std::optional<data::Dataset> test,
                                 double lambda)
    : train_(std::move(train)), test_(std::move(test)), lambda_(lambda) {
  rows_ = std::move(partition.assignments);
  labels_.resize(rows_.size());
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    labels_[k].reserve(rows_[k].size());
    for (const std::size_t r : rows_[k]) {
      if (r >= train_.size()) {
        throw std::out_of_range("LogisticProblem: partition row out of range");
      }
      labels_[k].push_back(train_.labels[r]);
    }
  }
  if (test_.has_value() &&
      (test_->dim != train_.dim || test_->num_classes != train_.num_classes)) {
    throw std::invalid_argument("LogisticProblem: train/test shape mismatch");
  }
}

void LogisticProblem::flip_labels(std::size_t client) {
  for (auto& y : labels_.at(client)) y = attack::classflip_label(y);
}

std::size_t LogisticProblem::param_dim() const {
  return model::param_dim(train_);
}

void LogisticProblem::client_gradient(std::size_t client,
                                      std::span<const std::size_t> batch,
                                      std::span<const double> w,
                                      std::span<double> grad) const {
  const auto& rows = rows_[client];
  const auto& labels = labels_[client];
  if (batch.empty()) {
    throw std::invalid_argument("client_gradient: empty batch");
  }
  for (const std::size_t idx : batch) {
    if (idx >= rows.size()) {
      throw std::out_of_range("client_gradient: batch index out of range");
    }
  }
  model::detail::softmax_batch_gradient(
      w, train_.dim, train_.num_classes, batch, lambda_,
      [&](std::size_t idx) { return train_.row(rows[idx]); },
      [&](std::size_t idx) { return labels[idx]; }, grad);
}

double LogisticProblem::train_loss(std::span<const double> w) const {
  return model::loss(w, train_, lambda_);
}

std::optional<double> LogisticProblem::test_loss(std::span<const double> w) const {
  if (!test_.has_value()) return std::nullopt;
  return model::loss(w, *test_, lambda_);
}

std::optional<double> LogisticProblem::test_accuracy(
    std::span<const double> w) const {
  if (!test_.has_value()) return std::nullopt;
  return model::accuracy(w, *test_);
}

// ---------------------------------------------------------------------------
// Simulation

std::vector<std::vector<std::size_t>> partition_groups(std::size_t clients,
                                                       std::size_t groups,
                                                       RngStream& rng) {
  if (groups == 0 || groups > clients || clients % groups != 0) {
    throw std::invalid_argument(
        "partition_groups: groups must divide clients evenly");
  }
  std::vector<std::size_t> perm(clients);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = clients - 1; i > 0; --i) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  const std::size_t size = clients / groups;
  std::vector<std::vector<std::size_t>> out(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    out[g].assign(perm.begin() + g * size, perm.begin() + (g + 1) * size);
  }
  return out;
}

namespace {

void check_group_partition(const std::vector<std::vector<std::size_t>>& groups,
                           std::size_t clients) {
  std::vector<char> seen(clients, 0);
  std::size_t total = 0;
  for (const auto& g : groups) {
    for (const std::size_t n : g) {
      if (n >= clients || seen[n]) {
        throw std::logic_error("group partition invalid");
      }
      seen[n] = 1;
      ++total;
    }
  }
  if (total != clients) {
    throw std::logic_error("group partition does not cover all clients");
  }
}

}  // namespace

Simulation::Simulation(const SimConfig& cfg, const Problem& problem,
                       std::vector<std::size_t> byzantine)
    : cfg_(cfg),
      problem_(&problem),
      forker_(cfg.seed),
      byzantine_(std::move(byzantine)) {
  validate(cfg_);
  if (problem_->client_count() != cfg_.clients) {
    throw std::invalid_argument("Simulation: problem has " +
                                std::to_string(problem_->client_count()) +
                                " clients, config says " +
                                std::to_string(cfg_.clients));
  }
  std::sort(byzantine_.begin(), byzantine_.end());
  is_byzantine_.assign(cfg_.clients, false);
  for (const std::size_t n : byzantine_) {
    if (n >= cfg_.clients) {
      throw std::invalid_argument("Simulation: compromised index out of range");
    }
    is_byzantine_[n] = true;
  }
}

std::vector<double> Simulation::client_update(std::span<const double> w,
                                              std::size_t client, int round) {
  if (is_byzantine_[client] && cfg_.attack.kind == attack::Kind::gaussian) {
    RngStream rng = forker_.stream("attack", client, std::uint64_t(round));
    return attack::gaussian_attack(w, cfg_.attack.variance, rng);
  }
  // Honest protocol; label-poisoned clients land here too, their shard view
  // already carries the flipped labels.
  RngStream rng = forker_.stream("local-sgd", client, std::uint64_t(round));
  return model::sgd_update(w, problem_->client_sample_count(client), cfg_.sgd,
                           rng,
                           [&](std::span<const std::size_t> batch,
                               std::span<const double> wk, std::span<double> g) {
                             problem_->client_gradient(client, batch, wk, g);
                           });
}

std::pair<std::vector<double>, RoundMetrics> Simulation::run_round(
    std::span<const double> w, int round, RunObserver* observer) {
  const std::size_t p = problem_->param_dim();
  RoundMetrics metrics;
  metrics.round = round;

  RngStream grouping_rng = forker_.stream("grouping", std::uint64_t(round));
  const auto groups = partition_groups(cfg_.clients, cfg_.groups, grouping_rng);
  check_group_partition(groups, cfg_.clients);

  std::vector<std::vector<double>> updates(cfg_.clients);
  for (std::size_t n = 0; n < cfg_.clients; ++n) {
    updates[n] = client_update(w, n, round);
    if (observer != nullptr) {
      observer->on_client_update(round, n, is_byzantine_[n], updates[n]);
    }
  }

  double rho = cfg_.ota.rho;
  if (cfg_.ota.rho_mode == ota::RhoMode::estimated) {
    // Power calibration can only trust norms reported by honest clients.
    double max_norm_sq = 0.0;
    for (std::size_t n = 0; n < cfg_.clients; ++n) {
      if (is_byzantine_[n]) continue;
      max_norm_sq = std::max(max_norm_sq, vec::sum_squares(updates[n]));
    }
    rho = ota::compute_rho(cfg_.ota.P, max_norm_sq);
  }

  std::vector<std::vector<double>> group_updates;
  group_updates.reserve(cfg_.groups);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    RngStream channel_rng =
        forker_.stream("channels", std::uint64_t(round), g);
    const auto channels =
        ota::draw_channels(groups[g].size(), cfg_.ota.rayleigh_scale, channel_rng);

    std::vector<ota::Transmission> transmissions(groups[g].size());
    for (std::size_t i = 0; i < groups[g].size(); ++i) {
      const std::size_t n = groups[g][i];
      auto& tx = transmissions[i];
      tx.client = n;
      tx.channel_gain = channels[i].h;
      if (is_byzantine_[n] && cfg_.attack.power_exempt) {
        // Full-strength delivery: invert the channel without truncation so
        // the received contribution is exactly rho * h_min * m.
        tx.signal.emplace(p);
        vec::scale(rho * cfg_.ota.h_min / channels[i].h, updates[n], *tx.signal);
      } else {
        tx.signal = ota::precode(updates[n], channels[i], rho, cfg_.ota.h_min);
      }
      if (observer != nullptr) {
        observer->on_transmission(round, g, n, tx.signal.has_value(),
                                  tx.signal.has_value()
                                      ? std::span<const double>(*tx.signal)
                                      : std::span<const double>());
      }
    }

    RngStream noise_rng = forker_.stream("noise", std::uint64_t(round), g);
    const auto reception =
        ota::superpose(transmissions, p, cfg_.ota.sigma2, noise_rng);
    auto estimate = ota::estimate_group_update(reception, rho, cfg_.ota.h_min);
    if (estimate.has_value()) {
      group_updates.push_back(std::move(*estimate));
    } else {
      ++metrics.empty_groups;
    }
  }

  std::vector<double> w_next(w.begin(), w.end());
  if (group_updates.empty()) {
    metrics.skipped = true;
    std::cerr << "warning: round " << round
              << ": every group was empty, parameters unchanged\n";
  } else {
    std::vector<double> agg;
    if (cfg_.aggregation == Aggregation::geomed) {
      auto result = aggregate::geomed(group_updates, cfg_.geomed);
      metrics.weiszfeld_iterations = result.iterations;
      agg = std::move(result.value);
    } else {
      agg = aggregate::mean(group_updates);
    }
    for (const double v : agg) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("round " + std::to_string(round) +
                                 ": aggregated update is not finite");
      }
    }
    vec::add(agg, w_next);
  }

  const bool eval_round =
      (round % cfg_.eval_every == 0) || (round == cfg_.rounds);
  if (eval_round) {
    metrics.train_loss = problem_->train_loss(w_next);
    metrics.test_loss = problem_->test_loss(w_next);
    metrics.test_accuracy = problem_->test_accuracy(w_next);
  }
  if (const auto* opt = problem_->optimum()) {
    metrics.dist_sq = vec::distance_squared(w_next, *opt);
  }
  return {std::move(w_next), metrics};
}

RunResult Simulation::run(RunObserver* observer) {
  RunResult result;
  result.metrics.reserve(std::size_t(cfg_.rounds));
  result.final_params.assign(problem_->param_dim(), 0.0);
  for (int t = 1; t <= cfg_.rounds; ++t) {
    auto [w_next, metrics] = run_round(result.final_params, t, observer);
    result.final_params = std::move(w_next);
    result.metrics.push_back(metrics);
  }
  return result;
}

}  // namespace otafl::engine
