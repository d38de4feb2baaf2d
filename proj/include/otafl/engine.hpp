#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otafl/aggregate.hpp"
#include "otafl/attack.hpp"
#include "otafl/data.hpp"
#include "otafl/model.hpp"
#include "otafl/ota.hpp"
#include "otafl/rng.hpp"

namespace otafl::engine {

enum class Aggregation { geomed, mean };
enum class ModelKind { logistic, ridge };
enum class DataSource { auto_detect, mnist, synth };

struct DataConfig {
  DataSource source = DataSource::auto_detect;
  std::string dir;           // IDX directory; empty: $OTA_BYZ_DATA_DIR
  std::uint64_t seed = 0;    // synthetic-data seed; 0: derive from sim seed
  // synthetic classification fallback
  std::size_t synth_train = 4000;
  std::size_t synth_test = 1000;
  // High enough that random class centers land nearly orthogonal, so the
  // short preset training budgets separate all classes regardless of seed.
  std::size_t synth_dim = 24;
  int synth_classes = 10;
  double synth_spread = 0.06;
  // linear regression problem (model = ridge)
  std::size_t ridge_dim = 10;
  std::size_t ridge_per_client = 25;
  double ridge_noise = 0.5;

  bool operator==(const DataConfig&) const = default;
};

struct SimConfig {
  std::size_t clients = 100;  // N
  std::size_t groups = 20;    // G
  int rounds = 100;           // T
  std::uint64_t seed = 1;
  Aggregation aggregation = Aggregation::geomed;
  int eval_every = 1;  // rounds between held-out evaluations
  ModelKind model = ModelKind::logistic;
  model::LocalSgdConfig sgd;
  ota::OtaConfig ota;
  aggregate::GeomedConfig geomed;
  attack::AttackSpec attack;
  DataConfig data;

  bool operator==(const SimConfig&) const = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const SimConfig& cfg);

// A zero data.seed / attack.selection_seed means "derive from the run seed";
// these resolve either way.
std::uint64_t resolved_data_seed(const SimConfig& cfg);
std::uint64_t resolved_selection_seed(const SimConfig& cfg);

struct RoundMetrics {
  int round = 0;
  std::optional<double> train_loss;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  std::optional<double> dist_sq;  // squared distance to the known optimum
  int empty_groups = 0;
  std::optional<int> weiszfeld_iterations;
  bool skipped = false;  // every group came up empty; parameters unchanged
};

struct RunResult {
  std::vector<RoundMetrics> metrics;
  std::vector<double> final_params;
};

// A federated optimization problem. Batch indices are local to the client's
// shard. `optimum`, `test_loss` and `test_accuracy` are optional; the engine
// leaves the corresponding metrics empty when they are unavailable.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual std::size_t param_dim() const = 0;
  virtual std::size_t client_count() const = 0;
  virtual std::size_t client_sample_count(std::size_t client) const = 0;
  virtual void client_gradient(std::size_t client,
                               std::span<const std::size_t> batch,
                               std::span<const double> w,
                               std::span<double> grad) const = 0;
  virtual double train_loss(std::span<const double> w) const = 0;
  virtual std::optional<double> test_loss(std::span<const double>) const {
    return std::nullopt;
  }
  virtual std::optional<double> test_accuracy(std::span<const double>) const {
    return std::nullopt;
  }
  virtual const std::vector<double>* optimum() const { return nullptr; }
};

// Logistic regression over a shared sample pool. Clients hold index lists
// into the pool plus their own label arrays, so a client's labels can be
// poisoned without touching the clean pool used for loss reporting.
class LogisticProblem final : public Problem {
 public:
  LogisticProblem(data::Dataset train, data::Partition partition,
                  std::optional<data::Dataset> test, double lambda);

  // Label poisoning for one client: y -> 9 - y on its local view.
  void flip_labels(std::size_t client);

  std::size_t param_dim() const override;
  std::size_t client_count() const override { return rows_.size(); }
  std::size_t client_sample_count(std::size_t client) const override {
    return rows_[client].size();
  }
  void client_gradient(std::size_t client, std::span<const std::size_t> batch,
                       std::span<const double> w,
                       std::span<double> grad) const override;
  double train_loss(std::span<const double> w) const override;
  std::optional<double> test_loss(std::span<const double> w) const override;
  std::optional<double> test_accuracy(std::span<const double> w) const override;

  const data::Dataset& train_data() const { return train_; }
  const data::Dataset* test_data() const {
    return test_.has_value() ? &*test_ : nullptr;
  }

 private:
  data::Dataset train_;
  std::optional<data::Dataset> test_;
  double lambda_;
  std::vector<std::vector<std::size_t>> rows_;
  std::vector<std::vector<int>> labels_;
};

// Callbacks into a running simulation; default implementations ignore
// everything. Signals are reported before noise is added.
struct RunObserver {
  virtual ~RunObserver() = default;
  virtual void on_client_update(int /*round*/, std::size_t /*client*/,
                                bool /*byzantine*/,
                                std::span<const double> /*update*/) {}
  virtual void on_transmission(int /*round*/, std::size_t /*group*/,
                               std::size_t /*client*/, bool /*transmitted*/,
                               std::span<const double> /*signal*/) {}
};

// Random partition of {0, ..., clients-1} into `groups` equal-size parts;
// throws when groups does not divide clients.
std::vector<std::vector<std::size_t>> partition_groups(std::size_t clients,
                                                       std::size_t groups,
                                                       RngStream& rng);

class Simulation {
 public:
  // `byzantine` lists the compromised client indices (sorted or not).
  Simulation(const SimConfig& cfg, const Problem& problem,
             std::vector<std::size_t> byzantine);

  // One full round at parameters w: returns the next parameter vector and the
  // round's metrics. Rounds are numbered from 1.
  std::pair<std::vector<double>, RoundMetrics> run_round(
      std::span<const double> w, int round, RunObserver* observer = nullptr);

  // Runs cfg.rounds rounds from w = 0.
  RunResult run(RunObserver* observer = nullptr);

  const std::vector<std::size_t>& byzantine() const { return byzantine_; }

 private:
  std::vector<double> client_update(std::span<const double> w, std::size_t client,
                                    int round);

  SimConfig cfg_;
  const Problem* problem_;
  StreamForker forker_;
  std::vector<std::size_t> byzantine_;
  std::vector<bool> is_byzantine_;
};

}  // namespace otafl::engine
