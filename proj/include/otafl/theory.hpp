#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "otafl/engine.hpp"

// Convergence-bound machinery: the closed-form error bound for robust grouped
// over-the-air SGD, constant estimation for a concrete problem instance, and
// an empirical validation harness on ridge regression (where the optimum is
// available in closed form, so the distance to it can be measured exactly).
namespace otafl::theory {

// Constants of the bound. With alpha = byzantine / groups < 1/2 and
// c = (2 - 2 alpha) / (1 - 2 alpha), the mean squared distance to the optimum
// after t rounds is bounded by (1 - eta mu)^t (delta0 - A) + A where
// A = (2 / mu^2) c^2 (delta2 + kappa2 + p sigma2 K2 / (P h_min^2)).
struct TheoremConstants {
  double mu = 0.0;      // strong convexity
  double L = 0.0;       // gradient smoothness
  double delta2 = 0.0;  // worst-case client-to-global gradient gap, squared
  double kappa2 = 0.0;  // stochastic gradient variance
  double K2 = 0.0;      // stochastic gradient second moment
  std::size_t p = 0;    // parameter dimension
  double sigma2 = 0.0;  // receiver noise variance
  double P = 1.0;       // transmit power budget
  double h_min = 0.1;   // channel truncation threshold
  double eta = 0.01;    // step size
  std::size_t byzantine = 0;  // B
  std::size_t groups = 1;     // G
};

// Throws std::invalid_argument when the bound's validity conditions fail:
// positive mu/L/eta/P/h_min/p, byzantine < groups / 2, and eta <= mu / (2 L^2).
void validate(const TheoremConstants& c);

// (2 - 2 alpha) / (1 - 2 alpha) with alpha = byzantine / groups; requires
// 2 * byzantine < groups.
double c_alpha(std::size_t byzantine, std::size_t groups);

// The asymptotic error floor A.
double asymptotic_error(const TheoremConstants& c);

// bound[t] for t = 0..rounds, starting from squared distance delta0.
std::vector<double> bound_sequence(const TheoremConstants& c, double delta0,
                                   int rounds);

// Least-squares linear regression with an l2 penalty, spread over equally
// sized client shards. Features and targets are Gaussian; the exact optimum
// is solved at construction.
class RidgeProblem final : public engine::Problem {
 public:
  RidgeProblem(std::size_t clients, std::size_t per_client, std::size_t dim,
               double noise_sd, double lambda, std::uint64_t seed);

  std::size_t param_dim() const override { return dim_; }
  std::size_t client_count() const override { return clients_; }
  std::size_t client_sample_count(std::size_t) const override { return per_; }
  void client_gradient(std::size_t client, std::span<const std::size_t> batch,
                       std::span<const double> w,
                       std::span<double> grad) const override;
  double train_loss(std::span<const double> w) const override;
  const std::vector<double>* optimum() const override { return &w_star_; }

  std::span<const double> sample(std::size_t client, std::size_t i) const {
    return {x_.data() + (client * per_ + i) * dim_, dim_};
  }
  double target(std::size_t client, std::size_t i) const {
    return y_[client * per_ + i];
  }
  double lambda() const { return lambda_; }

 private:
  std::size_t clients_, per_, dim_;
  double lambda_;
  std::vector<double> x_;  // row-major, (clients * per_client) x dim
  std::vector<double> y_;
  std::vector<double> w_star_;
};

std::unique_ptr<RidgeProblem> make_ridge_problem(const engine::SimConfig& cfg,
                                                 std::uint64_t data_seed);

// Extreme eigenvalues (max, min) of the global-loss Hessian at w, via power
// iteration on finite-difference Hessian-vector products.
std::pair<double, double> hessian_extremes(const engine::Problem& problem,
                                           std::span<const double> w, int iters,
                                           std::uint64_t seed);

struct EstimationOptions {
  int w_samples = 8;       // parameter points sampled around `center`
  std::size_t batch = 1;   // batch size for the variance / second-moment terms
  int batches_per_client = 48;  // sampled batches when 1 < batch < shard size
  double radius = 1.0;     // sampling radius around `center`
  std::vector<double> center;  // empty: the origin
  int power_iters = 120;
  std::uint64_t seed = 2024;
};

struct EstimatedConstants {
  double mu = 0.0, L = 0.0, delta2 = 0.0, kappa2 = 0.0, K2 = 0.0;
};

// Empirical estimates of the assumption constants over `honest` clients:
// curvature extremes at `center`, and maxima of the gradient-gap / variance /
// second-moment statistics over sampled parameter points. Raw estimates; the
// validation harness applies its own safety margins on top.
EstimatedConstants estimate_constants(const engine::Problem& problem,
                                      std::span<const std::size_t> honest,
                                      const EstimationOptions& opts);

// Estimated constants with safety margins folded in (mu down, L up, gradient
// statistics up) plus the run parameters the bound needs.
TheoremConstants finalize_constants(const EstimatedConstants& est,
                                    std::size_t p,
                                    const engine::SimConfig& cfg,
                                    std::size_t byzantine);

// Bound sequence for one configured run on a problem with a known optimum:
// estimates the constants, folds in the margins, and starts from ||w*||^2.
// Returns an empty vector when the problem has no optimum or the bound's
// validity conditions reject the configuration.
std::vector<double> run_bound(const engine::Problem& problem,
                              const engine::SimConfig& cfg);

struct ValidationCase {
  std::size_t byzantine = 0;
  std::vector<double> mean_dist_sq;  // averaged over seeds; index 0 is round 0
  std::vector<double> bound;         // same indexing
  double tail_mean = 0.0;            // mean over the last fifth of the rounds
  double max_ratio = 0.0;            // max over rounds of measured / bound
  bool holds = false;
};

struct ValidationReport {
  EstimatedConstants estimated;
  double delta0 = 0.0;
  std::vector<ValidationCase> cases;
  bool bound_holds = false;             // every case stays below its bound
  bool error_grows_with_attack = false; // tail means increase with byzantine count
};

// Runs `seeds` independent simulations per entry of `byzantine_counts` on the
// ridge problem described by `base` (dataset fixed across all runs), averages
// the squared distance to the optimum per round, and compares against the
// bound with constants estimated from the data.
ValidationReport validate_theorem(const engine::SimConfig& base,
                                  std::span<const std::size_t> byzantine_counts,
                                  int seeds);

}  // namespace otafl::theory
