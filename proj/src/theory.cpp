#include "otafl/theory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "otafl/vec.hpp"

namespace otafl::theory {

namespace {

void fail(const std::string& what) { throw std::invalid_argument(what); }

}  // namespace

void validate(const TheoremConstants& c) {
  if (c.mu <= 0.0) fail("bound: mu must be positive");
  if (c.L < c.mu) fail("bound: L must be at least mu");
  if (c.delta2 < 0.0 || c.kappa2 < 0.0 || c.K2 < 0.0) {
    fail("bound: gradient statistics must be non-negative");
  }
  if (c.p == 0) fail("bound: dimension must be positive");
  if (c.sigma2 < 0.0) fail("bound: sigma2 must be non-negative");
  if (c.P <= 0.0) fail("bound: P must be positive");
  if (c.h_min <= 0.0) fail("bound: h_min must be positive");
  if (c.eta <= 0.0) fail("bound: eta must be positive");
  if (c.groups == 0 || 2 * c.byzantine >= c.groups) {
    fail("bound: needs byzantine < groups / 2");
  }
  if (c.eta > c.mu / (2.0 * c.L * c.L)) {
    fail("bound: step size exceeds mu / (2 L^2)");
  }
}

double c_alpha(std::size_t byzantine, std::size_t groups) {
  if (groups == 0 || 2 * byzantine >= groups) {
    fail("c_alpha: needs byzantine < groups / 2");
  }
  const double alpha = double(byzantine) / double(groups);
  return (2.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha);
}

double asymptotic_error(const TheoremConstants& c) {
  validate(c);
  const double ca = c_alpha(c.byzantine, c.groups);
  const double noise =
      double(c.p) * c.sigma2 * c.K2 / (c.P * c.h_min * c.h_min);
  return (2.0 / (c.mu * c.mu)) * ca * ca * (c.delta2 + c.kappa2 + noise);
}

std::vector<double> bound_sequence(const TheoremConstants& c, double delta0,
                                   int rounds) {
  if (delta0 < 0.0) fail("bound_sequence: negative initial distance");
  if (rounds < 0) fail("bound_sequence: negative round count");
  const double a = asymptotic_error(c);
  // eta <= mu / (2 L^2) <= 1 / (2 mu) keeps the decay factor inside (0, 1).
  const double decay = 1.0 - c.eta * c.mu;
  std::vector<double> out(std::size_t(rounds) + 1);
  double factor = 1.0;
  for (int t = 0; t <= rounds; ++t) {
    out[std::size_t(t)] = factor * (delta0 - a) + a;
    factor *= decay;
  }
  return out;
}

// ---------------------------------------------------------------------------
// RidgeProblem

RidgeProblem::RidgeProblem(std::size_t clients, std::size_t per_client,
                           std::size_t dim, double noise_sd, double lambda,
                           std::uint64_t seed)
    : clients_(clients), per_(per_client), dim_(dim), lambda_(lambda) {
  if (clients == 0 || per_client == 0 || dim == 0) {
    fail("RidgeProblem: clients, per_client and dim must be positive");
  }
  if (noise_sd < 0.0 || lambda < 0.0) {
    fail("RidgeProblem: noise_sd and lambda must be non-negative");
  }
  RngStream rng(mix64(seed ^ fnv1a64("ridge-data")));
  const std::size_t total = clients_ * per_;
  x_.resize(total * dim_);
  for (auto& v : x_) v = rng.next_normal();
  std::vector<double> w_true(dim_);
  for (auto& v : w_true) v = rng.next_normal();
  y_.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    y_[i] = vec::dot({x_.data() + i * dim_, dim_}, w_true) +
            noise_sd * rng.next_normal();
  }

  // Exact optimum: ((1/M) X^T X + lambda I) w* = (1/M) X^T y.
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> X(x_.data(), Eigen::Index(total),
                               Eigen::Index(dim_));
  Eigen::Map<const Eigen::VectorXd> y(y_.data(), Eigen::Index(total));
  Eigen::MatrixXd A = (X.transpose() * X) / double(total);
  A.diagonal().array() += lambda_;
  const Eigen::VectorXd b = (X.transpose() * y) / double(total);
  const Eigen::VectorXd w = A.llt().solve(b);
  w_star_.assign(w.data(), w.data() + dim_);
}

void RidgeProblem::client_gradient(std::size_t client,
                                   std::span<const std::size_t> batch,
                                   std::span<const double> w,
                                   std::span<double> grad) const {
  if (batch.empty()) fail("client_gradient: empty batch");
  if (w.size() != dim_ || grad.size() != dim_) {
    fail("client_gradient: dimension mismatch");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv_batch = 1.0 / double(batch.size());
  for (const std::size_t idx : batch) {
    if (idx >= per_) {
      throw std::out_of_range("client_gradient: batch index out of range");
    }
    const auto row = sample(client, idx);
    const double r = vec::dot(row, w) - target(client, idx);
    vec::axpy(r * inv_batch, row, grad);
  }
  if (lambda_ != 0.0) vec::axpy(lambda_, w, grad);
}

double RidgeProblem::train_loss(std::span<const double> w) const {
  const std::size_t total = clients_ * per_;
  double acc = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double r = vec::dot({x_.data() + i * dim_, dim_}, w) - y_[i];
    acc += 0.5 * r * r;
  }
  return acc / double(total) + 0.5 * lambda_ * vec::sum_squares(w);
}

std::unique_ptr<RidgeProblem> make_ridge_problem(const engine::SimConfig& cfg,
                                                 std::uint64_t data_seed) {
  return std::make_unique<RidgeProblem>(cfg.clients, cfg.data.ridge_per_client,
                                        cfg.data.ridge_dim, cfg.data.ridge_noise,
                                        cfg.sgd.lambda, data_seed);
}

// ---------------------------------------------------------------------------
// Constant estimation

namespace {

// Mean over every client of its full-shard gradient: the gradient of the
// global objective.
class GlobalGradient {
 public:
  explicit GlobalGradient(const engine::Problem& problem) : problem_(&problem) {
    std::size_t max_shard = 0;
    for (std::size_t n = 0; n < problem.client_count(); ++n) {
      max_shard = std::max(max_shard, problem.client_sample_count(n));
    }
    full_batch_.resize(max_shard);
    std::iota(full_batch_.begin(), full_batch_.end(), std::size_t{0});
    scratch_.resize(problem.param_dim());
  }

  void client_full(std::size_t n, std::span<const double> w,
                   std::span<double> out) const {
    problem_->client_gradient(
        n,
        std::span<const std::size_t>(full_batch_.data(),
                                     problem_->client_sample_count(n)),
        w, out);
  }

  void operator()(std::span<const double> w, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t n = 0; n < problem_->client_count(); ++n) {
      client_full(n, w, scratch_);
      vec::add(scratch_, out);
    }
    vec::scale(1.0 / double(problem_->client_count()), out, out);
  }

 private:
  const engine::Problem* problem_;
  std::vector<std::size_t> full_batch_;
  std::vector<double> scratch_;
};

// Dominant eigenvalue of a symmetric operator via power iteration with a
// Rayleigh-quotient stopping rule.
template <class Apply>
double power_iteration(Apply&& apply, std::size_t p, int iters, RngStream& rng) {
  std::vector<double> v(p), u(p);
  for (auto& x : v) x = rng.next_normal();
  vec::scale(1.0 / std::sqrt(vec::sum_squares(v)), v, v);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    apply(std::span<const double>(v), std::span<double>(u));
    const double next = vec::dot(v, u);
    const double norm = std::sqrt(vec::sum_squares(u));
    if (norm == 0.0) return 0.0;
    vec::scale(1.0 / norm, u, v);
    if (it > 0 && std::abs(next - lambda) <= 1e-12 * std::max(1.0, std::abs(next))) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

std::pair<double, double> hessian_extremes(const engine::Problem& problem,
                                           std::span<const double> w, int iters,
                                           std::uint64_t seed) {
  const std::size_t p = problem.param_dim();
  GlobalGradient grad(problem);
  const double t = 1e-4 * (1.0 + std::sqrt(vec::sum_squares(w)));
  std::vector<double> wp(p), wm(p), gp(p), gm(p);

  // Central-difference Hessian-vector product at w; `dir` must be unit length.
  auto hv = [&](std::span<const double> dir, std::span<double> out) {
    for (std::size_t i = 0; i < p; ++i) {
      wp[i] = w[i] + t * dir[i];
      wm[i] = w[i] - t * dir[i];
    }
    grad(wp, gp);
    grad(wm, gm);
    for (std::size_t i = 0; i < p; ++i) out[i] = (gp[i] - gm[i]) / (2.0 * t);
  };

  RngStream rng(mix64(seed ^ fnv1a64("hessian-extremes")));
  const double lmax = power_iteration(hv, p, iters, rng);
  const double shift = 1.05 * std::abs(lmax) + 1e-12;
  auto shifted = [&](std::span<const double> dir, std::span<double> out) {
    hv(dir, out);
    for (std::size_t i = 0; i < p; ++i) out[i] = shift * dir[i] - out[i];
  };
  const double lmin = shift - power_iteration(shifted, p, iters, rng);
  return {lmax, lmin};
}

EstimatedConstants estimate_constants(const engine::Problem& problem,
                                      std::span<const std::size_t> honest,
                                      const EstimationOptions& opts) {
  if (honest.empty()) fail("estimate_constants: no honest clients given");
  if (opts.w_samples < 1 || opts.batch == 0 || opts.batches_per_client < 1) {
    fail("estimate_constants: invalid sampling options");
  }
  const std::size_t p = problem.param_dim();
  if (!opts.center.empty() && opts.center.size() != p) {
    fail("estimate_constants: center dimension mismatch");
  }

  std::vector<std::vector<double>> points(std::size_t(opts.w_samples));
  points[0].assign(p, 0.0);
  if (!opts.center.empty()) points[0] = opts.center;
  RngStream rng(mix64(opts.seed ^ fnv1a64("estimate-constants")));
  const double step = opts.radius / std::sqrt(double(p));
  for (std::size_t k = 1; k < points.size(); ++k) {
    points[k] = points[0];
    for (auto& v : points[k]) v += step * rng.next_normal();
  }

  EstimatedConstants est;
  std::tie(est.L, est.mu) =
      hessian_extremes(problem, points[0], opts.power_iters, opts.seed);

  GlobalGradient grad(problem);
  std::vector<double> gbar(p), gn(p), gb(p);
  std::vector<std::size_t> batch(opts.batch);
  for (const auto& w : points) {
    grad(w, gbar);
    for (const std::size_t n : honest) {
      if (n >= problem.client_count()) {
        fail("estimate_constants: honest client index out of range");
      }
      const std::size_t m = problem.client_sample_count(n);
      grad.client_full(n, w, gn);
      est.delta2 = std::max(est.delta2, vec::distance_squared(gn, gbar));

      const std::size_t b = std::min(opts.batch, m);
      if (b == m) {
        // Full batches are deterministic: no variance, second moment exact.
        est.K2 = std::max(est.K2, vec::sum_squares(gn));
      } else if (b == 1) {
        // Single-sample batches can be enumerated exactly.
        double kacc = 0.0, Kacc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t one[1] = {i};
          problem.client_gradient(n, one, w, gb);
          kacc += vec::distance_squared(gb, gn);
          Kacc += vec::sum_squares(gb);
        }
        est.kappa2 = std::max(est.kappa2, kacc / double(m));
        est.K2 = std::max(est.K2, Kacc / double(m));
      } else {
        double kacc = 0.0, Kacc = 0.0;
        for (int j = 0; j < opts.batches_per_client; ++j) {
          for (std::size_t i = 0; i < b; ++i) batch[i] = rng.next_below(m);
          problem.client_gradient(n, {batch.data(), b}, w, gb);
          kacc += vec::distance_squared(gb, gn);
          Kacc += vec::sum_squares(gb);
        }
        est.kappa2 = std::max(est.kappa2, kacc / double(opts.batches_per_client));
        est.K2 = std::max(est.K2, Kacc / double(opts.batches_per_client));
      }
    }
  }
  return est;
}

TheoremConstants finalize_constants(const EstimatedConstants& est,
                                    std::size_t p,
                                    const engine::SimConfig& cfg,
                                    std::size_t byzantine) {
  TheoremConstants c;
  // Safety margins: curvature shrinks / grows against us, gradient statistics
  // grow, so an estimation error cannot tighten the bound.
  c.mu = 0.9 * est.mu;
  c.L = 1.1 * est.L;
  c.delta2 = 1.5 * est.delta2;
  c.kappa2 = 1.5 * est.kappa2;
  c.K2 = 1.5 * est.K2;
  c.p = p;
  c.sigma2 = cfg.ota.sigma2;
  c.P = cfg.ota.P;
  c.h_min = cfg.ota.h_min;
  c.eta = cfg.sgd.eta;
  c.byzantine = byzantine;
  c.groups = cfg.groups;
  return c;
}

// ---------------------------------------------------------------------------
// Validation harness

namespace {

EstimationOptions estimation_options(const engine::SimConfig& cfg,
                                     const std::vector<double>& w_star,
                                     std::uint64_t data_seed) {
  EstimationOptions opts;
  opts.batch = std::min(cfg.sgd.batch, cfg.data.ridge_per_client);
  opts.radius = 1.3 * std::sqrt(vec::sum_squares(w_star));
  opts.center = w_star;
  opts.seed = mix64(data_seed ^ fnv1a64("constants"));
  return opts;
}

}  // namespace

std::vector<double> run_bound(const engine::Problem& problem,
                              const engine::SimConfig& cfg) {
  const std::vector<double>* w_star = problem.optimum();
  if (w_star == nullptr) return {};
  std::vector<std::size_t> all_clients(problem.client_count());
  std::iota(all_clients.begin(), all_clients.end(), std::size_t{0});
  const std::uint64_t data_seed = engine::resolved_data_seed(cfg);
  const EstimatedConstants est = estimate_constants(
      problem, all_clients, estimation_options(cfg, *w_star, data_seed));
  const TheoremConstants constants = finalize_constants(
      est, problem.param_dim(), cfg, cfg.attack.byzantine_count);
  try {
    validate(constants);
  } catch (const std::invalid_argument&) {
    return {};
  }
  return bound_sequence(constants, vec::sum_squares(*w_star), cfg.rounds);
}

ValidationReport validate_theorem(const engine::SimConfig& base,
                                  std::span<const std::size_t> byzantine_counts,
                                  int seeds) {
  if (base.model != engine::ModelKind::ridge) {
    fail("validate_theorem: base config must use model=ridge");
  }
  if (seeds < 1) fail("validate_theorem: need at least one seed");
  if (byzantine_counts.empty()) fail("validate_theorem: no byzantine counts");
  for (std::size_t i = 1; i < byzantine_counts.size(); ++i) {
    if (byzantine_counts[i] <= byzantine_counts[i - 1]) {
      fail("validate_theorem: byzantine counts must be strictly increasing");
    }
  }

  engine::SimConfig cfg0 = base;
  cfg0.attack.kind = attack::Kind::gaussian;
  cfg0.eval_every = cfg0.rounds;  // losses only on the last round; the
                                  // distance to the optimum is always tracked
  engine::validate(cfg0);

  const std::uint64_t data_seed = engine::resolved_data_seed(base);
  const auto problem = make_ridge_problem(cfg0, data_seed);
  const std::vector<double>& w_star = *problem->optimum();
  const double delta0 = vec::sum_squares(w_star);  // runs start at w = 0

  std::vector<std::size_t> all_clients(cfg0.clients);
  std::iota(all_clients.begin(), all_clients.end(), std::size_t{0});

  ValidationReport report;
  report.estimated = estimate_constants(
      *problem, all_clients, estimation_options(cfg0, w_star, data_seed));
  report.delta0 = delta0;

  const int T = cfg0.rounds;
  for (const std::size_t B : byzantine_counts) {
    ValidationCase vc;
    vc.byzantine = B;
    const TheoremConstants constants =
        finalize_constants(report.estimated, problem->param_dim(), cfg0, B);
    validate(constants);
    vc.bound = bound_sequence(constants, delta0, T);

    std::vector<double> sum(std::size_t(T) + 1, 0.0);
    for (int s = 0; s < seeds; ++s) {
      engine::SimConfig cfg = cfg0;
      cfg.seed = base.seed + std::uint64_t(s);
      cfg.attack.byzantine_count = B;
      const auto byz = attack::select_byzantine(
          cfg.clients, B, engine::resolved_selection_seed(cfg));
      engine::Simulation sim(cfg, *problem, byz);
      const auto result = sim.run();
      sum[0] += delta0;
      for (int t = 0; t < T; ++t) {
        sum[std::size_t(t) + 1] += result.metrics[std::size_t(t)].dist_sq.value();
      }
    }
    vc.mean_dist_sq.resize(sum.size());
    for (std::size_t t = 0; t < sum.size(); ++t) {
      vc.mean_dist_sq[t] = sum[t] / double(seeds);
    }

    vc.holds = true;
    vc.max_ratio = 0.0;
    for (std::size_t t = 0; t < vc.mean_dist_sq.size(); ++t) {
      const double ratio = vc.mean_dist_sq[t] / vc.bound[t];
      // Round 0 equals the bound by construction (both start at the initial
      // distance), so it carries no information about tightness.
      if (t > 0) vc.max_ratio = std::max(vc.max_ratio, ratio);
      if (vc.mean_dist_sq[t] > vc.bound[t] * (1.0 + 1e-9)) vc.holds = false;
    }
    const std::size_t tail = std::max<std::size_t>(1, std::size_t(T) / 5);
    double tail_sum = 0.0;
    for (std::size_t t = vc.mean_dist_sq.size() - tail;
         t < vc.mean_dist_sq.size(); ++t) {
      tail_sum += vc.mean_dist_sq[t];
    }
    vc.tail_mean = tail_sum / double(tail);
    report.cases.push_back(std::move(vc));
  }

  report.bound_holds = true;
  for (const auto& vc : report.cases) {
    if (!vc.holds) report.bound_holds = false;
  }
  report.error_grows_with_attack = report.cases.size() >= 2;
  for (std::size_t i = 1; i < report.cases.size(); ++i) {
    if (report.cases[i].tail_mean <= report.cases[i - 1].tail_mean) {
      report.error_grows_with_attack = false;
    }
  }
  return report;
}

}  // namespace otafl::theory
