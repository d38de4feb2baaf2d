#include "otafl/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "otafl/vec.hpp"

namespace otafl::aggregate {

namespace {

void check_updates(std::span<const std::vector<double>> updates,
                   const char* who) {
  if (updates.empty()) {
    throw std::invalid_argument(std::string(who) + ": no input vectors");
  }
  const std::size_t dim = updates.front().size();
  for (const auto& u : updates) {
    if (u.size() != dim) {
      throw std::invalid_argument(std::string(who) + ": mixed dimensions");
    }
  }
}

}  // namespace

std::vector<double> mean(std::span<const std::vector<double>> updates) {
  check_updates(updates, "mean");
  std::vector<double> out(updates.front().size(), 0.0);
  for (const auto& u : updates) vec::add(u, out);
  vec::scale(1.0 / double(updates.size()), out, out);
  return out;
}

std::vector<double> coordinate_median(
    std::span<const std::vector<double>> updates) {
  check_updates(updates, "coordinate_median");
  const std::size_t n = updates.size();
  const std::size_t dim = updates.front().size();
  std::vector<double> out(dim);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = updates[i][j];
    const std::size_t mid = n / 2;
    std::nth_element(column.begin(), column.begin() + mid, column.end());
    if (n % 2 == 1) {
      out[j] = column[mid];
    } else {
      const double upper = column[mid];
      const double lower =
          *std::max_element(column.begin(), column.begin() + mid);
      out[j] = 0.5 * (lower + upper);
    }
  }
  return out;
}

double smoothed_norm(std::span<const double> x, double epsilon) {
  const double norm = std::sqrt(vec::sum_squares(x));
  if (norm <= epsilon) {
    return norm * norm / (2.0 * epsilon) + epsilon / 2.0;
  }
  return norm;
}

double smoothed_objective(std::span<const double> z,
                          std::span<const std::vector<double>> updates,
                          double epsilon) {
  check_updates(updates, "smoothed_objective");
  std::vector<double> diff(z.size());
  double total = 0.0;
  for (const auto& u : updates) {
    for (std::size_t j = 0; j < z.size(); ++j) diff[j] = z[j] - u[j];
    total += smoothed_norm(diff, epsilon);
  }
  return total;
}

std::vector<double> weiszfeld_step(std::span<const double> z,
                                   std::span<const std::vector<double>> updates,
                                   double epsilon) {
  check_updates(updates, "weiszfeld_step");
  std::vector<double> num(z.size(), 0.0);
  double den = 0.0;
  for (const auto& u : updates) {
    const double dist = std::sqrt(vec::distance_squared(z, u));
    const double w = 1.0 / std::max(epsilon, dist);
    vec::axpy(w, u, num);
    den += w;
  }
  vec::scale(1.0 / den, num, num);
  return num;
}

namespace {

// Escape move for an iterate sitting on one or more of the input points
// (within the smoothing radius). The plain update weights such points by
// 1/epsilon, which pins the iterate there for thousands of iterations even
// when the point is nowhere near the minimizer. Instead, follow Vardi and
// Zhang: with r the norm of the combined unit pull of the remaining points,
// r <= (number of coincident points) certifies the iterate as the exact
// geometric median (zero is a subgradient), and otherwise the iterate moves
// a (1 - anchored/r) fraction of the way toward the Weiszfeld target of the
// remaining points, which strictly decreases the objective.
// Returns the next iterate, or nullopt with *optimal set when the current
// point is already the minimizer; nullopt with *optimal false means the
// iterate is anchored to no input point and the plain step applies.
std::optional<std::vector<double>> anchor_escape(
    std::span<const double> z, std::span<const std::vector<double>> updates,
    double epsilon, bool* optimal) {
  *optimal = false;
  const std::size_t dim = z.size();
  std::size_t anchored = 0;
  std::vector<double> pull(dim, 0.0);
  std::vector<double> target(dim, 0.0);
  double weight_sum = 0.0;
  for (const auto& u : updates) {
    const double dist = std::sqrt(vec::distance_squared(z, u));
    if (dist <= epsilon) {
      ++anchored;
      continue;
    }
    const double w = 1.0 / dist;
    for (std::size_t i = 0; i < dim; ++i) pull[i] += (u[i] - z[i]) * w;
    vec::axpy(w, u, target);
    weight_sum += w;
  }
  if (anchored == 0) return std::nullopt;
  const double r = std::sqrt(vec::sum_squares(pull));
  if (r <= double(anchored) || weight_sum == 0.0) {
    *optimal = true;
    return std::nullopt;
  }
  const double stay = double(anchored) / r;  // in (0, 1)
  std::vector<double> next(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    next[i] = (1.0 - stay) * (target[i] / weight_sum) + stay * z[i];
  }
  return next;
}

}  // namespace

GeomedResult geomed(std::span<const std::vector<double>> updates,
                    const GeomedConfig& cfg) {
  check_updates(updates, "geomed");
  if (cfg.epsilon <= 0.0 || cfg.max_iters < 1) {
    throw std::invalid_argument("geomed: need epsilon > 0 and max_iters >= 1");
  }
  GeomedResult result;
  result.value = coordinate_median(updates);
  const double tol =
      cfg.tol > 0.0
          ? cfg.tol
          : 1e-7 * (1.0 + std::sqrt(vec::sum_squares(result.value)));
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    bool optimal = false;
    std::vector<double> next;
    if (auto escaped = anchor_escape(result.value, updates, cfg.epsilon, &optimal)) {
      next = std::move(*escaped);
    } else if (optimal) {
      result.converged = true;
      break;
    } else {
      next = weiszfeld_step(result.value, updates, cfg.epsilon);
    }
    const double step = std::sqrt(vec::distance_squared(next, result.value));
    result.value = std::move(next);
    result.iterations = iter + 1;
    if (step <= tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace otafl::aggregate
