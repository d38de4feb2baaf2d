#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace otafl::aggregate {

struct GeomedConfig {
  double epsilon = 1e-4;  // smoothing radius
  double tol = 0.0;       // step-size stop; 0 selects 1e-7 * (1 + ||init||)
  int max_iters = 100;

  bool operator==(const GeomedConfig&) const = default;
};

struct GeomedResult {
  std::vector<double> value;
  int iterations = 0;
  bool converged = false;
};

// Coordinate-wise arithmetic mean of the given vectors.
std::vector<double> mean(std::span<const std::vector<double>> updates);

// Coordinate-wise median; the even-count case averages the two middle values.
// Used to initialize the Weiszfeld iteration.
std::vector<double> coordinate_median(std::span<const std::vector<double>> updates);

// Smoothed Euclidean norm: quadratic ||x||^2 / (2 eps) + eps / 2 inside the
// ball ||x|| <= eps, the exact norm outside. Continuously differentiable and
// everywhere >= max(||x||, eps / 2).
double smoothed_norm(std::span<const double> x, double epsilon);

// sum_i smoothed_norm(z - u_i), the objective minimized by geomed.
double smoothed_objective(std::span<const double> z,
                          std::span<const std::vector<double>> updates,
                          double epsilon);

// One Weiszfeld update: the weighted average of the points with weights
// 1 / max(epsilon, ||z - u_i||). This is the exact minimizer of the quadratic
// majorizer of the smoothed objective at z, so the objective never increases.
std::vector<double> weiszfeld_step(std::span<const double> z,
                                   std::span<const std::vector<double>> updates,
                                   double epsilon);

// Smoothed geometric median, initialized at the coordinate-wise median and
// iterated until the step length drops below tol or max_iters is reached.
// An iterate that lands on an input point takes a Vardi-Zhang escape step
// instead of the plain update (whose 1/epsilon weight would pin it there),
// or stops immediately when that point is certified as the minimizer.
GeomedResult geomed(std::span<const std::vector<double>> updates,
                    const GeomedConfig& cfg);

}  // namespace otafl::aggregate
