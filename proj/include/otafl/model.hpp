#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "otafl/data.hpp"
#include "otafl/rng.hpp"
#include "otafl/vec.hpp"

// Multinomial logistic regression on a flat parameter vector laid out
// class-major: w[c * dim + j] is the weight of feature j for class c (the
// bias is the last feature of every row).
namespace otafl::model {

struct LocalSgdConfig {
  int steps = 12;           // local iterations per round
  std::size_t batch = 50;   // mini-batch size, sampled with replacement
  double eta = 0.01;        // step size
  double lambda = 0.0;      // l2 penalty on the full parameter vector

  bool operator==(const LocalSgdConfig&) const = default;
};

std::size_t param_dim(const data::Dataset& dataset);

// Mean cross-entropy over the dataset plus (lambda / 2) * ||w||^2.
double loss(std::span<const double> w, const data::Dataset& dataset,
            double lambda);

// Gradient of the regularized loss restricted to `batch` (mean over the batch
// entries). `grad` must have size w.size() and is overwritten.
void stochastic_gradient(std::span<const double> w, const data::Dataset& dataset,
                         std::span<const std::size_t> batch, double lambda,
                         std::span<double> grad);

// Fraction of samples whose argmax logit matches the label; ties resolve to
// the lowest class index.
double accuracy(std::span<const double> w, const data::Dataset& dataset);

namespace detail {

// Softmax cross-entropy gradient over a batch, parameterized over row and
// label accessors. Both the direct dataset entry point and the simulator's
// shard views instantiate this, so the two paths produce bit-identical
// gradients for the same samples.
template <class RowOf, class LabelOf>
void softmax_batch_gradient(std::span<const double> w, std::size_t dim,
                            int classes, std::span<const std::size_t> batch,
                            double lambda, RowOf&& row_of, LabelOf&& label_of,
                            std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> logits(classes);
  const double inv_batch = 1.0 / double(batch.size());
  for (const std::size_t idx : batch) {
    const std::span<const double> row = row_of(idx);
    for (int c = 0; c < classes; ++c) {
      logits[c] = vec::dot(w.subspan(std::size_t(c) * dim, dim), row);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      logits[c] = std::exp(logits[c] - mx);
      sum += logits[c];
    }
    const int label = label_of(idx);
    for (int c = 0; c < classes; ++c) {
      const double coef =
          (logits[c] / sum - (c == label ? 1.0 : 0.0)) * inv_batch;
      vec::axpy(coef, row, grad.subspan(std::size_t(c) * dim, dim));
    }
  }
  if (lambda != 0.0) vec::axpy(lambda, w, grad);
}

}  // namespace detail

// Generic local SGD loop, shared by the simulator so that every client update
// runs the identical arithmetic. Performs cfg.steps steps of
// w <- w - eta * grad(batch, w) and returns the displacement w_final - w0.
// Batches are drawn with replacement; when cfg.batch >= sample_count the full
// index range is used instead and the rng is left untouched.
template <class GradFn>
std::vector<double> sgd_update(std::span<const double> w0,
                               std::size_t sample_count,
                               const LocalSgdConfig& cfg, RngStream& rng,
                               GradFn&& grad) {
  if (cfg.steps < 0 || cfg.eta <= 0.0 || cfg.batch == 0) {
    throw std::invalid_argument("sgd_update: need steps >= 0, eta > 0, batch > 0");
  }
  if (sample_count == 0) {
    throw std::invalid_argument("sgd_update: client holds no samples");
  }
  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> g(w.size());
  const bool full_batch = cfg.batch >= sample_count;
  std::vector<std::size_t> batch(full_batch ? sample_count : cfg.batch);
  if (full_batch) std::iota(batch.begin(), batch.end(), std::size_t{0});

  for (int step = 0; step < cfg.steps; ++step) {
    if (!full_batch) {
      for (auto& idx : batch) idx = rng.next_below(sample_count);
    }
    grad(std::span<const std::size_t>(batch), std::span<const double>(w),
         std::span<double>(g));
    vec::axpy(-cfg.eta, g, w);
    const double ss = vec::sum_squares(w);
    if (!std::isfinite(ss)) {
      for (double v : w) {
        if (!std::isfinite(v)) {
          throw std::runtime_error("sgd_update: parameters diverged to non-finite values");
        }
      }
    }
  }
  std::vector<double> m(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) m[i] = w[i] - w0[i];
  return m;
}

// Local SGD on a logistic client shard; returns the model update.
std::vector<double> local_sgd(std::span<const double> w0,
                              const data::Dataset& dataset,
                              const LocalSgdConfig& cfg, RngStream& rng);

}  // namespace otafl::model
