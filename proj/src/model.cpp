#include "otafl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace otafl::model {

namespace {

void check_shape(std::span<const double> w, const data::Dataset& dataset,
                 const char* who) {
  if (dataset.size() == 0) {
    throw std::invalid_argument(std::string(who) + ": empty dataset");
  }
  const std::size_t expect = dataset.dim * std::size_t(dataset.num_classes);
  if (w.size() != expect) {
    throw std::invalid_argument(std::string(who) + ": parameter size " +
                                std::to_string(w.size()) + " does not match " +
                                std::to_string(expect));
  }
}

void logits_for_row(std::span<const double> w, std::span<const double> row,
                    int classes, std::span<double> logits) {
  const std::size_t dim = row.size();
  for (int c = 0; c < classes; ++c) {
    logits[c] = vec::dot(w.subspan(std::size_t(c) * dim, dim), row);
  }
}

}  // namespace

std::size_t param_dim(const data::Dataset& dataset) {
  return dataset.dim * std::size_t(dataset.num_classes);
}

double loss(std::span<const double> w, const data::Dataset& dataset,
            double lambda) {
  check_shape(w, dataset, "loss");
  const int classes = dataset.num_classes;
  std::vector<double> logits(classes);
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    logits_for_row(w, dataset.row(i), classes, logits);
    // log-sum-exp with the max subtracted, so large logits cannot overflow
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(logits[c] - mx);
    total += mx + std::log(sum) - logits[dataset.labels[i]];
  }
  return total / double(dataset.size()) + 0.5 * lambda * vec::sum_squares(w);
}

void stochastic_gradient(std::span<const double> w, const data::Dataset& dataset,
                         std::span<const std::size_t> batch, double lambda,
                         std::span<double> grad) {
  check_shape(w, dataset, "stochastic_gradient");
  if (batch.empty()) {
    throw std::invalid_argument("stochastic_gradient: empty batch");
  }
  if (grad.size() != w.size()) {
    throw std::invalid_argument("stochastic_gradient: gradient buffer size mismatch");
  }
  for (const std::size_t idx : batch) {
    if (idx >= dataset.size()) {
      throw std::out_of_range("stochastic_gradient: batch index " +
                              std::to_string(idx) + " out of range");
    }
  }
  detail::softmax_batch_gradient(
      w, dataset.dim, dataset.num_classes, batch, lambda,
      [&](std::size_t idx) { return dataset.row(idx); },
      [&](std::size_t idx) { return dataset.labels[idx]; }, grad);
}

double accuracy(std::span<const double> w, const data::Dataset& dataset) {
  check_shape(w, dataset, "accuracy");
  const int classes = dataset.num_classes;
  std::vector<double> logits(classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    logits_for_row(w, dataset.row(i), classes, logits);
    int arg = 0;
    for (int c = 1; c < classes; ++c) {
      if (logits[c] > logits[arg]) arg = c;  // ties keep the lowest index
    }
    if (arg == dataset.labels[i]) ++correct;
  }
  return double(correct) / double(dataset.size());
}

std::vector<double> local_sgd(std::span<const double> w0,
                              const data::Dataset& dataset,
                              const LocalSgdConfig& cfg, RngStream& rng) {
  check_shape(w0, dataset, "local_sgd");
  return sgd_update(w0, dataset.size(), cfg, rng,
                    [&](std::span<const std::size_t> batch,
                        std::span<const double> w, std::span<double> g) {
                      stochastic_gradient(w, dataset, batch, cfg.lambda, g);
                    });
}

}  // namespace otafl::model
