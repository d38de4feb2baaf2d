#include "otafl/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace otafl::attack {

std::vector<std::size_t> select_byzantine(std::size_t total, std::size_t count,
                                          std::uint64_t seed) {
  // Strictly fewer attackers than clients; an all-compromised federation has
  // no honest signal to aggregate.
  if (count >= total) {
    throw std::invalid_argument("select_byzantine: " + std::to_string(count) +
                                " compromised out of " + std::to_string(total));
  }
  std::vector<std::size_t> pool(total);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  RngStream rng(mix64(seed ^ fnv1a64("byzantine-selection")));
  // Partial Fisher-Yates: after `count` swaps the prefix is a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.next_below(total - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<double> gaussian_attack(std::span<const double> w, double variance,
                                    RngStream& rng) {
  if (variance < 0.0) {
    throw std::invalid_argument("gaussian_attack: negative variance");
  }
  const double sd = std::sqrt(variance);
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = w[i] + sd * rng.next_normal();
  }
  return out;
}

int classflip_label(int label) {
  if (label < 0 || label > 9) {
    throw std::invalid_argument("classflip_label: label " +
                                std::to_string(label) + " outside 0..9");
  }
  return 9 - label;
}

data::Dataset classflip_transform(const data::Dataset& dataset) {
  if (dataset.num_classes != 10) {
    throw std::invalid_argument("classflip_transform: needs ten-class data");
  }
  data::Dataset out = dataset;
  for (auto& y : out.labels) y = classflip_label(y);
  return out;
}

}  // namespace otafl::attack
