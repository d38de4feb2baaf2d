#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "otafl/data.hpp"
#include "otafl/rng.hpp"

namespace otafl::attack {

enum class Kind { none, gaussian, classflip };

struct AttackSpec {
  Kind kind = Kind::none;
  std::size_t byzantine_count = 0;
  double variance = 30.0;           // per-coordinate variance of the gaussian attack
  std::uint64_t selection_seed = 0; // 0: derive from the master seed
  // When set, compromised transmitters ignore the power constraint and the
  // channel truncation: their update lands at the receiver at full strength
  // regardless of fading. Off by default, which keeps attackers subject to
  // the same physical limits as honest clients.
  bool power_exempt = false;

  bool operator==(const AttackSpec&) const = default;
};

// Uniformly random size-B subset of {0, ..., N-1}, returned sorted.
std::vector<std::size_t> select_byzantine(std::size_t total, std::size_t count,
                                          std::uint64_t seed);

// Update drawn from N(w, variance * I): each coordinate is the current global
// parameter plus independent Gaussian noise.
std::vector<double> gaussian_attack(std::span<const double> w, double variance,
                                    RngStream& rng);

// Label inversion for ten-class data: y -> 9 - y.
int classflip_label(int label);

// Copy of the dataset with every label flipped.
data::Dataset classflip_transform(const data::Dataset& dataset);

}  // namespace otafl::attack
