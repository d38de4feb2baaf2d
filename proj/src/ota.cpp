#include "otafl/ota.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "otafl/vec.hpp"

namespace otafl::ota {

std::vector<ChannelRealization> draw_channels(std::size_t n, double scale,
                                              RngStream& rng) {
  if (scale <= 0.0) {
    throw std::invalid_argument("draw_channels: scale must be positive");
  }
  std::vector<ChannelRealization> out(n);
  for (auto& ch : out) {
    ch.h = rng.next_rayleigh(scale);
    ch.phi = 2.0 * std::numbers::pi * rng.next_unit();
  }
  return out;
}

double compute_rho(double P, double max_update_norm_sq) {
  if (P <= 0.0) {
    throw std::invalid_argument("compute_rho: power budget must be positive");
  }
  if (max_update_norm_sq < 0.0) {
    throw std::invalid_argument("compute_rho: negative norm");
  }
  if (max_update_norm_sq == 0.0) return 1.0;
  return std::sqrt(P / max_update_norm_sq);
}

std::optional<std::vector<double>> precode(std::span<const double> m,
                                           const ChannelRealization& channel,
                                           double rho, double h_min) {
  if (channel.h <= h_min) return std::nullopt;
  std::vector<double> x(m.size());
  vec::scale(rho * h_min / channel.h, m, x);
  return x;
}

GroupReception superpose(std::span<const Transmission> transmissions,
                         std::size_t dim, double sigma2, RngStream& rng) {
  if (sigma2 < 0.0) {
    throw std::invalid_argument("superpose: negative noise variance");
  }
  GroupReception out;
  out.y.assign(dim, 0.0);
  for (const auto& tx : transmissions) {
    if (!tx.signal.has_value()) continue;
    if (tx.signal->size() != dim) {
      throw std::invalid_argument("superpose: signal dimension mismatch");
    }
    vec::axpy(tx.channel_gain, *tx.signal, out.y);
    out.active_set.push_back(tx.client);
  }
  if (sigma2 > 0.0) {
    const double sd = std::sqrt(sigma2);
    for (auto& v : out.y) v += sd * rng.next_normal();
  }
  return out;
}

std::optional<std::vector<double>> estimate_group_update(
    const GroupReception& reception, double rho, double h_min) {
  if (reception.active_set.empty()) return std::nullopt;
  std::vector<double> u(reception.y.size());
  vec::scale(1.0 / (rho * h_min * double(reception.active_set.size())),
             reception.y, u);
  return u;
}

}  // namespace otafl::ota
