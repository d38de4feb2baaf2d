#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "otafl/rng.hpp"

// Analog over-the-air aggregation. Each transmitting client inverts its own
// fading channel so that every arriving signal carries the common coefficient
// rho * h_min; the receiver sees their sum plus Gaussian noise and recovers
// the average update of the clients that actually transmitted. With perfect
// channel knowledge the phase pre-rotation cancels exactly, so the simulation
// works with real-valued signals and the channel modulus only.
namespace otafl::ota {

struct ChannelRealization {
  double h;    // fading modulus
  double phi;  // phase, cancelled by precoding; carried for completeness
};

enum class RhoMode { fixed, estimated };

struct OtaConfig {
  double P = 1.0;            // transmit power budget per client
  double sigma2 = 0.01;      // receiver noise variance per coordinate
  double h_min = 0.1;        // truncation threshold on the channel modulus
  RhoMode rho_mode = RhoMode::fixed;
  double rho = 8.0;          // scaling factor when rho_mode == fixed
  double rayleigh_scale = 1.0;

  bool operator==(const OtaConfig&) const = default;
};

struct Transmission {
  std::optional<std::vector<double>> signal;  // nullopt: client stays silent
  double channel_gain = 0.0;                  // modulus seen by the receiver
  std::size_t client = 0;
};

struct GroupReception {
  std::vector<double> y;                // superposed signal plus noise
  std::vector<std::size_t> active_set;  // clients whose signal is present
};

// Draws n i.i.d. Rayleigh channel realizations.
std::vector<ChannelRealization> draw_channels(std::size_t n, double scale,
                                              RngStream& rng);

// Largest rho satisfying rho^2 * max||m||^2 <= P. A zero max norm leaves the
// power constraint vacuous; rho falls back to 1.
double compute_rho(double P, double max_update_norm_sq);

// Channel inversion with truncation: clients with h <= h_min stay silent,
// otherwise x = rho * (h_min / h) * m.
std::optional<std::vector<double>> precode(std::span<const double> m,
                                           const ChannelRealization& channel,
                                           double rho, double h_min);

// y = sum_k h_k * x_k + z with z ~ N(0, sigma2 * I).
GroupReception superpose(std::span<const Transmission> transmissions,
                         std::size_t dim, double sigma2, RngStream& rng);

// u = y / (rho * h_min * |active|); nullopt when nobody transmitted.
std::optional<std::vector<double>> estimate_group_update(
    const GroupReception& reception, double rho, double h_min);

}  // namespace otafl::ota
