#pragma once

#include <cstddef>
#include <span>

// Dense double-precision kernels behind a runtime-dispatched backend. The
// scalar implementations are the reference; SIMD backends are selected at
// startup when the CPU supports them. Element-wise kernels (axpy, scale, add)
// are bit-identical across backends; reductions (dot, sum_squares,
// distance_squared) may differ by rounding because the SIMD versions use
// multiple accumulators.
namespace otafl::vec {

enum class Backend { scalar, avx2, neon };

Backend active_backend();
const char* backend_name(Backend b);

// Force a specific backend (used by the equivalence tests). Returns false if
// the requested backend is not compiled in or not supported by this CPU.
bool set_backend(Backend b);

double dot(std::span<const double> x, std::span<const double> y);
double sum_squares(std::span<const double> x);
double distance_squared(std::span<const double> x, std::span<const double> y);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
// out = a * x (aliasing out == x is allowed)
void scale(double a, std::span<const double> x, std::span<double> out);
// y += x
void add(std::span<const double> x, std::span<double> y);

}  // namespace otafl::vec
