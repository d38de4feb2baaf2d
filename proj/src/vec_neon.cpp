// NEON backend (aarch64). Mirrors the AVX2 translation unit: element-wise
// kernels use separate multiply and add instructions so they match the scalar
// reference bit for bit; reductions use two vector accumulators.

#include <arm_neon.h>

#include <cstddef>

#include "vec_detail.hpp"

namespace otafl::vec::detail {

namespace {

double hsum(float64x2_t v) {
  return vgetq_lane_f64(v, 0) + vgetq_lane_f64(v, 1);
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
  }
  double acc = hsum(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_squares_neon(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t a = vld1q_f64(x + i);
    const float64x2_t b = vld1q_f64(x + i + 2);
    acc0 = vaddq_f64(acc0, vmulq_f64(a, a));
    acc1 = vaddq_f64(acc1, vmulq_f64(b, b));
  }
  double acc = hsum(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double distance_squared_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    acc0 = vaddq_f64(acc0, vmulq_f64(d0, d0));
    acc1 = vaddq_f64(acc1, vmulq_f64(d1, d1));
  }
  double acc = hsum(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_neon(double a, const double* x, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) out[i] = a * x[i];
}

void add_neon(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table = {dot_neon,  sum_squares_neon,
                                    distance_squared_neon, axpy_neon,
                                    scale_neon, add_neon};
  return table;
}

}  // namespace otafl::vec::detail
