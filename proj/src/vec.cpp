#include "otafl/vec.hpp"

#include <cassert>

#include "vec_detail.hpp"

namespace otafl::vec {
namespace detail {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double distance_squared_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void add_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {dot_scalar,  sum_squares_scalar,
                                    distance_squared_scalar, axpy_scalar,
                                    scale_scalar, add_scalar};
  return table;
}

}  // namespace detail

namespace {

Backend pick_default_backend() {
#if defined(OTAFL_VEC_AVX2_TU) && defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) return Backend::avx2;
#endif
#if defined(OTAFL_VEC_NEON_TU)
  return Backend::neon;
#endif
  return Backend::scalar;
}

const detail::KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &detail::scalar_table();
    case Backend::avx2:
#if defined(OTAFL_VEC_AVX2_TU) && defined(__x86_64__)
      if (__builtin_cpu_supports("avx2")) return &detail::avx2_table();
#endif
      return nullptr;
    case Backend::neon:
#if defined(OTAFL_VEC_NEON_TU)
      return &detail::neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

struct Dispatch {
  Backend backend;
  const detail::KernelTable* table;
  Dispatch() : backend(pick_default_backend()), table(table_for(backend)) {}
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

bool set_backend(Backend b) {
  const detail::KernelTable* table = table_for(b);
  if (table == nullptr) return false;
  dispatch().backend = b;
  dispatch().table = table;
  return true;
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return dispatch().table->dot(x.data(), y.data(), x.size());
}

double sum_squares(std::span<const double> x) {
  return dispatch().table->sum_squares(x.data(), x.size());
}

double distance_squared(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return dispatch().table->distance_squared(x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  dispatch().table->axpy(a, x.data(), y.data(), x.size());
}

void scale(double a, std::span<const double> x, std::span<double> out) {
  assert(x.size() == out.size());
  dispatch().table->scale(a, x.data(), out.data(), x.size());
}

void add(std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  dispatch().table->add(x.data(), y.data(), x.size());
}

}  // namespace otafl::vec
