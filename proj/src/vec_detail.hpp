#pragma once

#include <cstddef>

namespace otafl::vec::detail {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum_squares)(const double*, std::size_t);
  double (*distance_squared)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, const double*, double*, std::size_t);
  void (*add)(const double*, double*, std::size_t);
};

const KernelTable& scalar_table();

#if defined(OTAFL_VEC_AVX2_TU)
const KernelTable& avx2_table();
#endif
#if defined(OTAFL_VEC_NEON_TU)
const KernelTable& neon_table();
#endif

}  // namespace otafl::vec::detail
