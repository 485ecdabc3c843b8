#ifndef LATREG_SRC_COUNT_ROUND_HPP
#define LATREG_SRC_COUNT_ROUND_HPP

#include <cmath>
#include <cstdint>

namespace latreg::internal {

// Integer counts derived from real-valued fractions: products like
// 0.8 * 1000 land an epsilon away from the intended integer, so plain
// ceil/floor would be off by one. Snap within 1e-9 of an integer.
inline std::int64_t snap_ceil(double x) {
  return static_cast<std::int64_t>(std::ceil(x - 1e-9));
}

inline std::int64_t snap_floor(double x) {
  return static_cast<std::int64_t>(std::floor(x + 1e-9));
}

}  // namespace latreg::internal

#endif  // LATREG_SRC_COUNT_ROUND_HPP
