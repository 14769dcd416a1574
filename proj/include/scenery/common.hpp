#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace scenery {

inline constexpr int kMaxDim = 3;

using Vec = std::array<double, kMaxDim>;

// Validation failures: bad parameters, malformed specs, structural misuse.
class SpecError : public std::runtime_error {
 public:
  explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: empty zoom windows, insufficient resolution,
// conditioning on mass zero, divergent averages.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw SpecError(msg);
}

inline void numeric_require(bool ok, const std::string& msg) {
  if (!ok) throw NumericalError(msg);
}

inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

inline std::uint64_t upow(std::uint64_t b, int n) {
  std::uint64_t r = 1;
  for (int i = 0; i < n; ++i) r *= b;
  return r;
}

// Largest depth so that base^depth fits comfortably in a 64-bit axis key.
inline int max_depth_for_base(int base) {
  int d = 0;
  std::uint64_t v = 1;
  const std::uint64_t cap = (std::uint64_t(1) << 62);
  while (v <= cap / std::uint64_t(base)) {
    v *= std::uint64_t(base);
    ++d;
  }
  return d;
}

}  // namespace scenery
