#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "scenery/common.hpp"

namespace scenery {

// Linear map R^d -> R^k, k <= d, row-major coefficients. A coordinate tag
// marks maps that select axes exactly; tagged maps get exact digit arithmetic
// downstream.
struct LinearMap {
  int rows = 1;
  int cols = 1;
  std::array<double, kMaxDim * kMaxDim> a{};
  std::optional<std::vector<int>> coord;  // selected source axes, one per row

  double at(int r, int c) const { return a[r * kMaxDim + c]; }
  double& at(int r, int c) { return a[r * kMaxDim + c]; }

  Vec apply(const Vec& x) const {
    Vec y{0, 0, 0};
    for (int r = 0; r < rows; ++r) {
      double s = 0;
      for (int c = 0; c < cols; ++c) s += at(r, c) * x[c];
      y[r] = s;
    }
    return y;
  }
};

inline LinearMap make_linear(int rows, int cols, const std::vector<double>& coeff) {
  require(rows >= 1 && rows <= kMaxDim && cols >= 1 && cols <= kMaxDim,
          "linear map dimensions must be 1..3");
  require(rows <= cols, "linear map must not raise dimension");
  require(int(coeff.size()) == rows * cols, "linear map coefficient count mismatch");
  LinearMap m;
  m.rows = rows;
  m.cols = cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m.at(r, c) = coeff[r * cols + c];
  // detect exact axis selection
  std::vector<int> axes;
  bool is_coord = true;
  for (int r = 0; r < rows && is_coord; ++r) {
    int hit = -1;
    for (int c = 0; c < cols; ++c) {
      double v = m.at(r, c);
      if (v == 1.0 && hit < 0)
        hit = c;
      else if (v != 0.0) {
        hit = -2;
        break;
      }
    }
    if (hit < 0)
      is_coord = false;
    else
      axes.push_back(hit);
  }
  if (is_coord) m.coord = axes;
  return m;
}

inline LinearMap coordinate_map(const std::vector<int>& axes, int cols) {
  std::vector<double> coeff(axes.size() * cols, 0.0);
  for (std::size_t r = 0; r < axes.size(); ++r) {
    require(axes[r] >= 0 && axes[r] < cols, "coordinate axis out of range");
    coeff[r * cols + axes[r]] = 1.0;
  }
  return make_linear(int(axes.size()), cols, coeff);
}

// rows of `outer` applied after `inner`
inline LinearMap compose(const LinearMap& outer, const LinearMap& inner) {
  require(outer.cols == inner.rows, "compose: shape mismatch");
  std::vector<double> coeff(outer.rows * inner.cols, 0.0);
  for (int r = 0; r < outer.rows; ++r)
    for (int c = 0; c < inner.cols; ++c) {
      double s = 0;
      for (int k = 0; k < outer.cols; ++k) s += outer.at(r, k) * inner.at(k, c);
      coeff[r * inner.cols + c] = s;
    }
  return make_linear(outer.rows, inner.cols, coeff);
}

inline std::string map_to_string(const LinearMap& m) {
  std::string s = "[";
  for (int r = 0; r < m.rows; ++r) {
    if (r) s += "; ";
    for (int c = 0; c < m.cols; ++c) {
      if (c) s += " ";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", m.at(r, c));
      s += buf;
    }
  }
  return s + "]";
}

}  // namespace scenery
