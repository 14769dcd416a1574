#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scenery/common.hpp"

namespace scenery {

// Axis-aligned cube window. Cells of depth n subdivide it b-adically per axis
// into half-open boxes, resolving boundary points downward.
struct Window {
  Vec center{0, 0, 0};
  double half = 1.0;
  int dim = 1;

  double lo(int axis) const { return center[axis] - half; }
  double hi(int axis) const { return center[axis] + half; }
  double side() const { return 2.0 * half; }

  bool contains(const Vec& x) const {
    for (int a = 0; a < dim; ++a)
      if (x[a] < lo(a) || x[a] >= hi(a)) return false;
    return true;
  }

  bool operator==(const Window& o) const {
    if (dim != o.dim || half != o.half) return false;
    for (int a = 0; a < dim; ++a)
      if (center[a] != o.center[a]) return false;
    return true;
  }
};

inline Window unit_window(int dim) {
  require(dim >= 1 && dim <= kMaxDim, "window dimension must be 1..3");
  Window w;
  w.dim = dim;
  w.half = 1.0;
  w.center = {0, 0, 0};
  return w;
}

// [0,1]^d, used when a construction is naturally anchored at the origin.
inline Window zero_one_window(int dim) {
  require(dim >= 1 && dim <= kMaxDim, "window dimension must be 1..3");
  Window w;
  w.dim = dim;
  w.half = 0.5;
  w.center = {0.5, 0.5, 0.5};
  return w;
}

// Packed digit path per axis: ax[a] holds the base-b digits of axis a, most
// significant digit = coarsest level. Valid together with an external depth.
struct CellKey {
  std::array<std::uint64_t, kMaxDim> ax{0, 0, 0};

  bool operator==(const CellKey& o) const { return ax == o.ax; }
  bool operator!=(const CellKey& o) const { return ax != o.ax; }
  bool operator<(const CellKey& o) const { return ax < o.ax; }
};

inline CellKey key_prefix(const CellKey& k, int base, int depth, int new_depth) {
  CellKey r = k;
  std::uint64_t div = upow(std::uint64_t(base), depth - new_depth);
  for (auto& v : r.ax) v /= div;
  return r;
}

inline int key_digit(std::uint64_t axis_key, int base, int depth, int level) {
  // level 1 = coarsest.
  return int((axis_key / upow(std::uint64_t(base), depth - level)) % std::uint64_t(base));
}

// Digit expansion of a point, per axis, level 1 first. The point it denotes is
// the lower corner of the cell at the expansion's depth.
struct PointDigits {
  int dim = 1;
  std::array<std::vector<std::uint8_t>, kMaxDim> d;

  int depth() const { return int(d[0].size()); }

  bool operator==(const PointDigits& o) const { return dim == o.dim && d == o.d; }
};

inline CellKey digits_to_key(const PointDigits& p, int base, int depth) {
  require(depth <= p.depth(), "digits_to_key: expansion shorter than depth");
  CellKey k;
  for (int a = 0; a < p.dim; ++a) {
    std::uint64_t v = 0;
    for (int j = 0; j < depth; ++j) v = v * std::uint64_t(base) + p.d[a][j];
    k.ax[a] = v;
  }
  return k;
}

inline PointDigits key_to_digits(const CellKey& k, int base, int depth, int dim) {
  PointDigits p;
  p.dim = dim;
  for (int a = 0; a < dim; ++a) {
    p.d[a].resize(depth);
    for (int j = 1; j <= depth; ++j)
      p.d[a][j - 1] = std::uint8_t(key_digit(k.ax[a], base, depth, j));
  }
  return p;
}

// Unit coordinate of x along an axis: 0 at the window's low face, 1 at the high
// face, clamped into [0,1) so boundary points resolve downward.
inline double to_unit(const Window& w, double x, int axis) {
  double u = (x - w.lo(axis)) / w.side();
  if (u < 0) u = 0;
  if (u >= 1.0) u = std::nextafter(1.0, 0.0);
  return u;
}

inline PointDigits point_to_digits(const Window& w, const Vec& x, int base, int depth) {
  PointDigits p;
  p.dim = w.dim;
  for (int a = 0; a < w.dim; ++a) {
    double u = to_unit(w, x[a], a);
    p.d[a].resize(depth);
    for (int j = 0; j < depth; ++j) {
      u *= base;
      int dig = int(u);
      if (dig >= base) dig = base - 1;
      p.d[a][j] = std::uint8_t(dig);
      u -= dig;
    }
  }
  return p;
}

// Lower corner of the cell the expansion denotes, in window coordinates.
inline Vec digits_to_point(const Window& w, const PointDigits& p, int base) {
  Vec x{0, 0, 0};
  for (int a = 0; a < p.dim; ++a) {
    double u = 0, scale = 1;
    for (std::size_t j = 0; j < p.d[a].size(); ++j) {
      scale /= base;
      u += p.d[a][j] * scale;
    }
    x[a] = w.lo(a) + w.side() * u;
  }
  return x;
}

// Real-coordinate box of a cell.
inline void cell_box(const Window& w, int base, int depth, const CellKey& k,
                     Vec& lo, Vec& hi) {
  double s = w.side() / double(upow(std::uint64_t(base), depth));
  for (int a = 0; a < w.dim; ++a) {
    lo[a] = w.lo(a) + s * double(k.ax[a]);
    hi[a] = lo[a] + s;
  }
  for (int a = w.dim; a < kMaxDim; ++a) {
    lo[a] = 0;
    hi[a] = 0;
  }
}

inline std::string digits_string(const PointDigits& p, int axis) {
  std::string s;
  for (auto v : p.d[axis]) {
    if (v < 10)
      s += char('0' + v);
    else
      s += std::string(1, char('a' + (v - 10)));
  }
  return s;
}

}  // namespace scenery
