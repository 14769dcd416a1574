#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "scenery/tree.hpp"

namespace scenery {

// Geometric re-binning target. Masses are deposited box by box; a box that
// does not split across target cells is placed exactly, a straddling box is
// split proportionally to overlap (leaf-uniform assumption) and its full mass
// is added to the straddle bound. Mass falling outside the window is dropped
// and accounted separately.
class Depositor {
 public:
  Depositor(int base, int dim, int depth, const Window& w)
      : tree_(make_tree(base, dim, depth, w)),
        cells_(double(upow(std::uint64_t(base), depth))) {}

  TreeMeasure take() {
    tree_.rebin_error_bound += straddle_;
    return std::move(tree_);
  }

  double dropped() const { return dropped_; }
  double straddle() const { return straddle_; }

  void point(const Vec& x, double mass) {
    if (mass <= 0) return;
    if (!tree_.window.contains(x)) {
      dropped_ += mass;
      return;
    }
    PointDigits p = point_to_digits(tree_.window, x, tree_.base, tree_.depth);
    tree_.add(digits_to_key(p, tree_.base, tree_.depth), mass);
  }

  void box(const Vec& lo, const Vec& hi, double mass) {
    if (mass <= 0) return;
    // per-axis covered cell ranges and overlap fractions, in cell units
    std::array<std::vector<std::pair<std::uint64_t, double>>, kMaxDim> axis;
    double inside = 1.0;
    bool split = false;
    for (int a = 0; a < tree_.dim; ++a) {
      double u0 = (lo[a] - tree_.window.lo(a)) / tree_.window.side() * cells_;
      double u1 = (hi[a] - tree_.window.lo(a)) / tree_.window.side() * cells_;
      if (u1 < u0) std::swap(u0, u1);
      double width = u1 - u0;
      double tol = std::min(1e-12 * cells_, 0.25);
      if (width <= tol) {
        // degenerate axis: treat as a point coordinate
        Vec mid = lo;
        mid[a] = 0.5 * (lo[a] + hi[a]);
        double uc = (mid[a] - tree_.window.lo(a)) / tree_.window.side() * cells_;
        if (uc < 0 || uc >= cells_) {
          dropped_ += mass;
          return;
        }
        std::uint64_t i = std::uint64_t(uc);
        axis[a].push_back({i, 1.0});
        continue;
      }
      double c0 = std::max(u0, 0.0);
      double c1 = std::min(u1, cells_);
      if (c1 <= c0) {
        dropped_ += mass;
        return;
      }
      inside *= (c1 - c0) / width;
      std::uint64_t i0 = std::uint64_t(std::min(std::max(std::floor(c0 + tol), 0.0), cells_ - 1));
      std::uint64_t i1 = std::uint64_t(std::min(std::max(std::ceil(c1 - tol) - 1, 0.0), cells_ - 1));
      if (i1 < i0) i1 = i0;
      for (std::uint64_t i = i0; i <= i1; ++i) {
        double l = std::max(c0, double(i));
        double h = std::min(c1, double(i + 1));
        double f = (h - l) / width;
        if (f <= 0) continue;
        axis[a].push_back({i, f});
      }
      if (axis[a].empty()) {
        dropped_ += mass;
        return;
      }
      if (axis[a].size() > 1) split = true;
    }
    double placed = mass * inside;
    dropped_ += mass - placed;
    if (placed <= 0) return;
    if (split) straddle_ += placed;
    // distribute the in-window part proportionally
    deposit_product(axis, mass);
  }

  // Convex polygon deposit for 2-d targets; `pts` in real coordinates.
  void polygon(const std::vector<std::array<double, 2>>& pts, double mass) {
    require(tree_.dim == 2, "polygon deposit needs a 2-d target");
    if (mass <= 0 || pts.size() < 3) return;
    // unit-cell coordinates
    std::vector<std::array<double, 2>> poly;
    poly.reserve(pts.size());
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& p : pts) {
      double ux = (p[0] - tree_.window.lo(0)) / tree_.window.side() * cells_;
      double uy = (p[1] - tree_.window.lo(1)) / tree_.window.side() * cells_;
      poly.push_back({ux, uy});
      x0 = std::min(x0, ux);
      x1 = std::max(x1, ux);
      y0 = std::min(y0, uy);
      y1 = std::max(y1, uy);
    }
    double area = shoelace(poly);
    if (area <= 0) {
      // degenerate: fall back to a thin bounding box
      Vec lo{tree_.window.lo(0) + x0 / cells_ * tree_.window.side(),
             tree_.window.lo(1) + y0 / cells_ * tree_.window.side(), 0};
      Vec hi{tree_.window.lo(0) + x1 / cells_ * tree_.window.side(),
             tree_.window.lo(1) + y1 / cells_ * tree_.window.side(), 0};
      box(lo, hi, mass);
      return;
    }
    std::int64_t i0 = std::int64_t(std::floor(x0)), i1 = std::int64_t(std::ceil(x1)) - 1;
    std::int64_t j0 = std::int64_t(std::floor(y0)), j1 = std::int64_t(std::ceil(y1)) - 1;
    bool single = (i0 == i1 && j0 == j1);
    double placed_frac = 0;
    for (std::int64_t i = std::max<std::int64_t>(i0, 0);
         i <= std::min<std::int64_t>(i1, std::int64_t(cells_) - 1); ++i) {
      for (std::int64_t j = std::max<std::int64_t>(j0, 0);
           j <= std::min<std::int64_t>(j1, std::int64_t(cells_) - 1); ++j) {
        double a = clipped_area(poly, double(i), double(i + 1), double(j), double(j + 1));
        if (a <= 0) continue;
        double f = a / area;
        placed_frac += f;
        CellKey k;
        k.ax = {std::uint64_t(i), std::uint64_t(j), 0};
        tree_.add(k, mass * f);
      }
    }
    dropped_ += mass * std::max(0.0, 1.0 - placed_frac);
    if (!single) straddle_ += mass * std::min(1.0, placed_frac);
  }

 private:
  void deposit_product(
      const std::array<std::vector<std::pair<std::uint64_t, double>>, kMaxDim>& axis,
      double mass) {
    CellKey k;
    if (tree_.dim == 1) {
      for (const auto& [i, f] : axis[0]) {
        k.ax = {i, 0, 0};
        tree_.add(k, mass * f);
      }
      return;
    }
    if (tree_.dim == 2) {
      for (const auto& [i, fi] : axis[0])
        for (const auto& [j, fj] : axis[1]) {
          k.ax = {i, j, 0};
          tree_.add(k, mass * fi * fj);
        }
      return;
    }
    for (const auto& [i, fi] : axis[0])
      for (const auto& [j, fj] : axis[1])
        for (const auto& [l, fl] : axis[2]) {
          k.ax = {i, j, l};
          tree_.add(k, mass * fi * fj * fl);
        }
  }

  static double shoelace(const std::vector<std::array<double, 2>>& p) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& a = p[i];
      const auto& b = p[(i + 1) % p.size()];
      s += a[0] * b[1] - b[0] * a[1];
    }
    return std::abs(s) * 0.5;
  }

  // Sutherland-Hodgman clip of a convex polygon against a cell rectangle.
  static double clipped_area(const std::vector<std::array<double, 2>>& poly,
                             double x0, double x1, double y0, double y1) {
    std::vector<std::array<double, 2>> cur = poly, next;
    auto clip = [&](auto inside, auto intersect) {
      next.clear();
      for (std::size_t i = 0; i < cur.size(); ++i) {
        const auto& a = cur[i];
        const auto& b = cur[(i + 1) % cur.size()];
        bool ia = inside(a), ib = inside(b);
        if (ia) next.push_back(a);
        if (ia != ib) next.push_back(intersect(a, b));
      }
      cur.swap(next);
    };
    auto lerp = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                   double t) -> std::array<double, 2> {
      return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t};
    };
    clip([&](const auto& p) { return p[0] >= x0; },
         [&](const auto& a, const auto& b) { return lerp(a, b, (x0 - a[0]) / (b[0] - a[0])); });
    if (cur.empty()) return 0;
    clip([&](const auto& p) { return p[0] <= x1; },
         [&](const auto& a, const auto& b) { return lerp(a, b, (x1 - a[0]) / (b[0] - a[0])); });
    if (cur.empty()) return 0;
    clip([&](const auto& p) { return p[1] >= y0; },
         [&](const auto& a, const auto& b) { return lerp(a, b, (y0 - a[1]) / (b[1] - a[1])); });
    if (cur.empty()) return 0;
    clip([&](const auto& p) { return p[1] <= y1; },
         [&](const auto& a, const auto& b) { return lerp(a, b, (y1 - a[1]) / (b[1] - a[1])); });
    if (cur.size() < 3) return 0;
    return shoelace(cur);
  }

  TreeMeasure tree_;
  double cells_;
  double straddle_ = 0;
  double dropped_ = 0;
};

}  // namespace scenery
