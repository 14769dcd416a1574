#pragma once

#include <map>
#include <set>
#include <utility>
#include <vector>

#include "scenery/cell.hpp"
#include "scenery/common.hpp"

namespace scenery {

// Sparse mass assignment to the depth-level cells of a window. Zero cells are
// never stored. `rebin_error_bound` accumulates the worst-case mass that
// straddling leaves may have misplaced during geometric re-binning; it is 0 for
// exactly grid-aligned histories.
struct TreeMeasure {
  int base = 2;
  int dim = 1;
  int depth = 0;
  Window window;
  std::map<CellKey, double> leaves;
  double total = 0;
  double rebin_error_bound = 0;

  void add(const CellKey& k, double mass) {
    if (mass <= 0) return;
    leaves[k] += mass;
    total += mass;
  }

  double leaf_side() const {
    return window.side() / double(upow(std::uint64_t(base), depth));
  }
};

inline TreeMeasure make_tree(int base, int dim, int depth, const Window& w) {
  require(base >= 2, "base must be >= 2");
  require(dim >= 1 && dim <= kMaxDim, "dim must be 1..3");
  require(dim == w.dim, "window dimension mismatch");
  require(depth >= 0 && depth <= max_depth_for_base(base),
          "depth exceeds representable digits for this base");
  TreeMeasure t;
  t.base = base;
  t.dim = dim;
  t.depth = depth;
  t.window = w;
  return t;
}

inline TreeMeasure scale_tree(TreeMeasure t, double c) {
  require(c >= 0, "scale factor must be nonnegative");
  for (auto& [k, m] : t.leaves) m *= c;
  t.total *= c;
  t.rebin_error_bound *= c;
  return t;
}

inline TreeMeasure coarsen(const TreeMeasure& t, int new_depth) {
  require(new_depth >= 0 && new_depth <= t.depth, "coarsen: bad target depth");
  if (new_depth == t.depth) return t;
  TreeMeasure r = make_tree(t.base, t.dim, new_depth, t.window);
  r.rebin_error_bound = t.rebin_error_bound;
  for (const auto& [k, m] : t.leaves) r.add(key_prefix(k, t.base, t.depth, new_depth), m);
  return r;
}

// Mass of a cell at key_depth <= tree depth. Exact cell summation.
inline double cell_mass(const TreeMeasure& t, const CellKey& key, int key_depth) {
  require(key_depth >= 0 && key_depth <= t.depth, "cell_mass: bad cell depth");
  if (key_depth == t.depth) {
    auto it = t.leaves.find(key);
    return it == t.leaves.end() ? 0.0 : it->second;
  }
  std::uint64_t span = upow(std::uint64_t(t.base), t.depth - key_depth);
  CellKey lo;
  lo.ax = {key.ax[0] * span, 0, 0};
  double acc = 0;
  for (auto it = t.leaves.lower_bound(lo); it != t.leaves.end(); ++it) {
    if (it->first.ax[0] >= (key.ax[0] + 1) * span) break;
    bool in = true;
    for (int a = 1; a < t.dim; ++a)
      if (it->first.ax[a] / span != key.ax[a]) {
        in = false;
        break;
      }
    if (in) acc += it->second;
  }
  return acc;
}

// Masses of the cells containing a point, depths 1..n.
inline std::vector<double> path_masses(const TreeMeasure& t, const PointDigits& p, int n) {
  require(n <= t.depth, "path_masses: tree shallower than requested depth");
  require(n <= p.depth(), "path_masses: point expansion too short");
  require(p.dim == t.dim, "path_masses: dimension mismatch");
  CellKey full = digits_to_key(p, t.base, n);
  std::vector<double> out(n, 0.0);
  for (const auto& [k, m] : t.leaves) {
    CellKey at_n = key_prefix(k, t.base, t.depth, n);
    // depth of the longest common cell with the point, capped at n
    int match = n;
    for (int a = 0; a < t.dim; ++a) {
      std::uint64_t x = at_n.ax[a], y = full.ax[a];
      int lvl = n;
      while (lvl > 0 && x != y) {
        x /= std::uint64_t(t.base);
        y /= std::uint64_t(t.base);
        --lvl;
      }
      match = std::min(match, lvl);
    }
    for (int j = 0; j < match; ++j) out[j] += m;
  }
  return out;
}

struct MassWithBound {
  double value = 0;
  double bound = 0;  // straddling-leaf error bound
};

namespace detail {
inline double clamp01(double x) { return x < 0 ? 0 : (x > 1 ? 1 : x); }
}  // namespace detail

// Mass inside an axis box, exact over fully contained leaves, leaf-uniform on
// straddling ones; the bound is the total mass of straddling leaves.
inline MassWithBound box_mass(const TreeMeasure& t, const Vec& lo, const Vec& hi) {
  MassWithBound r;
  const double snap = 1e-12 * t.window.side();
  Vec clo, chi;
  for (const auto& [k, m] : t.leaves) {
    cell_box(t.window, t.base, t.depth, k, clo, chi);
    double frac = 1;
    bool partial = false;
    for (int a = 0; a < t.dim && frac > 0; ++a) {
      double l = std::max(clo[a], lo[a]);
      double h = std::min(chi[a], hi[a]);
      double side = chi[a] - clo[a];
      double f = detail::clamp01((h - l) / side);
      if (f > 1 - snap / side) f = 1;
      if (f < snap / side) f = 0;
      if (f > 0 && f < 1) partial = true;
      frac *= f;
    }
    if (frac <= 0) continue;
    r.value += m * frac;
    if (partial) r.bound += m;
  }
  return r;
}

// Conditional measure on an axis box: mass outside zeroed, then renormalized.
inline TreeMeasure restrict_box(const TreeMeasure& t, const Vec& lo, const Vec& hi) {
  TreeMeasure r = make_tree(t.base, t.dim, t.depth, t.window);
  const double snap = 1e-12 * t.window.side();
  Vec clo, chi;
  double bound = t.rebin_error_bound;
  for (const auto& [k, m] : t.leaves) {
    cell_box(t.window, t.base, t.depth, k, clo, chi);
    double frac = 1;
    bool partial = false;
    for (int a = 0; a < t.dim && frac > 0; ++a) {
      double l = std::max(clo[a], lo[a]);
      double h = std::min(chi[a], hi[a]);
      double side = chi[a] - clo[a];
      double f = detail::clamp01((h - l) / side);
      if (f > 1 - snap / side) f = 1;
      if (f < snap / side) f = 0;
      if (f > 0 && f < 1) partial = true;
      frac *= f;
    }
    if (frac <= 0) continue;
    r.add(k, m * frac);
    if (partial) bound += m;
  }
  numeric_require(r.total > 0, "restrict_box: conditioning on a mass-zero region");
  double inv = 1.0 / r.total;
  r = scale_tree(std::move(r), inv);
  r.rebin_error_bound = bound * inv;
  return r;
}

// Conditional measure on a union of cells at cell_depth. Exact.
inline TreeMeasure restrict_cells(const TreeMeasure& t, int cell_depth,
                                  const std::set<CellKey>& cells) {
  require(cell_depth >= 0 && cell_depth <= t.depth, "restrict_cells: bad depth");
  TreeMeasure r = make_tree(t.base, t.dim, t.depth, t.window);
  r.rebin_error_bound = t.rebin_error_bound;
  for (const auto& [k, m] : t.leaves)
    if (cells.count(key_prefix(k, t.base, t.depth, cell_depth))) r.add(k, m);
  numeric_require(r.total > 0, "restrict_cells: conditioning on a mass-zero region");
  double inv = 1.0 / r.total;
  double bound = r.rebin_error_bound * inv;
  r = scale_tree(std::move(r), inv);
  r.rebin_error_bound = bound;
  return r;
}

enum class Norm { star, box };

// star: scale so the standard unit ball B_1 carries mass 1, keep all leaves.
// box: additionally drop mass outside B_1.
inline TreeMeasure normalize(const TreeMeasure& t, Norm mode) {
  Vec lo{-1, -1, -1}, hi{1, 1, 1};
  MassWithBound b1 = box_mass(t, lo, hi);
  numeric_require(b1.value > 0, "normalize: measure has no mass on the unit ball");
  double inv = 1.0 / b1.value;
  if (mode == Norm::star) {
    TreeMeasure r = scale_tree(t, inv);
    r.rebin_error_bound = (t.rebin_error_bound + b1.bound) * inv;
    return r;
  }
  TreeMeasure r = make_tree(t.base, t.dim, t.depth, t.window);
  const double snap = 1e-12 * t.window.side();
  Vec clo, chi;
  for (const auto& [k, m] : t.leaves) {
    cell_box(t.window, t.base, t.depth, k, clo, chi);
    double frac = 1;
    for (int a = 0; a < t.dim && frac > 0; ++a) {
      double l = std::max(clo[a], lo[a]);
      double h = std::min(chi[a], hi[a]);
      double side = chi[a] - clo[a];
      double f = detail::clamp01((h - l) / side);
      if (f > 1 - snap / side) f = 1;
      if (f < snap / side) f = 0;
      frac *= f;
    }
    if (frac > 0) r.add(k, m * frac * inv);
  }
  r.rebin_error_bound = (t.rebin_error_bound + b1.bound) * inv;
  return r;
}

// Reinterpret groups of `group` base-b digits as single base-b^group digits.
// The packed axis keys are numerically identical, so this is exact.
inline TreeMeasure rebase_tree(const TreeMeasure& t, int group) {
  require(group >= 1, "rebase: group must be >= 1");
  require(t.depth % group == 0, "rebase: depth must be a multiple of the group size");
  std::uint64_t nb = upow(std::uint64_t(t.base), group);
  require(nb <= (std::uint64_t(1) << 31), "rebase: grouped base too large");
  TreeMeasure r = make_tree(int(nb), t.dim, t.depth / group, t.window);
  r.leaves = t.leaves;
  r.total = t.total;
  r.rebin_error_bound = t.rebin_error_bound;
  return r;
}

// Mass of leaves touching the window boundary.
inline double boundary_mass(const TreeMeasure& t) {
  std::uint64_t top = upow(std::uint64_t(t.base), t.depth) - 1;
  double acc = 0;
  for (const auto& [k, m] : t.leaves) {
    bool touch = false;
    for (int a = 0; a < t.dim; ++a)
      if (k.ax[a] == 0 || k.ax[a] == top) {
        touch = true;
        break;
      }
    if (touch) acc += m;
  }
  return acc;
}

// Leaf-exact equality of grids and masses (tolerance on masses only).
inline bool tree_equal(const TreeMeasure& a, const TreeMeasure& b, double tol = 0.0) {
  if (a.base != b.base || a.dim != b.dim || a.depth != b.depth) return false;
  if (!(a.window == b.window)) return false;
  if (a.leaves.size() != b.leaves.size()) return false;
  auto ia = a.leaves.begin();
  auto ib = b.leaves.begin();
  for (; ia != a.leaves.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (std::abs(ia->second - ib->second) > tol) return false;
  }
  return true;
}

inline double tree_l1_distance(const TreeMeasure& a, const TreeMeasure& b) {
  require(a.base == b.base && a.dim == b.dim && a.depth == b.depth &&
              a.window == b.window,
          "tree_l1_distance: grids differ");
  double acc = 0;
  auto ia = a.leaves.begin();
  auto ib = b.leaves.begin();
  while (ia != a.leaves.end() || ib != b.leaves.end()) {
    if (ib == b.leaves.end() || (ia != a.leaves.end() && ia->first < ib->first)) {
      acc += std::abs(ia->second);
      ++ia;
    } else if (ia == a.leaves.end() || ib->first < ia->first) {
      acc += std::abs(ib->second);
      ++ib;
    } else {
      acc += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return acc;
}

}  // namespace scenery
