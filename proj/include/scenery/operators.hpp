#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scenery/distribution.hpp"
#include "scenery/parallel.hpp"
#include "scenery/rebin.hpp"
#include "scenery/source.hpp"

namespace scenery {

namespace detail {

// iterate leaves whose cell box meets [lo,hi], pruning on the first axis
template <class Fn>
inline void for_leaves_in_box(const TreeMeasure& t, const Vec& lo, const Vec& hi,
                              const Fn& fn) {
  double cells = double(upow(std::uint64_t(t.base), t.depth));
  double u0 = (lo[0] - t.window.lo(0)) / t.window.side() * cells;
  double u1 = (hi[0] - t.window.lo(0)) / t.window.side() * cells;
  std::uint64_t i0 = std::uint64_t(std::max(0.0, std::floor(u0)));
  CellKey start;
  start.ax = {i0, 0, 0};
  Vec clo, chi;
  for (auto it = t.leaves.lower_bound(start); it != t.leaves.end(); ++it) {
    if (double(it->first.ax[0]) > u1) break;
    cell_box(t.window, t.base, t.depth, it->first, clo, chi);
    bool meet = true;
    for (int a = 0; a < t.dim; ++a)
      if (chi[a] <= lo[a] || clo[a] >= hi[a]) {
        meet = false;
        break;
      }
    if (meet) fn(clo, chi, it->second);
  }
}

inline int zoom_source_depth(double half, double t, int base, int out_depth) {
  double need = (std::log(half) + t) / std::log(double(base));
  int extra = int(std::ceil(need - 1e-9));
  if (extra < 0) extra = 0;
  return out_depth + extra;
}

}  // namespace detail

// Raw zoom: the measure on [x-r, x+r]^d with r = e^{-t}, translated by -x,
// scaled by e^t, binned on the standard window at out_depth. Total mass equals
// the (leaf-uniform) mass of the zoom box; no normalization.
inline TreeMeasure zoom_raw(const TreeMeasure& tree, const Vec& x, double t,
                            int out_depth) {
  double r = std::exp(-t);
  double out_cell = 2.0 / double(upow(std::uint64_t(tree.base), out_depth));
  numeric_require(tree.leaf_side() * std::exp(t) <= out_cell * (1 + 1e-9),
                  "zoom: tree resolution insufficient for requested depth");
  Depositor dep(tree.base, tree.dim, out_depth, unit_window(tree.dim));
  Vec blo, bhi;
  for (int a = 0; a < tree.dim; ++a) {
    blo[a] = x[a] - r;
    bhi[a] = x[a] + r;
  }
  double et = std::exp(t);
  detail::for_leaves_in_box(tree, blo, bhi, [&](const Vec& clo, const Vec& chi, double m) {
    Vec ilo, ihi;
    for (int a = 0; a < tree.dim; ++a) {
      ilo[a] = (clo[a] - x[a]) * et;
      ihi[a] = (chi[a] - x[a]) * et;
    }
    dep.box(ilo, ihi, m);
  });
  TreeMeasure out = dep.take();
  out.rebin_error_bound += tree.rebin_error_bound;
  return out;
}

inline TreeMeasure zoom_raw(const MeasureSource& src, const Vec& x, double t,
                            int out_depth) {
  const Window& w = src.window();
  int base = src.base();
  int n_src = detail::zoom_source_depth(w.half, t, base, out_depth);
  if (!src.streamable() || n_src <= out_depth + 2) {
    int use = std::min(n_src, src.max_refine_depth());
    double leaf = w.side() / double(upow(std::uint64_t(base), use));
    double out_cell = 2.0 / double(upow(std::uint64_t(base), out_depth));
    numeric_require(leaf * std::exp(t) <= out_cell * (1 + 1e-9),
                    "zoom: source resolution budget " +
                        std::to_string(src.max_refine_depth()) + " below required depth " +
                        std::to_string(n_src));
    return zoom_raw(*src.refine_shared(use), x, t, out_depth);
  }
  // deep zoom on a streamable source: refine only the cells meeting the box
  double r = std::exp(-t);
  int anchor = std::min(n_src - out_depth, int(std::floor((std::log(w.half) + t) /
                                                          std::log(double(base)))));
  if (anchor < 0) anchor = 0;
  numeric_require(n_src <= src.max_refine_depth(),
                  "zoom: required depth " + std::to_string(n_src) +
                      " exceeds resolution budget " +
                      std::to_string(src.max_refine_depth()));
  double et = std::exp(t);
  double cells = double(upow(std::uint64_t(base), anchor));
  double cell_side = w.side() / cells;
  Depositor dep(base, src.dim(), out_depth, unit_window(src.dim()));
  // per-axis anchor cell ranges covering the box
  std::array<std::vector<std::uint64_t>, kMaxDim> idx;
  for (int a = 0; a < src.dim(); ++a) {
    double u0 = (x[a] - r - w.lo(a)) / cell_side;
    double u1 = (x[a] + r - w.lo(a)) / cell_side;
    std::int64_t i0 = std::int64_t(std::floor(u0));
    std::int64_t i1 = std::int64_t(std::ceil(u1)) - 1;
    for (std::int64_t i = std::max<std::int64_t>(0, i0);
         i <= std::min<std::int64_t>(std::int64_t(cells) - 1, i1); ++i)
      idx[a].push_back(std::uint64_t(i));
    if (idx[a].empty()) return dep.take();
  }
  int rel = n_src - anchor;
  std::array<std::size_t, kMaxDim> pick{0, 0, 0};
  for (;;) {
    CellKey cell;
    for (int a = 0; a < src.dim(); ++a) cell.ax[a] = idx[a][pick[a]];
    PointDigits path = key_to_digits(cell, base, anchor, src.dim());
    double pm = src.path_mass(path, anchor);
    if (pm > 0) {
      TreeMeasure sub = src.refine_conditional(path, anchor, rel);
      Vec cell_lo;
      for (int a = 0; a < src.dim(); ++a)
        cell_lo[a] = w.lo(a) + cell_side * double(cell.ax[a]);
      double sub_side = cell_side / double(upow(std::uint64_t(base), rel));
      for (const auto& [k, m] : sub.leaves) {
        Vec ilo, ihi;
        for (int a = 0; a < src.dim(); ++a) {
          double lo = cell_lo[a] + sub_side * double(k.ax[a]);
          ilo[a] = (lo - x[a]) * et;
          ihi[a] = (lo + sub_side - x[a]) * et;
        }
        dep.box(ilo, ihi, pm * m);
      }
    }
    int a = 0;
    while (a < src.dim() && ++pick[a] == idx[a].size()) pick[a++] = 0;
    if (a == src.dim()) break;
  }
  return dep.take();
}

// Scenery frame at (x, t): zoom box-normalized to total mass 1 on B_1.
template <class M>
inline TreeMeasure translate_rescale(const M& mu, const Vec& x, double t, int out_depth,
                                     Norm mode = Norm::box) {
  (void)mode;  // on the standard window star and box coincide
  TreeMeasure raw = zoom_raw(mu, x, t, out_depth);
  numeric_require(raw.total > 0, "translate_rescale: empty scenery window");
  double total = raw.total;
  double bound = raw.rebin_error_bound / total;
  TreeMeasure out = scale_tree(std::move(raw), 1.0 / total);
  out.rebin_error_bound = bound;
  return out;
}

// The alpha-weighted zoom e^{alpha t} S_t(T_x mu) restricted to B_1; carries
// total mass e^{alpha t} * mu(zoom box), deliberately unnormalized.
template <class M>
inline TreeMeasure alpha_rescale(const M& mu, const Vec& x, double t, double alpha,
                                 int out_depth) {
  TreeMeasure raw = zoom_raw(mu, x, t, out_depth);
  return scale_tree(std::move(raw), std::exp(alpha * t));
}

inline MassWithBound ball_mass(const TreeMeasure& t, const Vec& x, double r) {
  numeric_require(r > 0, "ball_mass: radius must be positive");
  Vec lo, hi;
  for (int a = 0; a < t.dim; ++a) {
    lo[a] = x[a] - r;
    hi[a] = x[a] + r;
  }
  return box_mass(t, lo, hi);
}

inline MassWithBound ball_mass(const MeasureSource& src, const Vec& x, double r,
                               int depth) {
  return ball_mass(*src.refine_shared(depth), x, r);
}

struct SecondOrderDensity {
  double value = 0;           // (1/T) integral of e^{alpha t} mu(B_{e^-t}(x)) dt
  bool diverging = false;     // running average drifted > 10% over the last half
  double error_bound = 0;     // from leaf-uniform ball masses
  std::vector<std::pair<double, double>> series;  // (t, running average)
};

template <class M>
inline SecondOrderDensity second_order_density(const M& mu, const Vec& x, double alpha,
                                               double T, double t_step) {
  require(T > 0 && t_step > 0 && t_step <= T, "second_order_density: bad time grid");
  SecondOrderDensity out;
  std::vector<double> ts, gs;
  double ebound = 0;
  for (double t = 0;; t += t_step) {
    if (t > T + 1e-12) break;
    double tt = std::min(t, T);
    MassWithBound m = ball_mass(mu, x, std::exp(-tt));
    double g = std::exp(alpha * tt) * m.value;
    ebound = std::max(ebound, std::exp(alpha * tt) * m.bound);
    ts.push_back(tt);
    gs.push_back(g);
    if (tt >= T) break;
  }
  numeric_require(ts.size() >= 2, "second_order_density: time grid too coarse");
  // trapezoid cumulative; running average at each grid point
  double acc = 0;
  out.series.push_back({ts[0], gs[0]});
  for (std::size_t i = 1; i < ts.size(); ++i) {
    acc += 0.5 * (gs[i] + gs[i - 1]) * (ts[i] - ts[i - 1]);
    out.series.push_back({ts[i], acc / ts[i]});
  }
  out.value = out.series.back().second;
  out.error_bound = ebound;
  double half = out.series[out.series.size() / 2].second;
  out.diverging =
      std::abs(out.value - half) > 0.1 * std::max(std::abs(out.value), 1e-12);
  return out;
}

// Diffusion of mu by its own translates: atoms T_x(mu) box-normalized on the
// standard window, x drawn from the conditional measure on U, each sample from
// its own derived stream.
inline EmpiricalDistribution diffuse(const MeasureSource& src, const Vec& u_lo,
                                     const Vec& u_hi, int n_samples, int out_depth,
                                     std::uint64_t seed, int sample_depth = 0) {
  require(n_samples >= 1, "diffuse: need at least one sample");
  if (sample_depth <= 0) sample_depth = out_depth + 2;
  sample_depth = std::min(sample_depth, src.max_refine_depth());
  TreeMeasure restricted = restrict_box(*src.refine_shared(sample_depth), u_lo, u_hi);
  // cumulative over leaves for inverse-cdf sampling
  std::vector<std::pair<CellKey, double>> cum;
  cum.reserve(restricted.leaves.size());
  double acc = 0;
  for (const auto& [k, m] : restricted.leaves) {
    acc += m;
    cum.push_back({k, acc});
  }
  std::vector<DistAtom> atoms(n_samples);
  parallel_for(std::size_t(n_samples), [&](std::size_t i) {
    Rng rng = derive_stream(seed, i);
    double u = rng.uniform() * acc;
    std::size_t lo = 0, hi = cum.size() - 1;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (cum[mid].second <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    PointDigits p = key_to_digits(cum[lo].first, src.base(), sample_depth, src.dim());
    Vec x = digits_to_point(src.window(), p, src.base());
    DistAtom a;
    a.w = 1.0 / n_samples;
    a.mu = std::make_shared<const TreeMeasure>(
        translate_rescale(src, x, 0.0, out_depth));
    a.pt = p;
    atoms[i] = a;
  });
  return make_empirical(std::move(atoms));
}

// Linear pushforward of a tree. Coordinate-tagged maps use exact digit
// arithmetic; rank-1 maps deposit exact image intervals; 2-d images deposit
// convex polygons; other shapes fall back to image bounding boxes.
inline TreeMeasure pushforward_linear(const TreeMeasure& t, const LinearMap& m,
                                      int out_depth,
                                      std::optional<Window> out_window = std::nullopt) {
  require(m.cols == t.dim, "pushforward: map arity must match the measure dimension");
  require(out_depth >= 0, "pushforward: bad depth");
  if (m.coord) {
    require(out_depth <= t.depth, "pushforward: depth exceeds the tree depth");
    const auto& axes = *m.coord;
    Window w;
    w.dim = m.rows;
    w.half = t.window.half;
    for (int r = 0; r < m.rows; ++r) w.center[r] = t.window.center[axes[r]];
    if (out_window) {
      require(*out_window == w, "pushforward: coordinate output window mismatch");
    }
    TreeMeasure out = make_tree(t.base, m.rows, out_depth, w);
    out.rebin_error_bound = t.rebin_error_bound;
    for (const auto& [k, mass] : t.leaves) {
      CellKey at = key_prefix(k, t.base, t.depth, out_depth);
      CellKey nk;
      for (int r = 0; r < m.rows; ++r) nk.ax[r] = at.ax[axes[r]];
      out.add(nk, mass);
    }
    return out;
  }
  Window w;
  if (out_window) {
    w = *out_window;
  } else {
    w.dim = m.rows;
    double half = 0;
    for (int r = 0; r < m.rows; ++r) {
      double lo = 0, hi = 0;
      for (int c = 0; c < t.dim; ++c) {
        double a = m.at(r, c);
        lo += std::min(a * t.window.lo(c), a * t.window.hi(c));
        hi += std::max(a * t.window.lo(c), a * t.window.hi(c));
      }
      w.center[r] = 0.5 * (lo + hi);
      half = std::max(half, 0.5 * (hi - lo));
    }
    w.half = half > 0 ? half : 1.0;
  }
  Depositor dep(t.base, m.rows, out_depth, w);
  Vec clo, chi;
  const bool poly2 = (m.rows == 2 && t.dim == 2);
  for (const auto& [k, mass] : t.leaves) {
    cell_box(t.window, t.base, t.depth, k, clo, chi);
    if (m.rows == 1) {
      double lo = 0, hi = 0;
      for (int c = 0; c < t.dim; ++c) {
        double a = m.at(0, c);
        lo += std::min(a * clo[c], a * chi[c]);
        hi += std::max(a * clo[c], a * chi[c]);
      }
      dep.box(Vec{lo, 0, 0}, Vec{hi, 0, 0}, mass);
    } else if (poly2) {
      // image of the cell is a parallelogram
      std::vector<std::array<double, 2>> pts;
      const double cx[4] = {clo[0], chi[0], chi[0], clo[0]};
      const double cy[4] = {clo[1], clo[1], chi[1], chi[1]};
      for (int i = 0; i < 4; ++i) {
        double px = m.at(0, 0) * cx[i] + m.at(0, 1) * cy[i];
        double py = m.at(1, 0) * cx[i] + m.at(1, 1) * cy[i];
        pts.push_back({px, py});
      }
      dep.polygon(pts, mass);
    } else {
      Vec ilo, ihi;
      for (int r = 0; r < m.rows; ++r) {
        double lo = 0, hi = 0;
        for (int c = 0; c < t.dim; ++c) {
          double a = m.at(r, c);
          lo += std::min(a * clo[c], a * chi[c]);
          hi += std::max(a * clo[c], a * chi[c]);
        }
        ilo[r] = lo;
        ihi[r] = hi;
      }
      dep.box(ilo, ihi, mass);
    }
  }
  TreeMeasure out = dep.take();
  out.rebin_error_bound += t.rebin_error_bound;
  return out;
}

// Image of c_a * A + c_b * B for independent one-dimensional A, B of possibly
// different bases (the rank-one pushforward of the product measure), binned in
// out_base at out_depth.
inline TreeMeasure sum_convolution(const MeasureSource& a, const MeasureSource& b,
                                   double ca, double cb, int depth_a, int depth_b,
                                   int out_base, int out_depth,
                                   std::optional<Window> out_window = std::nullopt) {
  require(a.dim() == 1 && b.dim() == 1, "sum_convolution: sources must be 1-d");
  auto ta = a.refine_shared(depth_a);
  auto tb = b.refine_shared(depth_b);
  require(ta->leaves.size() * tb->leaves.size() <= 50'000'000,
          "sum_convolution: pair count too large; lower the depths");
  Window w;
  if (out_window) {
    w = *out_window;
  } else {
    double lo = std::min(ca * a.window().lo(0), ca * a.window().hi(0)) +
                std::min(cb * b.window().lo(0), cb * b.window().hi(0));
    double hi = std::max(ca * a.window().lo(0), ca * a.window().hi(0)) +
                std::max(cb * b.window().lo(0), cb * b.window().hi(0));
    w.dim = 1;
    w.center[0] = 0.5 * (lo + hi);
    w.half = 0.5 * (hi - lo) > 0 ? 0.5 * (hi - lo) : 1.0;
  }
  Depositor dep(out_base, 1, out_depth, w);
  Vec alo, ahi, blo, bhi;
  std::vector<std::array<double, 3>> bs;  // lo, hi, mass of B leaves
  for (const auto& [k, m] : tb->leaves) {
    cell_box(b.window(), b.base(), depth_b, k, blo, bhi);
    bs.push_back({blo[0], bhi[0], m});
  }
  for (const auto& [k, ma] : ta->leaves) {
    cell_box(a.window(), a.base(), depth_a, k, alo, ahi);
    double pa_lo = std::min(ca * alo[0], ca * ahi[0]);
    double pa_hi = std::max(ca * alo[0], ca * ahi[0]);
    for (const auto& [l, h, mb] : bs) {
      double lo = pa_lo + std::min(cb * l, cb * h);
      double hi = pa_hi + std::max(cb * l, cb * h);
      dep.box(Vec{lo, 0, 0}, Vec{hi, 0, 0}, ma * mb);
    }
  }
  TreeMeasure out = dep.take();
  numeric_require(out.total > 0, "sum_convolution: empty image");
  double bound = out.rebin_error_bound / out.total;
  out = scale_tree(std::move(out), 1.0 / out.total);
  out.rebin_error_bound = bound;
  return out;
}

}  // namespace scenery
