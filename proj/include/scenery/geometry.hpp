#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenery/dimension.hpp"
#include "scenery/distribution.hpp"
#include "scenery/dynamics.hpp"
#include "scenery/operators.hpp"
#include "scenery/parallel.hpp"

namespace scenery {

// ---------------------------------------------------------------------------
// projection

inline TreeMeasure project(const TreeMeasure& t, const LinearMap& m, int out_depth,
                           std::optional<Window> out_window = std::nullopt) {
  return pushforward_linear(t, m, out_depth, out_window);
}

// Image of a source under a linear map, streaming the inner leaves at a depth
// fine enough that every image fits inside one output cell up to one split.
inline TreeMeasure project(const MeasureSource& src, const LinearMap& m, int out_depth,
                           std::optional<Window> out_window = std::nullopt) {
  require(m.cols == src.dim(), "project: map arity must match the source dimension");
  if (m.coord && !out_window) {
    if (auto p = src.project_axes(*m.coord)) return p->refine(out_depth);
  }
  Window w = out_window ? *out_window : SmoothPushImpl::image_window(src.impl(), m);
  double rowsum = 0;
  for (int r = 0; r < m.rows; ++r) {
    double s = 0;
    for (int c = 0; c < m.cols; ++c) s += std::abs(m.at(r, c));
    rowsum = std::max(rowsum, s);
  }
  double ratio = rowsum * src.window().half / w.half;
  int extra = ratio > 1 ? int(std::ceil(std::log(ratio) / std::log(double(src.base())) -
                                        1e-9))
                        : 0;
  int inner = out_depth + extra + 1;
  numeric_require(inner <= src.max_refine_depth(),
                  "project: required inner depth " + std::to_string(inner) +
                      " exceeds resolution budget " +
                      std::to_string(src.max_refine_depth()));
  Depositor dep(src.base(), m.rows, out_depth, w);
  const Window& iw = src.window();
  const bool poly2 = (m.rows == 2 && src.dim() == 2);
  Vec clo, chi;
  src.for_each_leaf(inner, [&](const CellKey& k, double mass) {
    cell_box(iw, src.base(), inner, k, clo, chi);
    if (m.coord) {
      Vec ilo, ihi;
      for (int r = 0; r < m.rows; ++r) {
        ilo[r] = clo[(*m.coord)[r]];
        ihi[r] = chi[(*m.coord)[r]];
      }
      dep.box(ilo, ihi, mass);
    } else if (m.rows == 1) {
      double lo = 0, hi = 0;
      for (int c = 0; c < src.dim(); ++c) {
        double a = m.at(0, c);
        lo += std::min(a * clo[c], a * chi[c]);
        hi += std::max(a * clo[c], a * chi[c]);
      }
      dep.box(Vec{lo, 0, 0}, Vec{hi, 0, 0}, mass);
    } else if (poly2) {
      std::vector<std::array<double, 2>> pts;
      const double cx[4] = {clo[0], chi[0], chi[0], clo[0]};
      const double cy[4] = {clo[1], clo[1], chi[1], chi[1]};
      for (int i = 0; i < 4; ++i)
        pts.push_back({m.at(0, 0) * cx[i] + m.at(0, 1) * cy[i],
                       m.at(1, 0) * cx[i] + m.at(1, 1) * cy[i]});
      dep.polygon(pts, mass);
    } else {
      Vec ilo, ihi;
      for (int r = 0; r < m.rows; ++r) {
        double lo = 0, hi = 0;
        for (int c = 0; c < src.dim(); ++c) {
          double a = m.at(r, c);
          lo += std::min(a * clo[c], a * chi[c]);
          hi += std::max(a * clo[c], a * chi[c]);
        }
        ilo[r] = lo;
        ihi[r] = hi;
      }
      dep.box(ilo, ihi, mass);
    }
  });
  return dep.take();
}

// ---------------------------------------------------------------------------
// projection-dimension profiles

struct ProfileEntry {
  LinearMap map;
  DimensionEstimate est;
};

inline std::vector<ProfileEntry> projection_dimension_profile(
    const MeasureSource& src, const std::vector<LinearMap>& maps, int n_min,
    int n_max) {
  require(!maps.empty(), "profile: no maps given");
  std::vector<ProfileEntry> out(maps.size());
  parallel_for(maps.size(), [&](std::size_t i) {
    const LinearMap& m = maps[i];
    DimensionEstimate e;
    std::optional<MeasureSource> p;
    if (m.coord) p = src.project_axes(*m.coord);
    if (p)
      e = entropy_dimension(*p, n_min, n_max);
    else
      e = entropy_dimension(project(src, m, n_max), n_min, n_max);
    out[i] = {m, e};
  });
  return out;
}

// Ensemble version: the weighted atom average of per-measure estimates, one
// entry per map. Atoms too shallow for the requested range are excluded and
// their weight reported.
struct EnsembleProfileEntry {
  LinearMap map;
  double value = 0;
  double std_error = 0;
  double excluded_weight = 0;
};

inline std::vector<EnsembleProfileEntry> projection_dimension_profile(
    const EmpiricalDistribution& p, const std::vector<LinearMap>& maps, int n_min,
    int n_max) {
  require(!maps.empty(), "profile: no maps given");
  std::vector<EnsembleProfileEntry> out(maps.size());
  parallel_for(maps.size(), [&](std::size_t i) {
    const LinearMap& m = maps[i];
    EnsembleProfileEntry e;
    e.map = m;
    double wsum = 0, mean = 0, se_in = 0;
    std::vector<std::pair<double, double>> vals;
    for (const auto& a : p.atoms) {
      int nm = std::min(n_max, a.mu->depth);
      if (nm < n_min + 2) {
        e.excluded_weight += a.w;
        continue;
      }
      DimensionEstimate d =
          entropy_dimension(project(*a.mu, m, nm), std::min(n_min, nm - 2), nm);
      vals.push_back({a.w, d.value});
      wsum += a.w;
      mean += a.w * d.value;
      se_in += a.w * d.std_error;
    }
    numeric_require(wsum > 0, "profile: every ensemble atom was too shallow");
    mean /= wsum;
    se_in /= wsum;
    double var = 0;
    for (const auto& [w, v] : vals) var += w * (v - mean) * (v - mean);
    var /= wsum;
    e.value = mean;
    e.std_error = std::sqrt(var / double(vals.size()) + se_in * se_in);
    out[i] = e;
  });
  return out;
}

// ---------------------------------------------------------------------------
// fiber (conditional) measures

namespace detail {

inline std::vector<int> complement_axes(const std::vector<int>& sel, int dim) {
  std::vector<int> out;
  for (int a = 0; a < dim; ++a)
    if (std::find(sel.begin(), sel.end(), a) == sel.end()) out.push_back(a);
  return out;
}

inline Window sub_window(const Window& w, const std::vector<int>& axes) {
  Window o;
  o.dim = int(axes.size());
  o.half = w.half;
  for (std::size_t i = 0; i < axes.size(); ++i) o.center[i] = w.center[axes[i]];
  return o;
}

// mass of the selected-axes column of x at the given depth
inline double column_mass(const TreeMeasure& t, const std::vector<int>& sel,
                          const PointDigits& x, int depth) {
  CellKey xk = digits_to_key(x, t.base, depth);
  double s = 0;
  for (const auto& [k, m] : t.leaves) {
    CellKey p = key_prefix(k, t.base, t.depth, depth);
    bool ok = true;
    for (int a : sel)
      if (p.ax[a] != xk.ax[a]) {
        ok = false;
        break;
      }
    if (ok) s += m;
  }
  return s;
}

// clip a convex polygon against the half-plane nx*x + ny*y <= c
inline void clip_halfplane(std::vector<std::array<double, 2>>& poly, double nx,
                           double ny, double c) {
  if (poly.empty()) return;
  std::vector<std::array<double, 2>> out;
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    double da = nx * a[0] + ny * a[1] - c;
    double db = nx * b[0] + ny * b[1] - c;
    if (da <= 0) out.push_back(a);
    if ((da < 0 && db > 0) || (da > 0 && db < 0)) {
      double s = da / (da - db);
      out.push_back({a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])});
    }
  }
  poly = std::move(out);
}

inline double polygon_area(const std::vector<std::array<double, 2>>& poly) {
  if (poly.size() < 3) return 0;
  double s = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    s += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * std::abs(s);
}

}  // namespace detail

// Conditional measure of the column {y : y_sel = x_sel to slab_depth digits},
// marginalized onto the complementary axes. Exact: streamable sources walk
// only the matching branches; everything else filters the refined tree.
inline TreeMeasure fiber_measure_coordinate(const MeasureSource& src,
                                            const PointDigits& x,
                                            const std::vector<int>& sel,
                                            int slab_depth) {
  require(!sel.empty() && int(sel.size()) < src.dim(),
          "fiber: selection must be a proper nonempty axis subset");
  require(x.dim == src.dim(), "fiber: point dimension mismatch");
  require(x.depth() >= slab_depth, "fiber: point expansion too short");
  std::vector<int> comp = detail::complement_axes(sel, src.dim());
  TreeMeasure out = make_tree(src.base(), int(comp.size()), slab_depth,
                              detail::sub_window(src.window(), comp));
  if (src.streamable()) {
    const SourceImpl& s = src.impl();
    struct Rec {
      const SourceImpl& s;
      const PointDigits& x;
      const std::vector<int>& sel;
      const std::vector<int>& comp;
      int depth;
      TreeMeasure& out;
      void run(const DescState& st, int level, CellKey key, double mass) {
        if (level == depth) {
          out.add(key, mass);
          return;
        }
        s.children(st, level, [&](const int* dg, double f, const DescState& cs) {
          if (f <= 0) return;
          for (int a : sel)
            if (dg[a] != x.d[a][level]) return;
          CellKey nk = key;
          for (std::size_t i = 0; i < comp.size(); ++i)
            nk.ax[i] = nk.ax[i] * std::uint64_t(s.base()) + std::uint64_t(dg[comp[i]]);
          run(cs, level + 1, nk, mass * f);
        });
      }
    };
    Rec{s, x, sel, comp, slab_depth, out}.run(DescState{}, 0, CellKey{}, 1.0);
  } else {
    auto t = src.refine_shared(slab_depth);
    CellKey xk = digits_to_key(x, src.base(), slab_depth);
    for (const auto& [k, m] : t->leaves) {
      bool ok = true;
      for (int a : sel)
        if (k.ax[a] != xk.ax[a]) {
          ok = false;
          break;
        }
      if (!ok) continue;
      CellKey nk;
      for (std::size_t i = 0; i < comp.size(); ++i) nk.ax[i] = k.ax[comp[i]];
      out.add(nk, m);
    }
    out.rebin_error_bound = t->rebin_error_bound;
  }
  if (out.total <= 0) {
    int best = 0;
    auto t = src.refine_shared(std::min(slab_depth, src.max_refine_depth()));
    for (int d = slab_depth - 1; d >= 1; --d)
      if (detail::column_mass(*t, sel, x, d) > 0) {
        best = d;
        break;
      }
    throw NumericalError("fiber: empty column at depth " + std::to_string(slab_depth) +
                         "; largest nonempty slab depth is " + std::to_string(best));
  }
  double inv = 1.0 / out.total;
  double bound = out.rebin_error_bound * inv;
  out = scale_tree(std::move(out), inv);
  out.rebin_error_bound = bound;
  return out;
}

// Slab conditional for a non-coordinate rank-1 map on a 2-d tree: restrict to
// {|pi y - pi x| <= eps} with eps = base^-slab_depth, then push onto the fiber
// direction (the kernel of pi). Leaf-uniform within leaves.
inline TreeMeasure fiber_measure_slab(const TreeMeasure& t, const Vec& x,
                                      const LinearMap& m, int slab_depth) {
  require(t.dim == 2 && m.rows == 1 && m.cols == 2,
          "fiber: slab conditioning handles rank-1 maps of planar measures");
  double a0 = m.at(0, 0), a1 = m.at(0, 1);
  double nrm = std::hypot(a0, a1);
  require(nrm > 0, "fiber: zero map has no fibers");
  double v0 = -a1 / nrm, v1 = a0 / nrm;  // unit kernel direction
  double px = a0 * x[0] + a1 * x[1];
  double eps = std::pow(double(t.base), -slab_depth);
  Window w;
  w.dim = 1;
  w.center[0] = v0 * x[0] + v1 * x[1];
  w.half = t.window.half * (std::abs(v0) + std::abs(v1)) + eps;
  Depositor dep(t.base, 1, slab_depth, w);
  Vec clo, chi;
  auto strip_pass = [&](double e, bool deposit) {
    double got = 0;
    for (const auto& [k, mass] : t.leaves) {
      cell_box(t.window, t.base, t.depth, k, clo, chi);
      std::vector<std::array<double, 2>> poly = {
          {clo[0], clo[1]}, {chi[0], clo[1]}, {chi[0], chi[1]}, {clo[0], chi[1]}};
      double full = (chi[0] - clo[0]) * (chi[1] - clo[1]);
      detail::clip_halfplane(poly, a0, a1, px + e);
      detail::clip_halfplane(poly, -a0, -a1, -(px - e));
      double part = detail::polygon_area(poly);
      if (part <= 0) continue;
      double put = mass * part / full;
      got += put;
      if (!deposit) continue;
      double lo = 1e300, hi = -1e300;
      for (const auto& p : poly) {
        double s = v0 * p[0] + v1 * p[1];
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      dep.box(Vec{lo, 0, 0}, Vec{hi, 0, 0}, put);
    }
    return got;
  };
  double mass_in = strip_pass(eps, true);
  if (mass_in <= 0) {
    int best = 0;
    for (int d = slab_depth - 1; d >= 1; --d)
      if (strip_pass(std::pow(double(t.base), -d), false) > 0) {
        best = d;
        break;
      }
    throw NumericalError("fiber: empty slab at depth " + std::to_string(slab_depth) +
                         "; largest nonempty slab depth is " + std::to_string(best));
  }
  TreeMeasure out = dep.take();
  double inv = 1.0 / out.total;
  double bound = (out.rebin_error_bound + t.rebin_error_bound) * inv;
  out = scale_tree(std::move(out), inv);
  out.rebin_error_bound = bound;
  return out;
}

inline TreeMeasure fiber_measure(const MeasureSource& src, const PointDigits& x,
                                 const LinearMap& m, int slab_depth) {
  if (m.coord) return fiber_measure_coordinate(src, x, *m.coord, slab_depth);
  numeric_require(slab_depth <= src.max_refine_depth(),
                  "fiber: slab depth exceeds resolution budget");
  Vec pt = digits_to_point(src.window(), x, src.base());
  return fiber_measure_slab(*src.refine_shared(slab_depth), pt, m, slab_depth);
}

inline TreeMeasure fiber_measure(const TreeMeasure& t, const PointDigits& x,
                                 const LinearMap& m, int slab_depth) {
  if (m.coord) {
    MeasureSource s = frozen_source(t);
    return fiber_measure_coordinate(s, x, *m.coord, std::min(slab_depth, t.depth));
  }
  Vec pt = digits_to_point(t.window, x, t.base);
  return fiber_measure_slab(t, pt, m, slab_depth);
}

// ---------------------------------------------------------------------------
// dimension conservation

struct ConservationReport {
  DimensionEstimate total;
  DimensionEstimate image;
  std::vector<double> fiber_dims;
  double fiber_mean = 0;
  double fiber_se = 0;
  double fiber_gap = 0;  // sensitivity of the slab estimates to the slab depth
  double defect = 0;
  double defect_se = 0;
  std::string verdict;
};

inline ConservationReport conservation_report(const MeasureSource& src,
                                              const LinearMap& m, int n_samples,
                                              int n_min, int n_max, int slab_depth,
                                              std::uint64_t seed) {
  require(n_samples >= 1, "conservation: need at least one sample");
  ConservationReport rep;
  rep.total = entropy_dimension(src, n_min, n_max);
  std::optional<MeasureSource> proj;
  if (m.coord) proj = src.project_axes(*m.coord);
  if (proj)
    rep.image = entropy_dimension(*proj, n_min, n_max);
  else
    rep.image = entropy_dimension(project(src, m, n_max), n_min, n_max);

  int fiber_hi = std::min(n_max, slab_depth);
  int fiber_lo = std::min(n_min, std::max(1, fiber_hi - 2));
  std::shared_ptr<const TreeMeasure> flat;
  if (!m.coord) flat = src.refine_shared(std::min(src.max_refine_depth(),
                                                  std::max(n_max, slab_depth + 1)));
  rep.fiber_dims.resize(n_samples);
  std::vector<double> shallow(n_samples, 0);
  double se_sum = 0;
  std::vector<Rng> streams;
  for (int i = 0; i < n_samples; ++i)
    streams.push_back(derive_stream(seed, std::uint64_t(i)));
  for (int i = 0; i < n_samples; ++i) {
    PointDigits x = src.sample(slab_depth, streams[i]);
    TreeMeasure f = m.coord ? fiber_measure(src, x, m, slab_depth)
                            : fiber_measure_slab(
                                  *flat, digits_to_point(src.window(), x, src.base()),
                                  m, slab_depth);
    DimensionEstimate e = entropy_dimension(f, fiber_lo, fiber_hi);
    rep.fiber_dims[i] = e.value;
    se_sum += e.std_error;
    if (!m.coord) {
      TreeMeasure g = fiber_measure_slab(
          *flat, digits_to_point(src.window(), x, src.base()), m,
          std::max(1, slab_depth - 2));
      int gh = std::min(fiber_hi, std::max(1, slab_depth - 2));
      shallow[i] = entropy_dimension(g, std::min(fiber_lo, std::max(1, gh - 2)), gh)
                       .value;
    }
  }
  double mean = 0;
  for (double v : rep.fiber_dims) mean += v;
  mean /= n_samples;
  double var = 0;
  for (double v : rep.fiber_dims) var += (v - mean) * (v - mean);
  var /= n_samples;
  rep.fiber_mean = mean;
  double se_in = se_sum / n_samples;
  rep.fiber_se = std::sqrt(var / n_samples + se_in * se_in);
  if (!m.coord) {
    double g = 0;
    for (int i = 0; i < n_samples; ++i) g += std::abs(rep.fiber_dims[i] - shallow[i]);
    rep.fiber_gap = g / n_samples;
  }
  rep.defect = rep.total.value - rep.image.value - rep.fiber_mean;
  rep.defect_se = std::sqrt(rep.total.std_error * rep.total.std_error +
                            rep.image.std_error * rep.image.std_error +
                            rep.fiber_se * rep.fiber_se);
  if (rep.defect > 3 * rep.defect_se)
    rep.verdict = "non-conservation";
  else if (rep.defect < -3 * rep.defect_se)
    rep.verdict = "estimator failure";
  else
    rep.verdict = "consistent with conservation";
  return rep;
}

// ---------------------------------------------------------------------------
// projection lower bound against the generated ensemble

struct SmBoundOptions {
  int n_min = 2;
  int n_max = 10;
  int frame_depth = 5;   // resolution of each sampled scenery frame
  int frame_levels = 3;  // frames taken at the deepest magnification levels
};

struct ProjectionMargin {
  LinearMap map;
  DimensionEstimate projected;
  double ensemble_value = 0;
  double ensemble_se = 0;
  double margin = 0;
};

struct SmLowerBoundReport {
  std::vector<ProjectionMargin> entries;
  double min_margin = 0;
};

// Compares dimension estimates of the projected measure against the average
// projected dimension of late scenery frames (the estimated ensemble). The
// ensemble average is a lower bound for the projected dimension, so the margin
// should be nonnegative; a strictly positive margin flags a projection
// exceeding its ensemble prediction.
inline SmLowerBoundReport sm_lower_bound_check(const MeasureSource& src,
                                               const std::vector<LinearMap>& maps,
                                               int n_samples, std::uint64_t seed,
                                               const SmBoundOptions& opt = {}) {
  require(!maps.empty(), "lower bound check: no maps given");
  require(n_samples >= 1, "lower bound check: need at least one sample");
  require(opt.frame_levels >= 1 && opt.frame_levels <= opt.n_max,
          "lower bound check: bad frame level count");
  std::vector<TreeMeasure> frames;
  for (int i = 0; i < n_samples; ++i) {
    PointedMeasure p = make_pointed(src, seed + std::uint64_t(i) * 1000003ULL);
    magnify(p, opt.n_max - opt.frame_levels + 1);
    for (int j = 0; j < opt.frame_levels; ++j) {
      frames.push_back(pointed_tree(p, opt.frame_depth, MagnifyMode::box));
      if (j + 1 < opt.frame_levels) magnify(p, 1);
    }
  }
  SmLowerBoundReport rep;
  rep.entries.resize(maps.size());
  parallel_for(maps.size(), [&](std::size_t i) {
    ProjectionMargin e;
    e.map = maps[i];
    std::optional<MeasureSource> p;
    if (maps[i].coord) p = src.project_axes(*maps[i].coord);
    if (p)
      e.projected = entropy_dimension(*p, opt.n_min, opt.n_max);
    else
      e.projected = entropy_dimension(project(src, maps[i], opt.n_max), opt.n_min,
                                      opt.n_max);
    double mean = 0, var = 0;
    std::vector<double> vals;
    for (const auto& f : frames) {
      TreeMeasure pf = pushforward_linear(f, maps[i], opt.frame_depth);
      vals.push_back(entropy_dimension(pf, 1, opt.frame_depth).value);
      mean += vals.back();
    }
    mean /= double(vals.size());
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= double(vals.size());
    e.ensemble_value = mean;
    e.ensemble_se = std::sqrt(var / double(vals.size()));
    e.margin = e.projected.value - e.ensemble_value;
    rep.entries[i] = e;
  });
  rep.min_margin = rep.entries[0].margin;
  for (const auto& e : rep.entries) rep.min_margin = std::min(rep.min_margin, e.margin);
  return rep;
}

// ---------------------------------------------------------------------------
// scenery behavior under smooth maps

struct C1Map {
  std::function<Vec(const Vec&)> eval;
  std::function<LinearMap(const Vec&)> derivative;
};

inline C1Map linear_c1(const LinearMap& m) {
  require(m.rows == m.cols, "linear scenery map must be square");
  return {[m](const Vec& x) { return m.apply(x); }, [m](const Vec&) { return m; }};
}

struct PushforwardSceneryReport {
  std::vector<double> distances;            // image frames vs derivative-pushed frames
  double mean = 0;
  double max = 0;
  std::vector<std::vector<double>> cross;   // pairwise distances among the
                                            // derivative-pushed frame summaries
};

// Per sampled point x: compares frames of the image measure at f(x) with the
// Df(x)-pushforward of frames of the original at x, summarized over the first
// n_levels magnification steps.
inline PushforwardSceneryReport smooth_pushforward_scenery_check(
    const MeasureSource& src, const C1Map& f, int x_count, int n_levels,
    int frame_depth, std::uint64_t seed, const MetricSpec& spec = {}) {
  require(x_count >= 1, "pushforward check: need at least one point");
  require(n_levels >= 1, "pushforward check: need at least one level");
  int d = src.dim();
  int inner = n_levels + frame_depth + 2;
  numeric_require(inner <= src.max_refine_depth(),
                  "pushforward check: required depth " + std::to_string(inner) +
                      " exceeds resolution budget");
  // image window: bounding box of the window-corner images, padded
  Vec wlo{1e300, 1e300, 1e300}, whi{-1e300, -1e300, -1e300};
  const Window& iw = src.window();
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vec c{0, 0, 0};
    for (int a = 0; a < d; ++a) c[a] = (mask >> a & 1) ? iw.hi(a) : iw.lo(a);
    Vec y = f.eval(c);
    for (int a = 0; a < d; ++a) {
      wlo[a] = std::min(wlo[a], y[a]);
      whi[a] = std::max(whi[a], y[a]);
    }
  }
  Window ow;
  ow.dim = d;
  ow.half = 0;
  for (int a = 0; a < d; ++a) {
    ow.center[a] = 0.5 * (wlo[a] + whi[a]);
    ow.half = std::max(ow.half, 0.5 * (whi[a] - wlo[a]) * 1.0000001);
  }
  if (ow.half <= 0) ow.half = 1;
  Depositor dep(src.base(), d, inner, ow);
  Vec clo, chi;
  src.for_each_leaf(inner, [&](const CellKey& k, double mass) {
    cell_box(iw, src.base(), inner, k, clo, chi);
    Vec ilo{1e300, 1e300, 1e300}, ihi{-1e300, -1e300, -1e300};
    for (int mask = 0; mask < (1 << d); ++mask) {
      Vec c{0, 0, 0};
      for (int a = 0; a < d; ++a) c[a] = (mask >> a & 1) ? chi[a] : clo[a];
      Vec y = f.eval(c);
      for (int a = 0; a < d; ++a) {
        ilo[a] = std::min(ilo[a], y[a]);
        ihi[a] = std::max(ihi[a], y[a]);
      }
    }
    dep.box(ilo, ihi, mass);
  });
  TreeMeasure image = dep.take();
  numeric_require(image.total > 0, "pushforward check: empty image measure");

  PushforwardSceneryReport rep;
  rep.distances.resize(x_count);
  std::vector<MomentSummary> pushed;
  double logb = std::log(double(src.base()));
  for (int i = 0; i < x_count; ++i) {
    Rng rng = derive_stream(seed, std::uint64_t(i));
    PointDigits xd = src.sample(inner, rng);
    Vec x = digits_to_point(iw, xd, src.base());
    Vec fx = f.eval(x);
    LinearMap a = f.derivative(x);
    double det = d == 1 ? a.at(0, 0)
                        : a.at(0, 0) * a.at(1, 1) - a.at(0, 1) * a.at(1, 0);
    numeric_require(std::abs(det) > 1e-9,
                    "pushforward check: singular derivative at a sampled point");
    double scale = std::pow(std::abs(det), 1.0 / d);
    LinearMap an = a;
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) an.at(r, c) = a.at(r, c) / scale;
    MomentSummary sum_img = make_summary(src.base(), d, spec);
    MomentSummary sum_dfp = make_summary(src.base(), d, spec);
    for (int lv = 1; lv <= n_levels; ++lv) {
      TreeMeasure fa = translate_rescale(image, fx, lv * logb, frame_depth);
      summary_add(sum_img, fa, 1.0);
      // same ball-frame convention on both sides of the comparison
      TreeMeasure fb = translate_rescale(src, x, lv * logb, frame_depth);
      TreeMeasure pb = pushforward_linear(fb, an, frame_depth, unit_window(d));
      numeric_require(pb.total > 0, "pushforward check: pushed frame lost all mass");
      pb = normalize(std::move(pb), Norm::box);
      summary_add(sum_dfp, pb, 1.0);
    }
    rep.distances[i] = summary_distance(sum_img, sum_dfp);
    pushed.push_back(sum_dfp);
  }
  for (double v : rep.distances) {
    rep.mean += v;
    rep.max = std::max(rep.max, v);
  }
  rep.mean /= x_count;
  rep.cross.assign(x_count, std::vector<double>(x_count, 0));
  for (int i = 0; i < x_count; ++i)
    for (int j = 0; j < x_count; ++j)
      rep.cross[i][j] = summary_distance(pushed[i], pushed[j]);
  return rep;
}

}  // namespace scenery
