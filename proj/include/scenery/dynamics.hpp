#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scenery/distribution.hpp"
#include "scenery/operators.hpp"
#include "scenery/parallel.hpp"
#include "scenery/source.hpp"

namespace scenery {

// State of the digit-magnification dynamics: the source, the absolute digit
// path of the point, and how many digits have been consumed. The current
// measure is the conditional measure of the consumed cell rescaled to the
// standard window; the current point is the path's remaining digits. Digits
// are refilled lazily by conditional sampling from the pair's own stream.
struct PointedMeasure {
  MeasureSource src;
  PointDigits path;
  int level = 0;
  Rng rng{0};

  int digits_available() const { return path.depth() - level; }
};

inline void ensure_digits(PointedMeasure& p, int relative_depth) {
  int target = p.level + relative_depth;
  // sample whole blocks to amortize the path descent, but cap the block: its
  // conditional tree can hold (base^dim)^chunk leaves
  double level_log = double(p.src.dim()) * std::log(double(p.src.base()));
  int block = std::max(1, int(std::log(4096.0) / level_log));
  while (p.path.depth() < target) {
    int chunk = std::min(block, target - p.path.depth());
    numeric_require(p.path.depth() + chunk <= p.src.max_path_depth(),
                    "pointed run: digit depth " + std::to_string(p.path.depth() + chunk) +
                        " exceeds resolution budget " +
                        std::to_string(p.src.max_path_depth()));
    TreeMeasure cond = p.src.refine_conditional(p.path, p.path.depth(), chunk);
    double u = p.rng.uniform() * cond.total;
    double acc = 0;
    CellKey hit = cond.leaves.rbegin()->first;
    for (const auto& [k, m] : cond.leaves) {
      acc += m;
      if (u < acc) {
        hit = k;
        break;
      }
    }
    PointDigits ext = key_to_digits(hit, p.src.base(), chunk, p.src.dim());
    for (int a = 0; a < p.src.dim(); ++a)
      p.path.d[a].insert(p.path.d[a].end(), ext.d[a].begin(), ext.d[a].end());
  }
}

inline PointedMeasure make_pointed(const MeasureSource& src, std::uint64_t seed,
                                   int prefill = 0) {
  PointedMeasure p;
  p.src = src;
  p.path.dim = src.dim();
  p.rng = Rng(seed);
  if (prefill > 0) ensure_digits(p, prefill);
  return p;
}

inline PointedMeasure make_pointed_at(const MeasureSource& src, const PointDigits& x,
                                      std::uint64_t seed) {
  require(x.dim == src.dim(), "pointed: dimension mismatch");
  numeric_require(x.depth() == 0 || src.path_mass(x, x.depth()) > 0,
                  "pointed: the point's cell has mass zero");
  PointedMeasure p;
  p.src = src;
  p.path = x;
  p.rng = Rng(seed);
  return p;
}

// Conditional mass of the next `steps`-levels cell around the point, seen from
// the current frame. The product of these over a run telescopes to the
// absolute cell mass of the full path. Computed from the conditional frame so
// deep runs never touch absolute path masses (which underflow past ~1e3
// levels).
inline double step_cell_mass(PointedMeasure& p, int steps = 1) {
  require(steps >= 1, "step mass: need at least one level");
  ensure_digits(p, steps);
  TreeMeasure cond = p.src.refine_conditional(p.path, p.level, steps);
  PointDigits next;
  next.dim = p.path.dim;
  for (int a = 0; a < p.path.dim; ++a)
    next.d[a].assign(p.path.d[a].begin() + p.level,
                     p.path.d[a].begin() + p.level + steps);
  return cell_mass(cond, digits_to_key(next, p.src.base(), steps), steps);
}

// One (or `steps` fused) application of the digit magnification: zoom into the
// cell of the point, consuming one digit per axis per step.
inline void magnify(PointedMeasure& p, int steps = 1) {
  require(steps >= 1, "magnify: need at least one step");
  ensure_digits(p, steps);
  for (int j = 0; j < steps; ++j) {
    numeric_require(step_cell_mass(p) > 0,
                    "magnify: the cell of the point has mass zero");
    ++p.level;
  }
}

enum class MagnifyMode { plain, star, box };

// Current measure of the pair in the standard frame. box: total mass 1.
// star coincides with box here (the magnified frame is exactly the window);
// plain carries the absolute mass of the consumed cell.
inline TreeMeasure pointed_tree(const PointedMeasure& p, int out_depth,
                                MagnifyMode mode = MagnifyMode::box) {
  if (p.level == 0) {
    TreeMeasure t = p.src.refine(out_depth);
    return t;
  }
  TreeMeasure t = p.src.refine_conditional(p.path, p.level, out_depth);
  if (mode == MagnifyMode::plain)
    t = scale_tree(std::move(t), p.src.path_mass(p.path, p.level));
  return t;
}

// Remaining digits of the point in the current frame.
inline PointDigits pointed_point(PointedMeasure& p, int depth) {
  ensure_digits(p, depth);
  PointDigits out;
  out.dim = p.path.dim;
  for (int a = 0; a < p.path.dim; ++a)
    out.d[a].assign(p.path.d[a].begin() + p.level, p.path.d[a].begin() + p.level + depth);
  return out;
}

// Time-discretized scenery distribution: frames at t = 0, t_step, ..., <= T,
// equal weights.
inline EmpiricalDistribution scenery_distribution(const MeasureSource& src, const Vec& x,
                                                  double T, double t_step, int out_depth) {
  require(t_step > 0 && T >= 0, "scenery distribution: bad time grid");
  int n = int(std::floor(T / t_step + 1e-12)) + 1;
  std::vector<DistAtom> atoms(n);
  parallel_for(std::size_t(n), [&](std::size_t j) {
    DistAtom a;
    a.w = 1.0 / n;
    a.mu = std::make_shared<const TreeMeasure>(
        translate_rescale(src, x, double(j) * t_step, out_depth));
    atoms[j] = a;
  });
  return make_empirical(std::move(atoms));
}

// Toroidal translation by a random cell offset at the tree's own depth. Used
// to put digit dynamics in general position without leaving the b-adic grid.
inline MeasureSource random_translation(const MeasureSource& src, int depth,
                                        std::uint64_t seed) {
  auto t = src.refine_shared(depth);
  std::uint64_t span = upow(std::uint64_t(src.base()), depth);
  Rng rng(seed);
  CellKey shift;
  for (int a = 0; a < src.dim(); ++a) shift.ax[a] = rng.below(span);
  TreeMeasure out = make_tree(t->base, t->dim, t->depth, t->window);
  out.rebin_error_bound = t->rebin_error_bound;
  for (const auto& [k, m] : t->leaves) {
    CellKey nk;
    for (int a = 0; a < t->dim; ++a) nk.ax[a] = (k.ax[a] + shift.ax[a]) % span;
    out.add(nk, m);
  }
  return frozen_source(std::move(out));
}

// Orbit distribution of the digit magnification: atoms are the states after
// 1..N applications, each materialized at out_depth with its point recorded.
inline EmpiricalDistribution b_scenery_distribution(const MeasureSource& src, int N,
                                                    int out_depth, std::uint64_t seed,
                                                    bool random_translate = false) {
  require(N >= 1, "orbit distribution: need at least one step");
  MeasureSource use = src;
  if (random_translate) {
    int depth = N + out_depth;
    numeric_require(depth <= src.max_refine_depth(),
                    "random translation needs full depth " + std::to_string(depth) +
                        " within budget " + std::to_string(src.max_refine_depth()));
    use = random_translation(src, depth, derive_stream(seed, 1).next());
  }
  PointedMeasure p = make_pointed(use, derive_stream(seed, 0).next());
  std::vector<DistAtom> atoms;
  atoms.reserve(N);
  for (int n = 1; n <= N; ++n) {
    magnify(p);
    DistAtom a;
    a.w = 1.0 / N;
    a.mu = std::make_shared<const TreeMeasure>(pointed_tree(p, out_depth));
    a.pt = pointed_point(p, out_depth);
    atoms.push_back(a);
  }
  return make_empirical(std::move(atoms));
}

// Atom-wise translation taking each atom's point to the origin, then box
// normalization on the standard window.
inline EmpiricalDistribution center_discrete(const EmpiricalDistribution& q,
                                             int out_depth) {
  std::vector<DistAtom> atoms(q.atoms.size());
  parallel_for(q.atoms.size(), [&](std::size_t i) {
    const DistAtom& a = q.atoms[i];
    require(a.pt.has_value(), "centering needs measure-point pairs");
    Vec x = digits_to_point(a.mu->window, *a.pt, a.mu->base);
    DistAtom c;
    c.w = a.w;
    c.mu = std::make_shared<const TreeMeasure>(
        translate_rescale(*a.mu, x, 0.0, out_depth));
    atoms[i] = c;
  });
  return make_empirical(std::move(atoms));
}

// Discrete centering followed by averaging over one scaling period:
// frames at t = j * log(b)/t_steps, j = 0..t_steps-1, each box-normalized.
inline EmpiricalDistribution center_continuous(const EmpiricalDistribution& q,
                                               int t_steps, int out_depth) {
  require(t_steps >= 1, "centering: need at least one time step");
  double dt = std::log(double(q.base)) / t_steps;
  std::vector<DistAtom> atoms(q.atoms.size() * std::size_t(t_steps));
  parallel_for(atoms.size(), [&](std::size_t idx) {
    std::size_t i = idx / t_steps;
    int j = int(idx % t_steps);
    const DistAtom& a = q.atoms[i];
    require(a.pt.has_value(), "centering needs measure-point pairs");
    Vec x = digits_to_point(a.mu->window, *a.pt, a.mu->base);
    DistAtom c;
    c.w = a.w / t_steps;
    c.mu = std::make_shared<const TreeMeasure>(
        translate_rescale(*a.mu, x, dt * j, out_depth));
    atoms[idx] = c;
  });
  return make_empirical(std::move(atoms));
}

// Streamed continuous centering of independent (measure, point) samples drawn
// from the source itself: fn(tree, weight) per centered frame. Equivalent to
// center_continuous over the materialized ensemble, without holding it.
template <class Fn>
inline void for_each_centered_sample(const MeasureSource& src, int n_samples,
                                     int t_steps, int out_depth, std::uint64_t seed,
                                     const Fn& fn) {
  require(n_samples >= 1 && t_steps >= 1, "centered sampling: bad counts");
  double dt = std::log(double(src.base())) / t_steps;
  int sample_depth = std::min(out_depth + 4, src.max_refine_depth());
  double w = 1.0 / (double(n_samples) * t_steps);
  for (int i = 0; i < n_samples; ++i) {
    Rng rng = derive_stream(seed, std::uint64_t(i));
    PointDigits p = src.sample(sample_depth, rng);
    Vec x = digits_to_point(src.window(), p, src.base());
    for (int j = 0; j < t_steps; ++j)
      fn(translate_rescale(src, x, dt * j, out_depth), w);
  }
}

// Distance between the atom-wise scaled ensemble and the ensemble itself,
// both re-binned through the same zoom path so fixed points score exactly 0.
inline double invariance_diagnostic(const EmpiricalDistribution& p, double t,
                                    int out_depth, const MetricSpec& spec = {}) {
  require(t >= 0, "invariance: negative time");
  MomentSummary base_s = make_summary(p.base, p.dim, spec);
  MomentSummary scaled_s = make_summary(p.base, p.dim, spec);
  Vec origin{0, 0, 0};
  for (const auto& a : p.atoms) {
    summary_add(base_s, translate_rescale(*a.mu, origin, 0.0, out_depth), a.w);
    summary_add(scaled_s, translate_rescale(*a.mu, origin, t, out_depth), a.w);
  }
  return summary_distance(base_s, scaled_s);
}

// Max over depth-m cells of |mean atom mass - frequency of atom points|.
inline double adaptedness_diagnostic(const EmpiricalDistribution& q, int m) {
  require(m >= 1 && q.min_depth() >= m, "adaptedness: depth out of range");
  std::map<CellKey, double> mean, freq;
  for (const auto& a : q.atoms) {
    require(a.pt.has_value() && a.pt->depth() >= m,
            "adaptedness needs measure-point pairs with deep enough points");
    double tot = a.mu->total;
    for (const auto& [k, mass] : a.mu->leaves)
      mean[key_prefix(k, q.base, a.mu->depth, m)] += a.w * mass / tot;
    freq[digits_to_key(*a.pt, q.base, m)] += a.w;
  }
  double worst = 0;
  auto im = mean.begin();
  auto jf = freq.begin();
  while (im != mean.end() || jf != freq.end()) {
    if (jf == freq.end() || (im != mean.end() && im->first < jf->first)) {
      worst = std::max(worst, std::abs(im->second));
      ++im;
    } else if (im == mean.end() || jf->first < im->first) {
      worst = std::max(worst, std::abs(jf->second));
      ++jf;
    } else {
      worst = std::max(worst, std::abs(im->second - jf->second));
      ++im;
      ++jf;
    }
  }
  return worst;
}

// Similarity score between P and its translation-randomized version: each atom
// diffused by points drawn from its own restriction to U. A score of 0 is
// consistent with the quasi-Palm property but cannot certify it.
inline double quasi_palm_diagnostic(const EmpiricalDistribution& p, const Vec& u_lo,
                                    const Vec& u_hi, int n_samples, int out_depth,
                                    std::uint64_t seed, const MetricSpec& spec = {}) {
  require(n_samples >= 1, "quasi-palm: need samples");
  MomentSummary base_s = make_summary(p.base, p.dim, spec);
  MomentSummary diff_s = make_summary(p.base, p.dim, spec);
  Vec origin{0, 0, 0};
  std::uint64_t atom_idx = 0;
  for (const auto& a : p.atoms) {
    summary_add(base_s, translate_rescale(*a.mu, origin, 0.0, out_depth), a.w);
    TreeMeasure restricted = restrict_box(*a.mu, u_lo, u_hi);
    // inverse-cdf over leaves; translation points are leaf corners, so
    // grid-aligned inputs stay exact
    std::vector<std::pair<CellKey, double>> cum;
    double acc = 0;
    for (const auto& [k, m] : restricted.leaves) {
      acc += m;
      cum.push_back({k, acc});
    }
    for (int sidx = 0; sidx < n_samples; ++sidx) {
      Rng rng = derive_stream(seed, (atom_idx << 20) + std::uint64_t(sidx));
      double u = rng.uniform() * acc;
      std::size_t lo = 0, hi = cum.size() - 1;
      while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (cum[mid].second <= u)
          lo = mid + 1;
        else
          hi = mid;
      }
      PointDigits pd =
          key_to_digits(cum[lo].first, restricted.base, restricted.depth, restricted.dim);
      Vec x = digits_to_point(restricted.window, pd, restricted.base);
      summary_add(diff_s, translate_rescale(*a.mu, x, 0.0, out_depth),
                  a.w / n_samples);
    }
    ++atom_idx;
  }
  return summary_distance(base_s, diff_s);
}

struct UsmReport {
  std::vector<double> t_snapshots;                 // the T values reported
  std::vector<std::vector<double>> dist_to_final;  // [point][snapshot]
  std::vector<double> max_cross_point;             // [snapshot]
  std::vector<std::vector<double>> band_distance;  // [point][snapshot], optional
  std::vector<PointDigits> points;
};

// Convergence study of scenery distributions: for each sampled point, prefix
// distributions at the requested horizons; distances to the final horizon and
// across points. With two band targets, also the distance to their convex hull.
inline UsmReport usm_convergence_report(
    const MeasureSource& src, int x_count, const std::vector<double>& T_list,
    double t_step, int out_depth, std::uint64_t seed, const MetricSpec& spec = {},
    const std::vector<EmpiricalDistribution>* band_targets = nullptr) {
  require(x_count >= 1 && !T_list.empty() && t_step > 0, "usm report: bad parameters");
  for (std::size_t i = 1; i < T_list.size(); ++i)
    require(T_list[i] > T_list[i - 1], "usm report: horizons must increase");
  double t_max = T_list.back();
  int digit_depth =
      std::min(src.max_refine_depth(),
               int(std::ceil((t_max + std::log(src.window().side())) /
                             std::log(double(src.base())))) +
                   out_depth + 2);
  UsmReport rep;
  rep.t_snapshots = T_list;
  std::vector<MomentSummary> band0, band1;
  if (band_targets && band_targets->size() >= 2) {
    band0.push_back(summarize((*band_targets)[0], spec));
    band1.push_back(summarize((*band_targets)[1], spec));
  }
  // per point, per snapshot summaries
  std::vector<std::vector<MomentSummary>> snaps(
      x_count, std::vector<MomentSummary>(T_list.size()));
  rep.points.resize(x_count);
  parallel_for(std::size_t(x_count), [&](std::size_t i) {
    Rng rng = derive_stream(seed, i);
    PointDigits pd = src.sample(digit_depth, rng);
    rep.points[i] = pd;
    Vec x = digits_to_point(src.window(), pd, src.base());
    MomentSummary run = make_summary(src.base(), src.dim(), spec);
    std::size_t next_snap = 0;
    int j = 0;
    for (;;) {
      double t = j * t_step;
      if (t > t_max + 1e-12) break;
      summary_add(run, translate_rescale(src, x, t, out_depth), 1.0);
      while (next_snap < T_list.size() &&
             (j + 1) * t_step > T_list[next_snap] + 1e-12) {
        snaps[i][next_snap] = run;
        ++next_snap;
      }
      ++j;
    }
    while (next_snap < T_list.size()) {
      snaps[i][next_snap] = run;
      ++next_snap;
    }
  });
  rep.dist_to_final.assign(x_count, std::vector<double>(T_list.size(), 0.0));
  for (int i = 0; i < x_count; ++i)
    for (std::size_t k = 0; k < T_list.size(); ++k)
      rep.dist_to_final[i][k] = summary_distance(snaps[i][k], snaps[i].back());
  rep.max_cross_point.assign(T_list.size(), 0.0);
  for (std::size_t k = 0; k < T_list.size(); ++k)
    for (int i = 0; i < x_count; ++i)
      for (int j2 = i + 1; j2 < x_count; ++j2)
        rep.max_cross_point[k] =
            std::max(rep.max_cross_point[k], summary_distance(snaps[i][k], snaps[j2][k]));
  if (!band0.empty()) {
    rep.band_distance.assign(x_count, std::vector<double>(T_list.size(), 0.0));
    for (int i = 0; i < x_count; ++i)
      for (std::size_t k = 0; k < T_list.size(); ++k)
        rep.band_distance[i][k] =
            summary_segment_distance(snaps[i][k], band0[0], band1[0]).first;
  }
  return rep;
}

struct CpRunReport {
  int steps = 0;
  int out_depth = 0;
  bool marginal_constant = false;  // all magnified frames leaf-identical
  double max_marginal_dev = 0;     // largest L1 gap from the first frame
  double adaptedness = 0;          // cell-mass vs point-frequency gap at adapt_m
  int adapt_m = 0;
  double telescope_max_rel_err = 0;  // product of step masses vs path mass
};

// Single-orbit CP run with streaming checks; memory stays O(one frame).
inline CpRunReport cp_run_report(const MeasureSource& src, int N, int out_depth,
                                 int adapt_m, std::uint64_t seed) {
  require(N >= 1 && out_depth >= adapt_m && adapt_m >= 1, "cp run: bad parameters");
  CpRunReport rep;
  rep.steps = N;
  rep.out_depth = out_depth;
  rep.adapt_m = adapt_m;
  PointedMeasure p = make_pointed(src, seed);
  TreeMeasure first;
  std::map<CellKey, double> mean, freq;
  double running_product = 1.0;
  // the telescoping check needs the absolute path mass, which leaves double
  // range after ~1e3 levels; freeze the comparison there
  bool telescope_live = true;
  for (int n = 1; n <= N; ++n) {
    running_product *= step_cell_mass(p);
    magnify(p);
    TreeMeasure cur = pointed_tree(p, out_depth);
    if (telescope_live) {
      double path = p.src.path_mass(p.path, p.level);
      if (path < 1e-280)
        telescope_live = false;
      else
        rep.telescope_max_rel_err =
            std::max(rep.telescope_max_rel_err,
                     std::abs(path - running_product) / path);
    }
    if (n == 1)
      first = cur;
    else
      rep.max_marginal_dev =
          std::max(rep.max_marginal_dev, tree_l1_distance(first, cur));
    for (const auto& [k, mass] : cur.leaves)
      mean[key_prefix(k, cur.base, cur.depth, adapt_m)] += mass / (cur.total * N);
    freq[digits_to_key(pointed_point(p, adapt_m), src.base(), adapt_m)] += 1.0 / N;
  }
  rep.marginal_constant = rep.max_marginal_dev <= 1e-12;
  auto im = mean.begin();
  auto jf = freq.begin();
  while (im != mean.end() || jf != freq.end()) {
    if (jf == freq.end() || (im != mean.end() && im->first < jf->first)) {
      rep.adaptedness = std::max(rep.adaptedness, std::abs(im->second));
      ++im;
    } else if (im == mean.end() || jf->first < im->first) {
      rep.adaptedness = std::max(rep.adaptedness, std::abs(jf->second));
      ++jf;
    } else {
      rep.adaptedness = std::max(rep.adaptedness, std::abs(im->second - jf->second));
      ++im;
      ++jf;
    }
  }
  return rep;
}

}  // namespace scenery
