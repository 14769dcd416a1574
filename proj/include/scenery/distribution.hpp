#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "scenery/tree.hpp"

namespace scenery {

// Weighted atom of an empirical distribution over measures; the optional point
// makes the atom a measure-point pair.
struct DistAtom {
  double w = 0;
  std::shared_ptr<const TreeMeasure> mu;
  std::optional<PointDigits> pt;
};

// Finitely supported distribution over TreeMeasures on a common grid.
struct EmpiricalDistribution {
  int base = 2;
  int dim = 1;
  Window window;
  std::vector<DistAtom> atoms;

  int min_depth() const {
    int d = 1 << 28;
    for (const auto& a : atoms) d = std::min(d, a.mu->depth);
    return atoms.empty() ? 0 : d;
  }
};

inline EmpiricalDistribution make_empirical(std::vector<DistAtom> atoms) {
  require(!atoms.empty(), "empirical distribution needs at least one atom");
  EmpiricalDistribution p;
  p.base = atoms[0].mu->base;
  p.dim = atoms[0].mu->dim;
  p.window = atoms[0].mu->window;
  double s = 0;
  for (const auto& a : atoms) {
    require(a.w >= 0, "atom weights must be nonnegative");
    require(a.mu != nullptr, "atom measure missing");
    require(a.mu->base == p.base && a.mu->dim == p.dim && a.mu->window == p.window,
            "atoms must share a comparison grid");
    s += a.w;
  }
  require(s > 0, "atom weights must not all vanish");
  for (auto& a : atoms) a.w /= s;
  p.atoms = std::move(atoms);
  return p;
}

inline EmpiricalDistribution single_atom(TreeMeasure t) {
  DistAtom a;
  a.w = 1.0;
  a.mu = std::make_shared<const TreeMeasure>(std::move(t));
  return make_empirical({a});
}

// Convex combination lambda*P + (1-lambda)*Q.
inline EmpiricalDistribution mixture(const EmpiricalDistribution& p,
                                     const EmpiricalDistribution& q, double lambda) {
  require(lambda >= 0 && lambda <= 1, "mixture weight must lie in [0,1]");
  require(p.base == q.base && p.dim == q.dim && p.window == q.window,
          "mixture needs a common grid");
  std::vector<DistAtom> atoms;
  for (const auto& a : p.atoms) {
    DistAtom c = a;
    c.w = a.w * lambda;
    atoms.push_back(c);
  }
  for (const auto& a : q.atoms) {
    DistAtom c = a;
    c.w = a.w * (1 - lambda);
    atoms.push_back(c);
  }
  return make_empirical(std::move(atoms));
}

// Moment pseudo-metric over cell-mass means:
//   d(P,Q) = sum_{m=1}^{m_max} 2^{-m} b^{-m d} sum_{D in depth-m cells}
//            |E_P mu(D) - E_Q mu(D)|
// degree 2 adds 1/2 * b^{-2d} sum_{D,D' depth 1} |E_P mu(D)mu(D') - E_Q ...|.
// Zero distance does not imply equality beyond the listed moments.
struct MetricSpec {
  int m_max = 3;
  int degree = 1;
};

// Accumulated moment statistics of a distribution on measures; distributions
// with equal summaries are indistinguishable to the metric. Summaries admit
// streaming accumulation, so large ensembles never need to be materialized.
struct MomentSummary {
  int base = 2;
  int dim = 1;
  MetricSpec spec;
  double weight = 0;                         // total accumulated weight
  std::vector<std::map<CellKey, double>> mean;  // weighted cell-mass sums, m = 1..m_max
  std::vector<double> pair;                  // weighted depth-1 pair-product sums

  std::uint64_t pair_side() const {
    std::uint64_t n = 1;
    for (int a = 0; a < dim; ++a) n *= std::uint64_t(base);
    return n;
  }
};

inline MomentSummary make_summary(int base, int dim, const MetricSpec& spec) {
  require(spec.m_max >= 1, "metric depth must be >= 1");
  require(spec.degree == 1 || spec.degree == 2, "metric degree must be 1 or 2");
  MomentSummary s;
  s.base = base;
  s.dim = dim;
  s.spec = spec;
  s.mean.resize(spec.m_max);
  if (spec.degree == 2) {
    std::uint64_t n = s.pair_side();
    require(n <= 4096, "degree-2 metric needs b^d <= 4096");
    s.pair.assign(n * n, 0.0);
  }
  return s;
}

inline void summary_add(MomentSummary& s, const TreeMeasure& t, double w) {
  require(t.base == s.base && t.dim == s.dim, "summary: grid mismatch");
  require(t.depth >= s.spec.m_max, "summary: atom shallower than the metric depth");
  if (w <= 0) return;
  double tot = t.total;
  if (tot <= 0) return;
  std::map<CellKey, double> cur;
  for (const auto& [k, m] : t.leaves)
    cur[key_prefix(k, t.base, t.depth, s.spec.m_max)] += m / tot;
  for (int m = s.spec.m_max; m >= 1; --m) {
    for (const auto& [k, v] : cur) s.mean[m - 1][k] += w * v;
    if (m > 1) {
      std::map<CellKey, double> up;
      for (const auto& [k, v] : cur) up[key_prefix(k, s.base, m, m - 1)] += v;
      cur.swap(up);
    }
  }
  if (s.spec.degree == 2) {
    std::uint64_t n = s.pair_side();
    std::vector<double> v(n, 0.0);
    for (const auto& [k, mass] : t.leaves) {
      CellKey c = key_prefix(k, t.base, t.depth, 1);
      std::uint64_t idx = 0;
      for (int a = 0; a < t.dim; ++a) idx = idx * std::uint64_t(t.base) + c.ax[a];
      v[idx] += mass / tot;
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      if (v[i] == 0) continue;
      for (std::uint64_t j = 0; j < n; ++j) s.pair[i * n + j] += w * v[i] * v[j];
    }
  }
  s.weight += w;
}

inline MomentSummary summarize(const EmpiricalDistribution& p,
                               const MetricSpec& spec = {}) {
  MomentSummary s = make_summary(p.base, p.dim, spec);
  for (const auto& a : p.atoms) summary_add(s, *a.mu, a.w);
  return s;
}

// lambda * a + (1 - lambda) * b after normalizing each to weight 1
inline MomentSummary summary_mix(const MomentSummary& a, const MomentSummary& b,
                                 double lambda) {
  require(a.base == b.base && a.dim == b.dim && a.spec.m_max == b.spec.m_max &&
              a.spec.degree == b.spec.degree,
          "summary mix: incompatible summaries");
  require(a.weight > 0 && b.weight > 0, "summary mix: empty summary");
  MomentSummary r = make_summary(a.base, a.dim, a.spec);
  r.weight = 1.0;
  for (int m = 0; m < a.spec.m_max; ++m) {
    for (const auto& [k, v] : a.mean[m]) r.mean[m][k] += lambda * v / a.weight;
    for (const auto& [k, v] : b.mean[m]) r.mean[m][k] += (1 - lambda) * v / b.weight;
  }
  if (a.spec.degree == 2)
    for (std::size_t i = 0; i < r.pair.size(); ++i)
      r.pair[i] = lambda * a.pair[i] / a.weight + (1 - lambda) * b.pair[i] / b.weight;
  return r;
}

inline double summary_distance(const MomentSummary& a, const MomentSummary& b) {
  require(a.base == b.base && a.dim == b.dim && a.spec.m_max == b.spec.m_max &&
              a.spec.degree == b.spec.degree,
          "summary distance: incompatible summaries");
  require(a.weight > 0 && b.weight > 0, "summary distance: empty summary");
  double dist = 0;
  double wm = 1.0;
  for (int m = 1; m <= a.spec.m_max; ++m) {
    wm *= 0.5;
    const auto& ma = a.mean[m - 1];
    const auto& mb = b.mean[m - 1];
    double l1 = 0;
    auto ia = ma.begin();
    auto ib = mb.begin();
    while (ia != ma.end() || ib != mb.end()) {
      if (ib == mb.end() || (ia != ma.end() && ia->first < ib->first)) {
        l1 += std::abs(ia->second / a.weight);
        ++ia;
      } else if (ia == ma.end() || ib->first < ia->first) {
        l1 += std::abs(ib->second / b.weight);
        ++ib;
      } else {
        l1 += std::abs(ia->second / a.weight - ib->second / b.weight);
        ++ia;
        ++ib;
      }
    }
    dist += wm * ipow(1.0 / double(a.base), m * a.dim) * l1;
  }
  if (a.spec.degree == 2) {
    double l1 = 0;
    for (std::size_t i = 0; i < a.pair.size(); ++i)
      l1 += std::abs(a.pair[i] / a.weight - b.pair[i] / b.weight);
    dist += 0.5 * ipow(1.0 / double(a.base), 2 * a.dim) * l1;
  }
  return dist;
}

inline double distribution_distance(const EmpiricalDistribution& p,
                                    const EmpiricalDistribution& q,
                                    const MetricSpec& spec = {}) {
  require(p.base == q.base && p.dim == q.dim && p.window == q.window,
          "distance needs a common comparison grid");
  require(p.min_depth() >= spec.m_max && q.min_depth() >= spec.m_max,
          "atoms shallower than the metric depth");
  return summary_distance(summarize(p, spec), summarize(q, spec));
}

// Distance from q to the segment {lambda p0 + (1-lambda) p1}; returns the
// minimum and the minimizing lambda (grid scan + ternary refinement).
inline std::pair<double, double> summary_segment_distance(const MomentSummary& q,
                                                          const MomentSummary& p0,
                                                          const MomentSummary& p1) {
  double best = 1e300, best_l = 0;
  for (int i = 0; i <= 20; ++i) {
    double l = double(i) / 20.0;
    double d = summary_distance(q, summary_mix(p0, p1, l));
    if (d < best) {
      best = d;
      best_l = l;
    }
  }
  double lo = std::max(0.0, best_l - 0.05), hi = std::min(1.0, best_l + 0.05);
  for (int it = 0; it < 12; ++it) {
    double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
    double da = summary_distance(q, summary_mix(p0, p1, a));
    double db = summary_distance(q, summary_mix(p0, p1, b));
    if (da < db)
      hi = b;
    else
      lo = a;
    if (std::min(da, db) < best) {
      best = std::min(da, db);
      best_l = da < db ? a : b;
    }
  }
  return {best, best_l};
}

inline std::pair<double, double> distance_to_segment(const EmpiricalDistribution& q,
                                                     const EmpiricalDistribution& p0,
                                                     const EmpiricalDistribution& p1,
                                                     const MetricSpec& spec = {}) {
  return summary_segment_distance(summarize(q, spec), summarize(p0, spec),
                                  summarize(p1, spec));
}

}  // namespace scenery
