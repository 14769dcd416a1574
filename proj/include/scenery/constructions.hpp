#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scenery/dynamics.hpp"
#include "scenery/source.hpp"

namespace scenery {

// ---------------------------------------------------------------------------
// digit-process measures

struct DigitProcessSpec {
  int base = 2;
  enum class Order { iid, markov } order = Order::iid;
  std::vector<double> probs;       // iid: one weight per digit
  std::vector<double> matrix;      // markov: base x base transition rows
  std::vector<double> stationary;  // markov: left-invariant start distribution
};

inline void validate(const DigitProcessSpec& s) {
  require(s.base >= 2, "digit process: base must be >= 2");
  auto check_dist = [&](const std::vector<double>& p, const std::string& what) {
    require(int(p.size()) == s.base, "digit process: " + what + " must have one entry per digit");
    double sum = 0;
    for (double v : p) {
      require(v >= 0, "digit process: " + what + " has a negative entry");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= 1e-12, "digit process: " + what + " must sum to 1");
  };
  if (s.order == DigitProcessSpec::Order::iid) {
    check_dist(s.probs, "digit weights");
    return;
  }
  require(int(s.matrix.size()) == s.base * s.base,
          "digit process: transition matrix must be base x base");
  for (int r = 0; r < s.base; ++r) {
    double sum = 0;
    for (int c = 0; c < s.base; ++c) {
      double v = s.matrix[r * s.base + c];
      require(v >= 0, "digit process: transition matrix has a negative entry");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= 1e-12, "digit process: transition rows must sum to 1");
  }
  check_dist(s.stationary, "stationary vector");
  for (int c = 0; c < s.base; ++c) {
    double v = 0;
    for (int r = 0; r < s.base; ++r) v += s.stationary[r] * s.matrix[r * s.base + c];
    require(std::abs(v - s.stationary[c]) <= 1e-10,
            "digit process: stationary vector is not invariant under the chain");
  }
}

inline MeasureSource digit_axis_measure(const DigitProcessSpec& s,
                                        Window w = Window{}) {
  validate(s);
  if (s.order == DigitProcessSpec::Order::iid)
    return digit_iid_source(s.base, s.probs, w);
  return digit_markov_source(s.base, s.matrix, s.stationary, w);
}

// d-fold product of the one-dimensional digit-process measure
inline MeasureSource digit_measure(const DigitProcessSpec& s, int d) {
  require(d >= 1 && d <= kMaxDim, "digit measure: dimension must be 1..3");
  MeasureSource m = digit_axis_measure(s);
  for (int a = 1; a < d; ++a) m = product_source(m, digit_axis_measure(s));
  return m;
}

// Conditional future-measure given a sampled past, together with a point of
// that measure. For iid processes the past is irrelevant; for chains the
// conditional law keys on the last emitted digit.
struct CpPair {
  int last_state = -1;  // -1 when the process is iid
  PointedMeasure pointed;
};

inline CpPair cp_pair_sample(const DigitProcessSpec& s, std::uint64_t seed) {
  validate(s);
  Rng rng(seed);
  if (s.order == DigitProcessSpec::Order::iid) {
    MeasureSource m = digit_axis_measure(s);
    return CpPair{-1, make_pointed(m, rng.next())};
  }
  int y0 = rng.pick(s.stationary);
  std::vector<double> init(s.matrix.begin() + y0 * s.base,
                           s.matrix.begin() + (y0 + 1) * s.base);
  MeasureSource m = digit_markov_source(s.base, s.matrix, init);
  return CpPair{y0, make_pointed(m, rng.next())};
}

// ---------------------------------------------------------------------------
// self-similar measures

struct IFSSpec {
  std::vector<IFSMap> maps;
  std::vector<double> probs;
  int base = 3;
  Window window = unit_window(1);
  int canon_depth = 12;
};

// smallest axis gap between the depth-1 images of the attractor box; positive
// means the system is strongly separated
inline double ifs_separation_gap(const IFSSpec& s, int* bad_i = nullptr,
                                 int* bad_j = nullptr) {
  SelfSimilarImpl impl(s.maps, s.probs, s.base, s.window, s.canon_depth);
  auto boxes = impl.level1_boxes();
  double best = 1e300;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      double gap = -1e300;
      for (int a = 0; a < s.window.dim; ++a)
        gap = std::max(gap, std::max(boxes[j].first[a] - boxes[i].second[a],
                                     boxes[i].first[a] - boxes[j].second[a]));
      if (gap < best) {
        best = gap;
        if (bad_i) *bad_i = int(i);
        if (bad_j) *bad_j = int(j);
      }
    }
  return boxes.size() < 2 ? 1e300 : best;
}

inline MeasureSource self_similar(const IFSSpec& s) {
  int bi = -1, bj = -1;
  double gap = ifs_separation_gap(s, &bi, &bj);
  require(gap > 0, "self-similar system is not strongly separated: maps " +
                       std::to_string(bi) + " and " + std::to_string(bj) +
                       " overlap (gap " + std::to_string(gap) + ")");
  return self_similar_source(s.maps, s.probs, s.base, s.window, s.canon_depth);
}

// ---------------------------------------------------------------------------
// random fractals

struct RandomFractalSpec {
  RandomFractalParams params;
  std::uint64_t seed = 1;
  int base = 2;
  int canon_depth = 14;
};

// sample estimate of E(w log|I| + (1-w) log|J|) over the level distribution,
// with interval lengths relative to the parent
inline double integrability_statistic(const RandomFractalSpec& s, int n_samples = 512) {
  RandomFractalImpl impl(s.params, s.seed, s.base, s.canon_depth);
  double acc = 0;
  for (int i = 0; i < n_samples; ++i) {
    double il, ih, jl, jh, w;
    impl.draw(std::uint64_t(i) + 1, il, ih, jl, jh, w);
    numeric_require(ih > il && jh > jl, "random fractal: degenerate interval sampled");
    acc += w * std::log(0.5 * (ih - il)) + (1 - w) * std::log(0.5 * (jh - jl));
  }
  return acc / n_samples;
}

inline TreeMeasure random_fractal(const RandomFractalSpec& s, int depth) {
  double stat = integrability_statistic(s);
  numeric_require(std::isfinite(stat),
                  "random fractal: level statistic diverges; refusing to build");
  MeasureSource src = random_fractal_source(s.params, s.seed, s.base,
                                            std::max(depth, s.canon_depth));
  return src.refine(depth);
}

// ---------------------------------------------------------------------------
// splice (stage-discretized) measures

struct SpliceSpec {
  std::vector<MeasureSource> components;  // stage measures, in order
  std::vector<int> scales;  // depth at which each later stage takes over
};

// decay of the mass near the window boundary; measures charging the boundary
// in the limit keep a constant share and are rejected
inline void check_boundary_condition(const MeasureSource& nu) {
  double coarse = boundary_mass(nu.refine(2));
  double fine = boundary_mass(nu.refine(std::min(5, nu.max_refine_depth())));
  require(fine <= 0.8 * coarse + 1e-9,
          "splice component keeps mass on the window boundary");
}

inline void validate(const SpliceSpec& s) {
  require(!s.components.empty(), "splice: no components");
  require(s.scales.size() + 1 == s.components.size(),
          "splice: need one takeover depth per later stage");
  int prev = 0;
  for (int v : s.scales) {
    require(v > prev, "splice: takeover depths must be strictly increasing");
    prev = v;
  }
  for (const auto& c : s.components) check_boundary_condition(c);
}

// the measure after `stage` construction steps; the last included component
// carries all deeper refinement
inline MeasureSource splice(const SpliceSpec& s, int stage, int depth,
                            std::optional<Window> w = std::nullopt) {
  validate(s);
  require(stage >= 1 && stage <= int(s.components.size()),
          "splice: stage out of range");
  std::vector<MeasureSource> comps(s.components.begin(),
                                   s.components.begin() + stage);
  std::vector<int> starts = {0};
  for (int i = 0; i + 1 < stage; ++i) starts.push_back(s.scales[i]);
  Window win = w ? *w : unit_window(comps[0].dim());
  MeasureSource out = splice_source(comps, starts, win);
  numeric_require(depth <= out.max_refine_depth(),
                  "splice: depth " + std::to_string(depth) +
                      " exceeds the constructed stages (budget " +
                      std::to_string(out.max_refine_depth()) + ")");
  return out;
}

// ---------------------------------------------------------------------------
// the base-20 injectivity counterexample

struct CounterexampleSpec {
  int levels = 2;                       // number of perturbation terms
  std::vector<int> exponents = {2, 9};  // strictly increasing term exponents
};

// coding map of the two-branch system {x/[10/3], x/[10/3] + 7/10} read
// outermost-first: symbol k contributes c_k * (7/10) * (3/10)^(k-1)
inline double cantor20_point(const std::vector<int>& code) {
  double x = 0, scale = 7.0 / 10.0;
  for (int c : code) {
    require(c == 0 || c == 1, "cantor code symbols must be 0 or 1");
    x += c * scale;
    scale *= 3.0 / 10.0;
  }
  return x;
}

inline double counterexample_theta(int exponent) {
  return (7.0 / 20.0) * std::pow(6.0 / 20.0, exponent - 1);
}

inline void validate(const CounterexampleSpec& s) {
  require(s.levels >= 1, "counterexample: need at least one term");
  require(int(s.exponents.size()) == s.levels,
          "counterexample: one exponent per term");
  for (int i = 0; i < s.levels; ++i) {
    require(s.exponents[i] >= 1, "counterexample: exponents must be positive");
    if (i) require(s.exponents[i] > s.exponents[i - 1],
                   "counterexample: exponents must strictly increase");
  }
  std::string bad;
  for (int k = 0; k + 1 < s.levels; ++k) {
    double tail = 0;
    for (int j = k + 1; j < s.levels; ++j) tail += counterexample_theta(s.exponents[j]);
    double bound = (1.0 / 40.0) * std::pow(6.0 / 20.0, s.exponents[k] - 1);
    if (!(tail < bound)) bad += (bad.empty() ? "" : ", ") + std::to_string(k + 1);
  }
  require(bad.empty(),
          "counterexample: tail growth constraint fails at k = " + bad);
}

// x + sum of the coded perturbations; codes are truncated at the resolution
// the spec can separate
inline double counterexample_f(const CounterexampleSpec& s,
                               const std::vector<int>& x_code,
                               const std::vector<int>& y_code) {
  validate(s);
  std::vector<int> xt(x_code.begin(),
                      x_code.begin() + std::min<std::size_t>(x_code.size(),
                                                             s.exponents.back()));
  double v = cantor20_point(xt);
  for (int k = 0; k < s.levels && k < int(y_code.size()); ++k) {
    require(y_code[k] == 0 || y_code[k] == 1, "code symbols must be 0 or 1");
    v += y_code[k] * counterexample_theta(s.exponents[k]);
  }
  return v;
}

struct CoverCount {
  double count = 0;
  double length = 0;
  double dim_estimate = 0;
};

inline CoverCount counterexample_cover_count(const CounterexampleSpec& s, int k) {
  validate(s);
  require(k >= 1 && k <= s.levels, "cover count: term index out of range");
  CoverCount c;
  int nk = s.exponents[k - 1];
  c.count = std::pow(2.0, k) * std::pow(2.0, nk);
  c.length = (1.0 + 2.0 / 20.0) * std::pow(6.0 / 20.0, nk - 1);
  c.dim_estimate = std::log(c.count) / -std::log(c.length);
  return c;
}

// The perturbed product measure: mass 2^-(|x|+|y|) on each coded rectangle
// [f(x,y), f(x,y) + r^|x|] x [y, y + r^|y|], binned base-20. Fibers of the
// first coordinate collapse to the y-cylinders the perturbation separates.
inline TreeMeasure counterexample_measure(const CounterexampleSpec& s, int x_len,
                                          int y_len, int tree_depth) {
  validate(s);
  require(x_len >= 1 && y_len >= 1 && x_len + y_len <= 22,
          "counterexample measure: code grid too large");
  double theta_sum = 0;
  for (int e : s.exponents) theta_sum += counterexample_theta(e);
  Window w;
  w.dim = 2;
  double hi = 1.0 + theta_sum;
  w.center[0] = 0.5 * hi;
  w.center[1] = 0.5 * hi;
  w.half = 0.5 * hi * 1.0000001;
  Depositor dep(20, 2, tree_depth, w);
  double rx = std::pow(3.0 / 10.0, x_len), ry = std::pow(3.0 / 10.0, y_len);
  double mass = std::pow(0.5, x_len + y_len);
  std::vector<int> xc(x_len, 0), yc(y_len, 0);
  for (std::uint64_t xi = 0; xi < (std::uint64_t(1) << x_len); ++xi) {
    for (int i = 0; i < x_len; ++i) xc[i] = int(xi >> i & 1);
    for (std::uint64_t yi = 0; yi < (std::uint64_t(1) << y_len); ++yi) {
      for (int i = 0; i < y_len; ++i) yc[i] = int(yi >> i & 1);
      double fx = cantor20_point(xc);
      for (int k = 0; k < s.levels && k < y_len; ++k)
        fx += yc[k] * counterexample_theta(s.exponents[k]);
      double fy = cantor20_point(yc);
      dep.box(Vec{fx, fy, 0}, Vec{fx + rx, fy + ry, 0}, mass);
    }
  }
  return dep.take();
}

}  // namespace scenery
