#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>
#include <vector>

#include "scenery/operators.hpp"
#include "scenery/parallel.hpp"
#include "scenery/source.hpp"

namespace scenery {

// Regression-based estimate with honest uncertainty. lower/upper are the
// extreme slopes over sliding depth windows, standing in for liminf/limsup.
struct DimensionEstimate {
  double value = 0;
  double std_error = 0;
  double lower = 0;
  double upper = 0;
  int n_min = 0;
  int n_max = 0;
  std::string method;
};

namespace detail {

struct OlsFit {
  double slope = 0;
  double std_error = 0;
};

inline OlsFit ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::size_t n = x.size();
  require(n >= 2 && y.size() == n, "regression needs at least two depths");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0, "regression needs distinct depths");
  OlsFit f;
  f.slope = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - my - f.slope * (x[i] - mx);
    sse += r * r;
  }
  if (n > 2) f.std_error = std::sqrt(sse / (double(n - 2) * sxx));
  // floor keeps exact fits from reporting zero uncertainty
  f.std_error = std::max(f.std_error, 1e-12 * std::max(1.0, std::abs(f.slope)));
  return f;
}

inline int sliding_window_width(int count) { return std::max(3, (count + 1) / 2); }

// slopes over each contiguous window of the default width
inline std::vector<double> window_slopes(const std::vector<double>& x,
                                         const std::vector<double>& y) {
  int n = int(x.size());
  int w = sliding_window_width(n);
  std::vector<double> out;
  if (w > n) w = n;
  for (int i = 0; i + w <= n; ++i) {
    std::vector<double> wx(x.begin() + i, x.begin() + i + w);
    std::vector<double> wy(y.begin() + i, y.begin() + i + w);
    out.push_back(ols_slope(wx, wy).slope);
  }
  return out;
}

inline DimensionEstimate slope_estimate(const std::vector<double>& x,
                                        const std::vector<double>& y, int n_min,
                                        int n_max, const std::string& method) {
  OlsFit f = ols_slope(x, y);
  DimensionEstimate e;
  e.value = f.slope;
  e.std_error = f.std_error;
  e.n_min = n_min;
  e.n_max = n_max;
  e.method = method;
  std::vector<double> ws = window_slopes(x, y);
  e.lower = e.upper = f.slope;
  for (double s : ws) {
    e.lower = std::min(e.lower, s);
    e.upper = std::max(e.upper, s);
  }
  return e;
}

}  // namespace detail

// Entropy over the depth-m cells, natural log; 0 log 0 = 0.
inline double shannon_entropy(const TreeMeasure& t, int m) {
  require(m >= 0 && m <= t.depth, "entropy: depth out of range");
  require(std::abs(t.total - 1.0) <= 1e-9, "entropy needs a normalized measure");
  if (m == t.depth) {
    double h = 0;
    for (const auto& [k, mass] : t.leaves)
      if (mass > 0) h -= mass * std::log(mass);
    return h;
  }
  std::map<CellKey, double> cells;
  for (const auto& [k, mass] : t.leaves)
    cells[key_prefix(k, t.base, t.depth, m)] += mass;
  double h = 0;
  for (const auto& [k, mass] : cells)
    if (mass > 0) h -= mass * std::log(mass);
  return h;
}

// Entropy at one depth of a source, streamed without materializing the tree.
inline double streamed_entropy(const MeasureSource& src, int n) {
  double h = 0;
  src.for_each_leaf(n, [&](const CellKey&, double m) {
    if (m > 0) h -= m * std::log(m);
  });
  return h;
}

// Growth slope of H(depth n) against n log b over [n_min, n_max].
inline DimensionEstimate entropy_dimension(const MeasureSource& src, int n_min = 4,
                                           int n_max = 12) {
  require(1 <= n_min && n_min < n_max, "entropy dimension: bad depth range");
  numeric_require(n_max <= src.max_refine_depth(),
                  "entropy dimension: depth " + std::to_string(n_max) +
                      " exceeds resolution budget " +
                      std::to_string(src.max_refine_depth()));
  std::vector<double> xs, ys;
  double lb = std::log(double(src.base()));
  for (int n = n_min; n <= n_max; ++n) {
    xs.push_back(n * lb);
    ys.push_back(streamed_entropy(src, n));
  }
  return detail::slope_estimate(xs, ys, n_min, n_max, "entropy-slope");
}

inline DimensionEstimate entropy_dimension(const TreeMeasure& t, int n_min = 4,
                                           int n_max = 12) {
  require(1 <= n_min && n_min < n_max, "entropy dimension: bad depth range");
  require(n_max <= t.depth, "entropy dimension: tree shallower than n_max");
  std::vector<double> xs, ys;
  double lb = std::log(double(t.base));
  TreeMeasure cur = coarsen(t, n_max);
  for (int n = n_max; n >= n_min; --n) {
    xs.push_back(n * lb);
    ys.push_back(shannon_entropy(cur, n));
    if (n > n_min) cur = coarsen(cur, n - 1);
  }
  std::reverse(xs.begin(), xs.end());
  std::reverse(ys.begin(), ys.end());
  return detail::slope_estimate(xs, ys, n_min, n_max, "entropy-slope");
}

// Decay slope of the point's cell masses: -log mass against n log b.
inline DimensionEstimate local_dimension(const MeasureSource& src, const PointDigits& x,
                                         int n_min = 4, int n_max = 12) {
  require(1 <= n_min && n_min < n_max, "local dimension: bad depth range");
  require(x.depth() >= n_max, "local dimension: point expansion too short");
  std::vector<double> xs, ys;
  double lb = std::log(double(src.base()));
  for (int n = n_min; n <= n_max; ++n) {
    double m = src.path_mass(x, n);
    numeric_require(m > 0, "local dimension: cell mass vanishes at depth " +
                               std::to_string(n));
    xs.push_back(n * lb);
    ys.push_back(-std::log(m));
  }
  return detail::slope_estimate(xs, ys, n_min, n_max, "local-mass-slope");
}

inline DimensionEstimate local_dimension(const TreeMeasure& t, const PointDigits& x,
                                         int n_min, int n_max) {
  require(1 <= n_min && n_min < n_max, "local dimension: bad depth range");
  require(n_max <= t.depth, "local dimension: tree shallower than n_max");
  std::vector<double> masses = path_masses(t, x, n_max);
  std::vector<double> xs, ys;
  double lb = std::log(double(t.base));
  for (int n = n_min; n <= n_max; ++n) {
    double m = masses[n - 1] / t.total;
    numeric_require(m > 0, "local dimension: cell mass vanishes at depth " +
                               std::to_string(n));
    xs.push_back(n * lb);
    ys.push_back(-std::log(m));
  }
  return detail::slope_estimate(xs, ys, n_min, n_max, "local-mass-slope");
}

namespace detail {

// integral over [lo,hi] (window-relative coordinates in [0,1]) of the hat
// centered at u/b with support width 2/b
inline double hat_integral(double lo, double hi, int u, int b) {
  auto G = [](double s) {
    if (s <= -1) return 0.0;
    if (s <= 0) return 0.5 * (s + 1) * (s + 1);
    if (s <= 1) return 0.5 + s - 0.5 * s * s;
    return 1.0;
  };
  return (G(double(b) * hi - u) - G(double(b) * lo - u)) / double(b);
}

inline double clipped_len(double lo, double hi, double a, double b2) {
  return std::max(0.0, std::min(hi, b2) - std::max(lo, a));
}

}  // namespace detail

// Leaf-uniform entropy over the width-1/b box partition of the window; the
// partition need not match the tree's own base.
inline double box_partition_entropy(const TreeMeasure& t, int b) {
  require(b >= 2, "partition base must be >= 2");
  require(std::abs(t.total - 1.0) <= 1e-9, "entropy needs a normalized measure");
  std::map<CellKey, double> w;
  Vec clo, chi;
  for (const auto& [k, mass] : t.leaves) {
    cell_box(t.window, t.base, t.depth, k, clo, chi);
    // per-axis overlap fractions with the partition intervals
    std::array<std::vector<std::pair<int, double>>, kMaxDim> ax;
    for (int a = 0; a < t.dim; ++a) {
      double l = (clo[a] - t.window.lo(a)) / t.window.side();
      double h = (chi[a] - t.window.lo(a)) / t.window.side();
      double len = h - l;
      int u0 = std::max(0, int(std::floor(l * b)));
      int u1 = std::min(b - 1, int(std::ceil(h * b)) - 1);
      for (int u = u0; u <= u1; ++u) {
        double f = detail::clipped_len(l, h, double(u) / b, double(u + 1) / b) / len;
        if (f > 0) ax[a].push_back({u, f});
      }
    }
    std::array<std::size_t, kMaxDim> pick{0, 0, 0};
    for (;;) {
      double f = 1;
      CellKey key;
      for (int a = 0; a < t.dim; ++a) {
        f *= ax[a][pick[a]].second;
        key.ax[a] = std::uint64_t(ax[a][pick[a]].first);
      }
      if (f > 0) w[key] += mass * f;
      int a = 0;
      while (a < t.dim && ++pick[a] == ax[a].size()) pick[a++] = 0;
      if (a == t.dim) break;
    }
  }
  double h = 0, tot = 0;
  for (const auto& [k, v] : w) tot += v;
  for (const auto& [k, v] : w)
    if (v > 0) h -= (v / tot) * std::log(v / tot);
  return h;
}

// Entropy of the hat-function partition of unity of width 2/b. Continuous in
// the measure, unlike the raw cell entropy; stays within d log 9 of it.
inline double smoothed_entropy(const TreeMeasure& t, int b) {
  require(b >= 2, "smoothing base must be >= 2");
  require(std::abs(t.total - 1.0) <= 1e-9, "entropy needs a normalized measure");
  std::map<CellKey, double> w;
  Vec clo, chi;
  for (const auto& [k, mass] : t.leaves) {
    cell_box(t.window, t.base, t.depth, k, clo, chi);
    std::array<std::vector<std::pair<int, double>>, kMaxDim> ax;
    for (int a = 0; a < t.dim; ++a) {
      double l = (clo[a] - t.window.lo(a)) / t.window.side();
      double h = (chi[a] - t.window.lo(a)) / t.window.side();
      double len = h - l;
      int u0 = std::max(0, int(std::floor(l * b)) - 1);
      int u1 = std::min(b, int(std::ceil(h * b)) + 1);
      for (int u = u0; u <= u1; ++u) {
        double f = detail::hat_integral(l, h, u, b) / len;
        if (f > 0) ax[a].push_back({u, f});
      }
    }
    std::array<std::size_t, kMaxDim> pick{0, 0, 0};
    for (;;) {
      double f = 1;
      CellKey key;
      for (int a = 0; a < t.dim; ++a) {
        f *= ax[a][pick[a]].second;
        key.ax[a] = std::uint64_t(ax[a][pick[a]].first);
      }
      if (f > 0) w[key] += mass * f;
      int a = 0;
      while (a < t.dim && ++pick[a] == ax[a].size()) pick[a++] = 0;
      if (a == t.dim) break;
    }
  }
  double h = 0;
  for (const auto& [k, v] : w)
    if (v > 0) h -= v * std::log(v);
  assert(std::abs(h - box_partition_entropy(t, b)) <= t.dim * std::log(9.0) + 1e-9);
  return h;
}

struct DistributionDimension {
  double value = 0;
  double excluded_weight = 0;  // atoms with no mass on the ball
};

// Streaming accumulator for the ball-mass dimension of a distribution.
class BallDimensionAccumulator {
 public:
  explicit BallDimensionAccumulator(double r) : r_(r) {
    require(r > 0 && r < 1, "ball radius must lie in (0,1)");
  }

  void add(const TreeMeasure& t, double w) {
    if (w <= 0) return;
    Vec origin{0, 0, 0};
    MassWithBound m = ball_mass(t, origin, r_);
    if (m.value <= 0 || t.total <= 0) {
      excluded_ += w;
      return;
    }
    num_ += w * std::log(m.value / t.total);
    wsum_ += w;
  }

  DistributionDimension result() const {
    numeric_require(wsum_ > 0, "distribution dimension: every atom was excluded");
    DistributionDimension d;
    d.value = num_ / (wsum_ * std::log(r_));
    d.excluded_weight = excluded_;
    return d;
  }

 private:
  double r_;
  double num_ = 0;
  double wsum_ = 0;
  double excluded_ = 0;
};

inline DistributionDimension distribution_dimension(const EmpiricalDistribution& p,
                                                    double r) {
  BallDimensionAccumulator acc(r);
  for (const auto& a : p.atoms) acc.add(*a.mu, a.w);
  return acc.result();
}

// Pooled spread of sliding-window local-dimension slopes over sampled points.
// Exact-dimensional measures give small values; scale- or point-dependent
// dimension inflates it.
inline double exactness_spread(const MeasureSource& src, int n_points, int n_min,
                               int n_max, std::uint64_t seed) {
  require(n_points >= 2, "spread needs at least two points");
  require(1 <= n_min && n_min < n_max, "spread: bad depth range");
  std::vector<std::vector<double>> slopes(n_points);
  parallel_for(std::size_t(n_points), [&](std::size_t i) {
    Rng rng = derive_stream(seed, i);
    PointDigits x = src.sample(n_max, rng);
    std::vector<double> xs, ys;
    double lb = std::log(double(src.base()));
    for (int n = n_min; n <= n_max; ++n) {
      double m = src.path_mass(x, n);
      numeric_require(m > 0, "spread: sampled point left the support at depth " +
                                 std::to_string(n));
      xs.push_back(n * lb);
      ys.push_back(-std::log(m));
    }
    slopes[i] = detail::window_slopes(xs, ys);
  });
  std::vector<double> pool;
  for (const auto& v : slopes) pool.insert(pool.end(), v.begin(), v.end());
  require(pool.size() >= 2, "spread: not enough regression windows");
  double mean = 0;
  for (double s : pool) mean += s;
  mean /= double(pool.size());
  double var = 0;
  for (double s : pool) var += (s - mean) * (s - mean);
  return std::sqrt(var / double(pool.size() - 1));
}

}  // namespace scenery
