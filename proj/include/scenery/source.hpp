#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "scenery/maps.hpp"
#include "scenery/rebin.hpp"
#include "scenery/rng.hpp"
#include "scenery/tree.hpp"

namespace scenery {

struct WeightedBox {
  Vec lo{0, 0, 0};
  Vec hi{0, 0, 0};
  double mass = 0;
};

// Descent state of a lazy refinement cursor. Every variant keeps whatever it
// needs per axis in the key slots (Markov: last digit + 1, frozen trees: the
// cell path); stateless variants ignore it.
using DescState = CellKey;

// Path budget sentinel for stationary refinement rules: digit paths are kept
// as digit vectors, so they are not limited by the key capacity that caps
// whole-tree refinement.
inline constexpr int kUnboundedDepth = 1 << 28;

using ChildVisitor = std::function<void(const int*, double, const DescState&)>;

// A measure given by a recursive cell-refinement rule (streamable variants) or
// by a canonical list of weighted boxes (deposit variants). refine() at any
// depth within budget is consistent under coarsening by construction.
class SourceImpl {
 public:
  SourceImpl(int base, int dim, const Window& w) : base_(base), dim_(dim), win_(w) {
    require(base >= 2, "base must be >= 2");
    require(dim >= 1 && dim <= kMaxDim, "dim must be 1..3");
    require(w.dim == dim, "window dimension mismatch");
  }
  virtual ~SourceImpl() = default;

  int base() const { return base_; }
  int dim() const { return dim_; }
  const Window& window() const { return win_; }

  virtual bool streamable() const = 0;
  virtual std::string kind() const = 0;
  virtual std::string describe() const { return kind(); }
  virtual int max_refine_depth() const { return max_depth_for_base(base_); }

  // deepest digit path the conditional rule can follow; stationary streamable
  // rules are unbounded, deposit variants stop at their canonical refinement
  virtual int max_path_depth() const { return max_refine_depth(); }

  // conditional child masses of the node `s` sitting at `level`
  virtual void children(const DescState& s, int level, const ChildVisitor& f) const {
    (void)s;
    (void)level;
    (void)f;
    throw SpecError(kind() + ": not a streamable source");
  }

  virtual const std::vector<WeightedBox>& atoms() const {
    throw SpecError(kind() + ": no canonical atom decomposition");
  }

  virtual std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const {
    (void)axes;
    return std::nullopt;
  }

  // memoized full refinement, shared across copies of the handle
  std::shared_ptr<const TreeMeasure> refined(int depth) const;

 protected:
  int base_;
  int dim_;
  Window win_;

 private:
  mutable std::mutex mu_;
  mutable std::vector<std::pair<int, std::shared_ptr<const TreeMeasure>>> cache_;
};

class MeasureSource {
 public:
  MeasureSource() = default;
  explicit MeasureSource(std::shared_ptr<const SourceImpl> p) : p_(std::move(p)) {}

  bool valid() const { return p_ != nullptr; }
  int base() const { return p_->base(); }
  int dim() const { return p_->dim(); }
  const Window& window() const { return p_->window(); }
  bool streamable() const { return p_->streamable(); }
  std::string kind() const { return p_->kind(); }
  std::string describe() const { return p_->describe(); }
  int max_refine_depth() const { return p_->max_refine_depth(); }
  int max_path_depth() const { return p_->max_path_depth(); }
  const SourceImpl& impl() const { return *p_; }
  std::shared_ptr<const SourceImpl> ptr() const { return p_; }

  // depth-n tree, total mass 1
  TreeMeasure refine(int depth) const { return *p_->refined(depth); }
  std::shared_ptr<const TreeMeasure> refine_shared(int depth) const {
    return p_->refined(depth);
  }

  void for_each_leaf(int depth, const std::function<void(const CellKey&, double)>& f) const;

  // conditional measure of the depth-plen cell containing `path`, rescaled to
  // the standard frame, refined `extra` levels; total mass 1
  TreeMeasure refine_conditional(const PointDigits& path, int plen, int extra) const;

  // mass of the depth-n cell containing the point
  double path_mass(const PointDigits& p, int n) const;

  PointDigits sample(int depth, Rng& rng) const;

  std::optional<MeasureSource> project_axes(const std::vector<int>& axes) const {
    auto r = p_->project_axes(axes);
    if (!r) return std::nullopt;
    return MeasureSource(*r);
  }

 private:
  std::shared_ptr<const SourceImpl> p_;
};

// ---------------------------------------------------------------------------
// streaming refinement helpers

namespace detail {

template <class LeafFn>
inline void stream_leaves(const SourceImpl& s, int depth, const LeafFn& leaf) {
  struct Rec {
    const SourceImpl& s;
    int depth;
    const LeafFn& leaf;
    void run(const DescState& st, int level, const CellKey& prefix, double mass) const {
      if (level == depth) {
        leaf(prefix, mass);
        return;
      }
      s.children(st, level, [&](const int* dg, double f, const DescState& cs) {
        if (f <= 0 || mass * f <= 0) return;
        CellKey np = prefix;
        for (int a = 0; a < s.dim(); ++a)
          np.ax[a] = np.ax[a] * std::uint64_t(s.base()) + std::uint64_t(dg[a]);
        run(cs, level + 1, np, mass * f);
      });
    }
  };
  Rec{s, depth, leaf}.run(DescState{}, 0, CellKey{}, 1.0);
}

// follow one digit tuple down; returns conditional mass (0 if unsupported)
inline double descend_once(const SourceImpl& s, const DescState& st, int level,
                           const int* want, DescState& out) {
  double frac = 0;
  s.children(st, level, [&](const int* dg, double f, const DescState& cs) {
    bool match = true;
    for (int a = 0; a < s.dim(); ++a)
      if (dg[a] != want[a]) {
        match = false;
        break;
      }
    if (match) {
      frac = f;
      out = cs;
    }
  });
  return frac;
}

}  // namespace detail

inline std::shared_ptr<const TreeMeasure> SourceImpl::refined(int depth) const {
  require(depth >= 0, "refine: negative depth");
  if (depth > max_refine_depth())
    throw NumericalError(kind() + ": requested depth " + std::to_string(depth) +
                         " exceeds resolution budget " + std::to_string(max_refine_depth()));
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [d, t] : cache_)
      if (d == depth) return t;
  }
  TreeMeasure t = make_tree(base_, dim_, depth, win_);
  if (streamable()) {
    detail::stream_leaves(*this, depth, [&](const CellKey& k, double m) { t.add(k, m); });
  } else {
    Depositor dep(base_, dim_, depth, win_);
    for (const auto& b : atoms()) dep.box(b.lo, b.hi, b.mass);
    t = dep.take();
  }
  auto sp = std::make_shared<const TreeMeasure>(std::move(t));
  std::lock_guard<std::mutex> lock(mu_);
  if (cache_.size() >= 8) cache_.erase(cache_.begin());
  cache_.push_back({depth, sp});
  return sp;
}

inline void MeasureSource::for_each_leaf(
    int depth, const std::function<void(const CellKey&, double)>& f) const {
  if (p_->streamable()) {
    require(depth <= max_refine_depth(), "for_each_leaf: depth exceeds budget");
    detail::stream_leaves(*p_, depth, f);
  } else {
    auto t = p_->refined(depth);
    for (const auto& [k, m] : t->leaves) f(k, m);
  }
}

inline TreeMeasure MeasureSource::refine_conditional(const PointDigits& path, int plen,
                                                     int extra) const {
  require(plen <= path.depth(), "refine_conditional: path too short");
  if (p_->streamable()) {
    DescState st{};
    int level = 0;
    for (int j = 0; j < plen; ++j) {
      int want[kMaxDim] = {0, 0, 0};
      for (int a = 0; a < dim(); ++a) want[a] = path.d[a][j];
      DescState next;
      double f = detail::descend_once(*p_, st, level, want, next);
      numeric_require(f > 0, "refine_conditional: cell along the path has mass zero");
      st = next;
      ++level;
    }
    require(extra <= max_refine_depth(), "refine_conditional: depth exceeds budget");
    require(plen + extra <= p_->max_path_depth(),
            "refine_conditional: path exceeds the conditional budget");
    TreeMeasure t = make_tree(base(), dim(), extra, unit_window(dim()));
    struct Rec {
      const SourceImpl& s;
      int target;
      TreeMeasure& t;
      void run(const DescState& stx, int level, const CellKey& prefix, double mass,
               int rel) const {
        if (rel == target) {
          t.add(prefix, mass);
          return;
        }
        s.children(stx, level, [&](const int* dg, double f, const DescState& cs) {
          if (f <= 0) return;
          CellKey np = prefix;
          for (int a = 0; a < s.dim(); ++a)
            np.ax[a] = np.ax[a] * std::uint64_t(s.base()) + std::uint64_t(dg[a]);
          run(cs, level + 1, np, mass * f, rel + 1);
        });
      }
    };
    Rec{*p_, extra, t}.run(st, plen, CellKey{}, 1.0, 0);
    numeric_require(t.total > 0, "refine_conditional: empty conditional measure");
    double inv = 1.0 / t.total;
    return scale_tree(std::move(t), inv);
  }
  // deposit variant: cut the cell out of the canonical refinement
  int canon = max_refine_depth();
  numeric_require(plen + extra <= canon,
                  "refine_conditional: depth " + std::to_string(plen + extra) +
                      " exceeds resolution budget " + std::to_string(canon));
  auto full = p_->refined(plen + extra);
  CellKey cell = digits_to_key(path, base(), plen);
  TreeMeasure t = make_tree(base(), dim(), extra, unit_window(dim()));
  std::uint64_t span = upow(std::uint64_t(base()), extra);
  for (const auto& [k, m] : full->leaves) {
    bool in = true;
    for (int a = 0; a < dim(); ++a)
      if (k.ax[a] / span != cell.ax[a]) {
        in = false;
        break;
      }
    if (!in) continue;
    CellKey rel;
    for (int a = 0; a < dim(); ++a) rel.ax[a] = k.ax[a] % span;
    t.add(rel, m);
  }
  numeric_require(t.total > 0, "refine_conditional: cell along the path has mass zero");
  double inv = 1.0 / t.total;
  t = scale_tree(std::move(t), inv);
  t.rebin_error_bound = full->rebin_error_bound * inv;
  return t;
}

inline double MeasureSource::path_mass(const PointDigits& p, int n) const {
  require(n <= p.depth(), "path_mass: expansion too short");
  if (p_->streamable()) {
    DescState st{};
    double mass = 1.0;
    for (int j = 0; j < n; ++j) {
      int want[kMaxDim] = {0, 0, 0};
      for (int a = 0; a < dim(); ++a) want[a] = p.d[a][j];
      DescState next;
      double f = detail::descend_once(*p_, st, j, want, next);
      if (f <= 0) return 0.0;
      st = next;
      mass *= f;
    }
    return mass;
  }
  auto t = p_->refined(std::min(n, max_refine_depth()));
  numeric_require(n <= t->depth, "path_mass: depth exceeds resolution budget");
  return cell_mass(*t, digits_to_key(p, base(), n), n);
}

inline PointDigits MeasureSource::sample(int depth, Rng& rng) const {
  PointDigits out;
  out.dim = dim();
  for (int a = 0; a < dim(); ++a) out.d[a].resize(depth);
  if (p_->streamable()) {
    require(depth <= p_->max_path_depth(), "sample: depth exceeds the path budget");
    DescState st{};
    for (int j = 0; j < depth; ++j) {
      std::vector<double> w;
      std::vector<std::array<int, kMaxDim>> dgs;
      std::vector<DescState> sts;
      p_->children(st, j, [&](const int* dg, double f, const DescState& cs) {
        if (f <= 0) return;
        w.push_back(f);
        std::array<int, kMaxDim> d{0, 0, 0};
        for (int a = 0; a < dim(); ++a) d[a] = dg[a];
        dgs.push_back(d);
        sts.push_back(cs);
      });
      numeric_require(!w.empty(), "sample: node with no supported children");
      int pick = rng.pick(w);
      for (int a = 0; a < dim(); ++a) out.d[a][j] = std::uint8_t(dgs[pick][a]);
      st = sts[pick];
    }
    return out;
  }
  auto t = p_->refined(std::min(depth, max_refine_depth()));
  numeric_require(depth <= t->depth, "sample: depth exceeds resolution budget");
  double u = rng.uniform() * t->total;
  double acc = 0;
  CellKey hit = t->leaves.rbegin()->first;
  for (const auto& [k, m] : t->leaves) {
    acc += m;
    if (u < acc) {
      hit = k;
      break;
    }
  }
  return key_to_digits(hit, base(), depth, dim());
}

// ---------------------------------------------------------------------------
// variants

class LebesgueImpl final : public SourceImpl {
 public:
  LebesgueImpl(int base, int dim, const Window& w) : SourceImpl(base, dim, w) {}
  bool streamable() const override { return true; }
  int max_path_depth() const override { return kUnboundedDepth; }
  std::string kind() const override { return "lebesgue"; }
  std::string describe() const override {
    return "lebesgue d=" + std::to_string(dim_);
  }
  void children(const DescState&, int, const ChildVisitor& f) const override {
    double frac = 1.0 / ipow(double(base_), dim_);
    int dg[kMaxDim] = {0, 0, 0};
    DescState st{};
    for (;;) {
      f(dg, frac, st);
      int a = 0;
      while (a < dim_ && ++dg[a] == base_) dg[a++] = 0;
      if (a == dim_) break;
    }
  }
  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    Window w;
    w.dim = int(axes.size());
    w.half = win_.half;
    for (std::size_t i = 0; i < axes.size(); ++i) w.center[i] = win_.center[axes[i]];
    return std::make_shared<LebesgueImpl>(base_, w.dim, w);
  }
};

class PointMassImpl final : public SourceImpl {
 public:
  PointMassImpl(const PointDigits& p, int base, const Window& w)
      : SourceImpl(base, p.dim, w), pt_(p) {}
  bool streamable() const override { return true; }
  std::string kind() const override { return "point_mass"; }
  int max_refine_depth() const override {
    return std::min(pt_.depth(), max_depth_for_base(base_));
  }
  // beyond the stored expansion the point continues with zero digits
  int max_path_depth() const override { return kUnboundedDepth; }
  void children(const DescState&, int level, const ChildVisitor& f) const override {
    int dg[kMaxDim] = {0, 0, 0};
    for (int a = 0; a < dim_; ++a)
      dg[a] = level < pt_.depth() ? pt_.d[a][level] : 0;
    f(dg, 1.0, DescState{});
  }
  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    PointDigits q;
    q.dim = int(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) q.d[i] = pt_.d[axes[i]];
    Window w;
    w.dim = q.dim;
    w.half = win_.half;
    for (std::size_t i = 0; i < axes.size(); ++i) w.center[i] = win_.center[axes[i]];
    return std::make_shared<PointMassImpl>(q, base_, w);
  }
  const PointDigits& point() const { return pt_; }

 private:
  PointDigits pt_;
};

class DigitIIDImpl final : public SourceImpl {
 public:
  DigitIIDImpl(int base, std::vector<double> probs, const Window& w)
      : SourceImpl(base, 1, w), p_(std::move(probs)) {
    require(int(p_.size()) == base, "digit distribution size must equal base");
    double s = 0;
    for (double x : p_) {
      require(x >= 0, "digit probabilities must be nonnegative");
      s += x;
    }
    require(std::abs(s - 1.0) <= 1e-9, "digit probabilities must sum to 1");
    for (auto& x : p_) x /= s;
  }
  bool streamable() const override { return true; }
  int max_path_depth() const override { return kUnboundedDepth; }
  std::string kind() const override { return "digit_iid"; }
  std::string describe() const override {
    return "digit_iid b=" + std::to_string(base_);
  }
  void children(const DescState&, int, const ChildVisitor& f) const override {
    int dg[kMaxDim] = {0, 0, 0};
    for (int d = 0; d < base_; ++d) {
      if (p_[d] <= 0) continue;
      dg[0] = d;
      f(dg, p_[d], DescState{});
    }
  }
  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    if (axes.size() == 1 && axes[0] == 0)
      return std::make_shared<DigitIIDImpl>(base_, p_, win_);
    return std::nullopt;
  }
  const std::vector<double>& probs() const { return p_; }

 private:
  std::vector<double> p_;
};

// Order-1 Markov digit process; the conditional law keys on the last digit.
class DigitMarkovImpl final : public SourceImpl {
 public:
  DigitMarkovImpl(int base, std::vector<double> rows, std::vector<double> init,
                  const Window& w)
      : SourceImpl(base, 1, w), rows_(std::move(rows)), init_(std::move(init)) {
    require(int(rows_.size()) == base * base, "transition matrix must be base x base");
    require(int(init_.size()) == base, "initial distribution size must equal base");
    for (int r = 0; r < base; ++r) {
      double s = 0;
      for (int c = 0; c < base; ++c) {
        require(rows_[r * base + c] >= 0, "transition entries must be nonnegative");
        s += rows_[r * base + c];
      }
      require(std::abs(s - 1.0) <= 1e-9, "transition rows must sum to 1");
      for (int c = 0; c < base; ++c) rows_[r * base + c] /= s;
    }
    double s = 0;
    for (double x : init_) {
      require(x >= 0, "initial distribution must be nonnegative");
      s += x;
    }
    require(s > 0, "initial distribution must not vanish");
    for (auto& x : init_) x /= s;
  }
  bool streamable() const override { return true; }
  int max_path_depth() const override { return kUnboundedDepth; }
  std::string kind() const override { return "digit_markov"; }
  void children(const DescState& s, int, const ChildVisitor& f) const override {
    const double* p = s.ax[0] == 0 ? init_.data() : rows_.data() + (s.ax[0] - 1) * base_;
    int dg[kMaxDim] = {0, 0, 0};
    for (int d = 0; d < base_; ++d) {
      if (p[d] <= 0) continue;
      dg[0] = d;
      DescState cs{};
      cs.ax[0] = std::uint64_t(d) + 1;
      f(dg, p[d], cs);
    }
  }
  const std::vector<double>& rows() const { return rows_; }
  const std::vector<double>& init() const { return init_; }

 private:
  std::vector<double> rows_;
  std::vector<double> init_;
};

class ProductImpl final : public SourceImpl {
 public:
  static Window joined(const Window& a, const Window& b) {
    require(a.half == b.half, "product factors must share the window half-side");
    Window w;
    w.dim = a.dim + b.dim;
    w.half = a.half;
    for (int i = 0; i < a.dim; ++i) w.center[i] = a.center[i];
    for (int i = 0; i < b.dim; ++i) w.center[a.dim + i] = b.center[i];
    return w;
  }

  ProductImpl(std::shared_ptr<const SourceImpl> l, std::shared_ptr<const SourceImpl> r)
      : SourceImpl(l->base(), l->dim() + r->dim(), joined(l->window(), r->window())),
        l_(std::move(l)),
        r_(std::move(r)) {
    require(l_->base() == r_->base(), "product factors must share the base");
    require(dim_ <= kMaxDim, "product dimension exceeds 3");
    require(l_->streamable() && r_->streamable(),
            "product factors must be streamable (freeze deposit sources first)");
  }
  bool streamable() const override { return true; }
  std::string kind() const override { return "product"; }
  std::string describe() const override {
    return "product(" + l_->describe() + ", " + r_->describe() + ")";
  }
  int max_refine_depth() const override {
    return std::min(l_->max_refine_depth(), r_->max_refine_depth());
  }
  int max_path_depth() const override {
    return std::min(l_->max_path_depth(), r_->max_path_depth());
  }
  void children(const DescState& s, int level, const ChildVisitor& f) const override {
    int dl = l_->dim();
    DescState sl{}, sr{};
    for (int a = 0; a < dl; ++a) sl.ax[a] = s.ax[a];
    for (int a = 0; a < r_->dim(); ++a) sr.ax[a] = s.ax[dl + a];
    l_->children(sl, level, [&](const int* dgl, double fl, const DescState& cl) {
      r_->children(sr, level, [&](const int* dgr, double fr, const DescState& cr) {
        int dg[kMaxDim] = {0, 0, 0};
        DescState cs{};
        for (int a = 0; a < dl; ++a) {
          dg[a] = dgl[a];
          cs.ax[a] = cl.ax[a];
        }
        for (int a = 0; a < r_->dim(); ++a) {
          dg[dl + a] = dgr[a];
          cs.ax[dl + a] = cr.ax[a];
        }
        f(dg, fl * fr, cs);
      });
    });
  }
  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    // factor-aligned selections, at most one block per factor in either order;
    // interleaved axis lists would need a digit-level reshuffle
    if (axes.empty()) return std::nullopt;
    auto from_right = [&](int a) { return a >= l_->dim(); };
    std::size_t cut = 1;
    while (cut < axes.size() && from_right(axes[cut]) == from_right(axes[0]))
      ++cut;
    for (std::size_t i = cut; i < axes.size(); ++i)
      if (from_right(axes[i]) == from_right(axes[0])) return std::nullopt;
    auto block = [&](std::size_t b, std::size_t e) {
      std::vector<int> part;
      int shift = from_right(axes[b]) ? l_->dim() : 0;
      for (std::size_t i = b; i < e; ++i) part.push_back(axes[i] - shift);
      return (shift ? r_ : l_)->project_axes(part);
    };
    auto first = block(0, cut);
    if (!first) return std::nullopt;
    if (cut == axes.size()) return first;
    auto second = block(cut, axes.size());
    if (!second) return std::nullopt;
    return std::make_shared<ProductImpl>(*first, *second);
  }
  std::shared_ptr<const SourceImpl> left() const { return l_; }
  std::shared_ptr<const SourceImpl> right() const { return r_; }

 private:
  std::shared_ptr<const SourceImpl> l_;
  std::shared_ptr<const SourceImpl> r_;
};

class FrozenImpl final : public SourceImpl {
 public:
  explicit FrozenImpl(TreeMeasure t)
      : SourceImpl(t.base, t.dim, t.window), tree_(std::move(t)) {
    numeric_require(tree_.total > 0, "frozen: empty tree");
  }
  bool streamable() const override { return true; }
  std::string kind() const override { return "frozen"; }
  std::string describe() const override {
    return "frozen depth=" + std::to_string(tree_.depth);
  }
  int max_refine_depth() const override { return tree_.depth; }
  const TreeMeasure& tree() const { return tree_; }

  void children(const DescState& s, int level, const ChildVisitor& f) const override {
    numeric_require(level < tree_.depth,
                    "frozen: refinement beyond stored depth " + std::to_string(tree_.depth));
    build_levels();
    const auto& parent_map = levels_[level];
    const auto& child_map = levels_[level + 1];
    auto pit = parent_map.find(s);
    if (pit == parent_map.end() || pit->second <= 0) return;
    double pm = pit->second;
    int dg[kMaxDim] = {0, 0, 0};
    for (;;) {
      DescState ck{};
      for (int a = 0; a < dim_; ++a)
        ck.ax[a] = s.ax[a] * std::uint64_t(base_) + std::uint64_t(dg[a]);
      auto cit = child_map.find(ck);
      if (cit != child_map.end() && cit->second > 0) f(dg, cit->second / pm, ck);
      int a = 0;
      while (a < dim_ && ++dg[a] == base_) dg[a++] = 0;
      if (a == dim_) break;
    }
  }

  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    Window w;
    w.dim = int(axes.size());
    w.half = win_.half;
    for (std::size_t i = 0; i < axes.size(); ++i) w.center[i] = win_.center[axes[i]];
    TreeMeasure out = make_tree(base_, w.dim, tree_.depth, w);
    out.rebin_error_bound = tree_.rebin_error_bound;
    for (const auto& [k, m] : tree_.leaves) {
      CellKey nk;
      for (std::size_t i = 0; i < axes.size(); ++i) nk.ax[i] = k.ax[axes[i]];
      out.add(nk, m);
    }
    return std::make_shared<FrozenImpl>(std::move(out));
  }

 private:
  void build_levels() const {
    std::lock_guard<std::mutex> lock(mu_);
    if (!levels_.empty()) return;
    levels_.resize(tree_.depth + 1);
    levels_[tree_.depth] = tree_.leaves;
    for (int d = tree_.depth; d > 0; --d)
      for (const auto& [k, m] : levels_[d])
        levels_[d - 1][key_prefix(k, tree_.base, d, d - 1)] += m;
    // conditional fractions are relative to the (possibly unnormalized) total
  }

  TreeMeasure tree_;
  mutable std::mutex mu_;
  mutable std::vector<std::map<CellKey, double>> levels_;
};

// Digit schedule: levels [start_i, start_{i+1}) draw their digits from
// component i restarted inside each cell; the last component governs all
// deeper levels and must therefore be refinable there.
class SpliceImpl final : public SourceImpl {
 public:
  SpliceImpl(std::vector<std::shared_ptr<const SourceImpl>> comps,
             std::vector<int> starts, const Window& w)
      : SourceImpl(comps.empty() ? 2 : comps[0]->base(),
                   comps.empty() ? 1 : comps[0]->dim(), w),
        comps_(std::move(comps)),
        starts_(std::move(starts)) {
    require(!comps_.empty(), "splice needs at least one component");
    require(starts_.size() == comps_.size(), "splice: one start level per component");
    require(starts_[0] == 0, "splice: first stage starts at level 0");
    for (std::size_t i = 1; i < starts_.size(); ++i)
      require(starts_[i] > starts_[i - 1], "splice: stage starts must increase");
    for (const auto& c : comps_) {
      require(c->base() == base_, "splice components must share the base");
      require(c->dim() == dim_, "splice components must share the dimension");
    }
    // intermediate stages only need their bounded span; materialize deposit
    // variants there, but the final stage must stream
    for (std::size_t i = 0; i + 1 < comps_.size(); ++i) {
      if (!comps_[i]->streamable()) {
        int span = starts_[i + 1] - starts_[i];
        comps_[i] = std::make_shared<FrozenImpl>(*comps_[i]->refined(span));
      }
    }
    require(comps_.back()->streamable(),
            "splice: final component must be streamable at arbitrary depth");
  }
  bool streamable() const override { return true; }
  std::string kind() const override { return "splice"; }
  std::string describe() const override {
    std::string s = "splice(";
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      if (i) s += ", ";
      s += comps_[i]->describe() + "@" + std::to_string(starts_[i]);
    }
    return s + ")";
  }
  int max_refine_depth() const override {
    int last = comps_.back()->max_refine_depth();
    int cap = max_depth_for_base(base_);
    return std::min(cap, starts_.back() + last);
  }
  int max_path_depth() const override {
    int last = comps_.back()->max_path_depth();
    if (last >= kUnboundedDepth - starts_.back()) return kUnboundedDepth;
    return starts_.back() + last;
  }
  void children(const DescState& s, int level, const ChildVisitor& f) const override {
    std::size_t i = stage_of(level);
    int rel = level - starts_[i];
    const DescState& st = (rel == 0) ? root_ : s;
    comps_[i]->children(st, rel, f);
  }
  const std::vector<std::shared_ptr<const SourceImpl>>& components() const {
    return comps_;
  }
  const std::vector<int>& starts() const { return starts_; }

  // the coordinate image of a digit schedule is the schedule of the images
  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    std::vector<std::shared_ptr<const SourceImpl>> ps;
    for (const auto& c : comps_) {
      auto p = c->project_axes(axes);
      if (!p) return std::nullopt;
      ps.push_back(*p);
    }
    Window w;
    w.dim = int(axes.size());
    w.half = win_.half;
    for (std::size_t i = 0; i < axes.size(); ++i) w.center[i] = win_.center[axes[i]];
    return std::make_shared<SpliceImpl>(ps, starts_, w);
  }

 private:
  std::size_t stage_of(int level) const {
    std::size_t i = comps_.size() - 1;
    while (i > 0 && starts_[i] > level) --i;
    return i;
  }
  std::vector<std::shared_ptr<const SourceImpl>> comps_;
  std::vector<int> starts_;
  DescState root_{};
};

struct IFSMap {
  double ratio = 0.5;
  double angle = 0;  // radians, d = 2 only
  Vec shift{0, 0, 0};
};

// Self-similar measure from a contracting system with assigned probabilities.
// Canonical atoms: cylinder bounding boxes expanded until their diameter is at
// most the cell side at canon_depth. Exact when cylinders nest in cells.
class SelfSimilarImpl final : public SourceImpl {
 public:
  SelfSimilarImpl(std::vector<IFSMap> maps, std::vector<double> probs, int base,
                  const Window& w, int canon_depth)
      : SourceImpl(base, w.dim, w),
        maps_(std::move(maps)),
        probs_(std::move(probs)),
        canon_(canon_depth) {
    require(!maps_.empty(), "self-similar system needs maps");
    require(maps_.size() == probs_.size(), "one probability per map");
    double s = 0;
    for (double p : probs_) {
      require(p > 0, "map probabilities must be positive");
      s += p;
    }
    require(std::abs(s - 1.0) <= 1e-9, "map probabilities must sum to 1");
    for (auto& p : probs_) p /= s;
    for (const auto& m : maps_) {
      require(m.ratio > 0 && m.ratio < 1, "contraction ratios must lie in (0,1)");
      if (dim_ != 2) require(m.angle == 0, "rotations need d = 2");
    }
    require(canon_ >= 1 && canon_ <= max_depth_for_base(base), "bad canonical depth");
    attractor_box(alo_, ahi_);
  }
  bool streamable() const override { return false; }
  std::string kind() const override { return "self_similar"; }
  std::string describe() const override {
    return "self_similar maps=" + std::to_string(maps_.size());
  }
  int max_refine_depth() const override { return canon_; }

  const std::vector<WeightedBox>& atoms() const override {
    std::lock_guard<std::mutex> lock(mu_);
    if (!atoms_.empty()) return atoms_;
    double target = win_.side() / double(upow(std::uint64_t(base_), canon_));
    expand(identity(), 1.0, target, 0);
    require(!atoms_.empty(), "self-similar expansion produced no cylinders");
    return atoms_;
  }

  // image boxes of the attractor under the depth-1 maps, for separation checks
  std::vector<std::pair<Vec, Vec>> level1_boxes() const {
    std::vector<std::pair<Vec, Vec>> out;
    for (const auto& m : maps_) {
      Affine a = affine_of(m);
      Vec lo, hi;
      image_box(a, alo_, ahi_, lo, hi);
      out.push_back({lo, hi});
    }
    return out;
  }

  const std::vector<IFSMap>& maps() const { return maps_; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  struct Affine {
    // x -> L x + t, L row-major dim x dim
    std::array<double, kMaxDim * kMaxDim> l{};
    Vec t{0, 0, 0};
  };

  Affine identity() const {
    Affine a;
    for (int i = 0; i < dim_; ++i) a.l[i * kMaxDim + i] = 1.0;
    return a;
  }

  Affine affine_of(const IFSMap& m) const {
    Affine a;
    if (dim_ == 2 && m.angle != 0) {
      double c = std::cos(m.angle), s = std::sin(m.angle);
      a.l[0] = m.ratio * c;
      a.l[1] = -m.ratio * s;
      a.l[kMaxDim] = m.ratio * s;
      a.l[kMaxDim + 1] = m.ratio * c;
    } else {
      for (int i = 0; i < dim_; ++i) a.l[i * kMaxDim + i] = m.ratio;
    }
    a.t = m.shift;
    return a;
  }

  Affine chain(const Affine& a, const Affine& b) const {
    // a after b? cylinders are f_{a_1} ... f_{a_m}: we compose word = word ∘ f
    Affine r;
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) {
        double s = 0;
        for (int k = 0; k < dim_; ++k) s += a.l[i * kMaxDim + k] * b.l[k * kMaxDim + j];
        r.l[i * kMaxDim + j] = s;
      }
    for (int i = 0; i < dim_; ++i) {
      double s = a.t[i];
      for (int k = 0; k < dim_; ++k) s += a.l[i * kMaxDim + k] * b.t[k];
      r.t[i] = s;
    }
    return r;
  }

  void image_box(const Affine& a, const Vec& lo, const Vec& hi, Vec& olo, Vec& ohi) const {
    for (int i = 0; i < dim_; ++i) {
      double mn = a.t[i], mx = a.t[i];
      for (int j = 0; j < dim_; ++j) {
        double c = a.l[i * kMaxDim + j];
        mn += std::min(c * lo[j], c * hi[j]);
        mx += std::max(c * lo[j], c * hi[j]);
      }
      olo[i] = mn;
      ohi[i] = mx;
    }
  }

  void attractor_box(Vec& lo, Vec& hi) const {
    for (int i = 0; i < dim_; ++i) {
      lo[i] = win_.lo(i);
      hi[i] = win_.hi(i);
    }
    for (int it = 0; it < 200; ++it) {
      Vec nlo{1e300, 1e300, 1e300}, nhi{-1e300, -1e300, -1e300};
      for (const auto& m : maps_) {
        Vec l, h;
        image_box(affine_of(m), lo, hi, l, h);
        for (int i = 0; i < dim_; ++i) {
          nlo[i] = std::min(nlo[i], l[i]);
          nhi[i] = std::max(nhi[i], h[i]);
        }
      }
      lo = nlo;
      hi = nhi;
    }
    for (int i = 0; i < dim_; ++i)
      require(lo[i] >= win_.lo(i) - 1e-9 && hi[i] <= win_.hi(i) + 1e-9,
              "attractor escapes the window");
  }

  void expand(const Affine& a, double mass, double target, int word_len) const {
    Vec lo, hi;
    image_box(a, alo_, ahi_, lo, hi);
    double diam = 0;
    for (int i = 0; i < dim_; ++i) diam = std::max(diam, hi[i] - lo[i]);
    if (diam <= target || word_len >= 64) {
      atoms_.push_back({lo, hi, mass});
      require(atoms_.size() < 30'000'000, "cylinder expansion too large for budget");
      return;
    }
    for (std::size_t i = 0; i < maps_.size(); ++i)
      expand(chain(a, affine_of(maps_[i])), mass * probs_[i], target, word_len + 1);
  }

  std::vector<IFSMap> maps_;
  std::vector<double> probs_;
  int canon_;
  Vec alo_{0, 0, 0}, ahi_{0, 0, 0};
  mutable std::mutex mu_;
  mutable std::vector<WeightedBox> atoms_;
};

struct RandomFractalParams {
  // fixed: always the same pair of disjoint subintervals of [-1,1] and weight
  // uniform4: I, J from four sorted uniform points; w uniform in [w_lo, w_hi]
  enum class Kind { fixed, uniform4 } kind = Kind::fixed;
  double i_lo = -1, i_hi = -0.5;
  double j_lo = 0.5, j_hi = 1;
  double w = 0.5;
  double w_lo = 0.3, w_hi = 0.7;
};

// One-dimensional random construction: each node interval splits into a copy
// of I (weight w) and J (weight 1-w), with (I,J,w) drawn iid across nodes from
// the seeded sampler. Node streams derive from (seed, heap index), so the atom
// list does not depend on traversal order.
class RandomFractalImpl final : public SourceImpl {
 public:
  RandomFractalImpl(const RandomFractalParams& p, std::uint64_t seed, int base,
                    int canon_depth)
      : SourceImpl(base, 1, unit_window(1)), par_(p), seed_(seed), canon_(canon_depth) {
    if (p.kind == RandomFractalParams::Kind::fixed) {
      require(p.i_lo < p.i_hi && p.j_lo < p.j_hi, "interval endpoints out of order");
      require(p.i_hi <= p.j_lo || p.j_hi <= p.i_lo, "intervals must be disjoint");
      require(p.i_lo >= -1 && p.i_hi <= 1 && p.j_lo >= -1 && p.j_hi <= 1,
              "intervals must lie in [-1,1]");
      require(p.w > 0 && p.w < 1, "weight must lie in (0,1)");
    } else {
      require(p.w_lo > 0 && p.w_hi < 1 && p.w_lo <= p.w_hi, "weight range must lie in (0,1)");
    }
    require(canon_ >= 1 && canon_ <= max_depth_for_base(base), "bad canonical depth");
  }
  bool streamable() const override { return false; }
  std::string kind() const override { return "random_fractal"; }
  int max_refine_depth() const override { return canon_; }

  const std::vector<WeightedBox>& atoms() const override {
    std::lock_guard<std::mutex> lock(mu_);
    if (!atoms_.empty()) return atoms_;
    double min_len = win_.side() / double(upow(std::uint64_t(base_), canon_));
    build(1, -1.0, 1.0, 1.0, min_len, 0);
    return atoms_;
  }

  void draw(std::uint64_t node, double& il, double& ih, double& jl, double& jh,
            double& w) const {
    if (par_.kind == RandomFractalParams::Kind::fixed) {
      il = par_.i_lo;
      ih = par_.i_hi;
      jl = par_.j_lo;
      jh = par_.j_hi;
      w = par_.w;
      return;
    }
    Rng r = derive_stream(seed_, node);
    double pts[4];
    for (auto& x : pts) x = r.uniform(-1.0, 1.0);
    std::sort(pts, pts + 4);
    il = pts[0];
    ih = std::max(pts[1], pts[0] + 1e-12);
    jl = std::max(pts[2], ih + 1e-12);
    jh = std::max(pts[3], jl + 1e-12);
    w = r.uniform(par_.w_lo, par_.w_hi);
  }

 private:
  void build(std::uint64_t node, double lo, double hi, double mass, double min_len,
             int level) const {
    double len = hi - lo;
    if (len <= min_len || level >= 60) {
      atoms_.push_back({Vec{lo, 0, 0}, Vec{hi, 0, 0}, mass});
      return;
    }
    double il, ih, jl, jh, w;
    draw(node, il, ih, jl, jh, w);
    auto map = [&](double u) { return lo + (u + 1.0) * 0.5 * len; };
    build(2 * node, map(il), map(ih), mass * w, min_len, level + 1);
    build(2 * node + 1, map(jl), map(jh), mass * (1 - w), min_len, level + 1);
  }

  RandomFractalParams par_;
  std::uint64_t seed_;
  int canon_;
  mutable std::mutex mu_;
  mutable std::vector<WeightedBox> atoms_;
};

// Pushforward of a source under a linear map, realized by mapping the leaves
// of a fixed inner refinement. Leaf-uniform on each image box; the inner depth
// is the resolution budget.
class SmoothPushImpl final : public SourceImpl {
 public:
  static Window image_window(const SourceImpl& inner, const LinearMap& m) {
    Window w;
    w.dim = m.rows;
    double half = 0;
    Vec center{0, 0, 0};
    for (int r = 0; r < m.rows; ++r) {
      double lo = 0, hi = 0;
      for (int c = 0; c < inner.dim(); ++c) {
        double a = m.at(r, c);
        lo += std::min(a * inner.window().lo(c), a * inner.window().hi(c));
        hi += std::max(a * inner.window().lo(c), a * inner.window().hi(c));
      }
      center[r] = 0.5 * (lo + hi);
      half = std::max(half, 0.5 * (hi - lo));
    }
    w.center = center;
    w.half = half > 0 ? half : 1.0;
    return w;
  }

  SmoothPushImpl(std::shared_ptr<const SourceImpl> inner, const LinearMap& m,
                 int inner_depth, std::optional<Window> out_window = std::nullopt)
      : SourceImpl(inner->base(), m.rows,
                   out_window ? *out_window : image_window(*inner, m)),
        inner_(std::move(inner)),
        map_(m),
        inner_depth_(inner_depth) {
    require(m.cols == inner_->dim(), "map arity must match the inner dimension");
    require(inner_depth_ >= 1 && inner_depth_ <= inner_->max_refine_depth(),
            "inner depth exceeds the inner source's budget");
  }
  bool streamable() const override { return false; }
  std::string kind() const override { return "smooth_push"; }
  std::string describe() const override {
    return "smooth_push " + map_to_string(map_) + " of " + inner_->describe();
  }
  int max_refine_depth() const override {
    return std::min(inner_depth_, max_depth_for_base(base_));
  }

  const std::vector<WeightedBox>& atoms() const override {
    std::lock_guard<std::mutex> lock(mu_);
    if (!atoms_.empty()) return atoms_;
    auto t = inner_->refined(inner_depth_);
    atoms_.reserve(t->leaves.size());
    Vec clo, chi;
    for (const auto& [k, m] : t->leaves) {
      cell_box(inner_->window(), inner_->base(), inner_depth_, k, clo, chi);
      WeightedBox b;
      b.mass = m;
      for (int r = 0; r < map_.rows; ++r) {
        double lo = 0, hi = 0;
        for (int c = 0; c < inner_->dim(); ++c) {
          double a = map_.at(r, c);
          lo += std::min(a * clo[c], a * chi[c]);
          hi += std::max(a * clo[c], a * chi[c]);
        }
        b.lo[r] = lo;
        b.hi[r] = hi;
      }
      atoms_.push_back(b);
    }
    return atoms_;
  }

  std::optional<std::shared_ptr<const SourceImpl>> project_axes(
      const std::vector<int>& axes) const override {
    LinearMap sel = coordinate_map(axes, map_.rows);
    return std::make_shared<SmoothPushImpl>(inner_, compose(sel, map_), inner_depth_);
  }

  const LinearMap& map() const { return map_; }
  std::shared_ptr<const SourceImpl> inner() const { return inner_; }

 private:
  std::shared_ptr<const SourceImpl> inner_;
  LinearMap map_;
  int inner_depth_;
  mutable std::mutex mu_;
  mutable std::vector<WeightedBox> atoms_;
};

// ---------------------------------------------------------------------------
// factories

inline MeasureSource lebesgue_source(int dim, int base, Window w = Window{}) {
  if (w.dim != dim) w = unit_window(dim);
  return MeasureSource(std::make_shared<LebesgueImpl>(base, dim, w));
}

inline MeasureSource point_mass_source(const PointDigits& p, int base,
                                       Window w = Window{}) {
  if (w.dim != p.dim) w = unit_window(p.dim);
  return MeasureSource(std::make_shared<PointMassImpl>(p, base, w));
}

inline MeasureSource point_mass_source(const Vec& x, int dim, int base,
                                       Window w = Window{}) {
  if (w.dim != dim) w = unit_window(dim);
  PointDigits p = point_to_digits(w, x, base, std::min(40, max_depth_for_base(base)));
  return MeasureSource(std::make_shared<PointMassImpl>(p, base, w));
}

inline MeasureSource digit_iid_source(int base, const std::vector<double>& probs,
                                      Window w = Window{}) {
  if (w.dim != 1) w = unit_window(1);
  return MeasureSource(std::make_shared<DigitIIDImpl>(base, probs, w));
}

inline MeasureSource digit_markov_source(int base, const std::vector<double>& rows,
                                         const std::vector<double>& init,
                                         Window w = Window{}) {
  if (w.dim != 1) w = unit_window(1);
  return MeasureSource(std::make_shared<DigitMarkovImpl>(base, rows, init, w));
}

inline MeasureSource product_source(const MeasureSource& l, const MeasureSource& r) {
  return MeasureSource(std::make_shared<ProductImpl>(l.ptr(), r.ptr()));
}

inline MeasureSource frozen_source(TreeMeasure t) {
  return MeasureSource(std::make_shared<FrozenImpl>(std::move(t)));
}

inline MeasureSource splice_source(const std::vector<MeasureSource>& comps,
                                   const std::vector<int>& starts,
                                   std::optional<Window> w = std::nullopt) {
  std::vector<std::shared_ptr<const SourceImpl>> ps;
  for (const auto& c : comps) ps.push_back(c.ptr());
  Window win = w ? *w : (comps.empty() ? unit_window(1) : comps[0].window());
  return MeasureSource(std::make_shared<SpliceImpl>(ps, starts, win));
}

inline MeasureSource self_similar_source(const std::vector<IFSMap>& maps,
                                         const std::vector<double>& probs, int base,
                                         const Window& w, int canon_depth = 14) {
  return MeasureSource(
      std::make_shared<SelfSimilarImpl>(maps, probs, base, w, canon_depth));
}

inline MeasureSource random_fractal_source(const RandomFractalParams& p,
                                           std::uint64_t seed, int base,
                                           int canon_depth = 14) {
  return MeasureSource(std::make_shared<RandomFractalImpl>(p, seed, base, canon_depth));
}

inline MeasureSource smooth_push_source(const MeasureSource& inner, const LinearMap& m,
                                        int inner_depth,
                                        std::optional<Window> out_window = std::nullopt) {
  return MeasureSource(
      std::make_shared<SmoothPushImpl>(inner.ptr(), m, inner_depth, out_window));
}

}  // namespace scenery
