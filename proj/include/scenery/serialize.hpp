#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "scenery/constructions.hpp"
#include "scenery/source.hpp"

namespace scenery {

// ---------------------------------------------------------------------------
// number formatting: shortest round-trip form, stable across runs

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = std::strtod(buf, nullptr);
  for (int prec = 1; prec <= 16; ++prec) {
    char s[40];
    std::snprintf(s, sizeof s, "%.*g", prec, v);
    if (std::strtod(s, nullptr) == back) return s;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// measure specifications: variant tag + named numeric parameters, nested
// children in parentheses, e.g. product(iid(base=3 p=0.5 0 0.5), lebesgue(dim=1
// base=3))

struct SpecNode {
  std::string tag;
  std::map<std::string, std::vector<double>> params;
  std::vector<SpecNode> children;
};

namespace detail {

struct SpecParser {
  const std::string& s;
  std::size_t i = 0;

  void skip() {
    while (i < s.size() && (std::isspace(unsigned(s[i])) || s[i] == ',')) ++i;
  }
  bool word_char(char c) const {
    return std::isalnum(unsigned(c)) || c == '_' || c == '-' || c == '.' || c == '+';
  }
  std::string word() {
    skip();
    std::size_t a = i;
    while (i < s.size() && word_char(s[i])) ++i;
    require(i > a, "measure spec: expected a name at position " + std::to_string(a));
    return s.substr(a, i - a);
  }

  SpecNode node() {
    SpecNode n;
    n.tag = word();
    require(!n.tag.empty() && !std::isdigit(unsigned(n.tag[0])),
            "measure spec: variant tag cannot start with a digit");
    skip();
    if (i < s.size() && s[i] == '(') {
      ++i;
      for (;;) {
        skip();
        require(i < s.size(), "measure spec: unterminated '('");
        if (s[i] == ')') {
          ++i;
          break;
        }
        std::size_t save = i;
        std::string w = word();
        skip();
        if (i < s.size() && s[i] == '=') {
          ++i;
          auto& vals = n.params[w];
          require(vals.empty(), "measure spec: duplicate parameter " + w);
          for (;;) {
            skip();
            if (i >= s.size() || (!std::isdigit(unsigned(s[i])) && s[i] != '-' &&
                                  s[i] != '+' && s[i] != '.'))
              break;
            std::size_t a = i;
            while (i < s.size() && word_char(s[i])) ++i;
            char* end = nullptr;
            std::string tok = s.substr(a, i - a);
            double v = std::strtod(tok.c_str(), &end);
            require(end && *end == '\0', "measure spec: bad number " + tok);
            vals.push_back(v);
          }
          require(!vals.empty(), "measure spec: parameter " + w + " has no values");
        } else {
          i = save;
          n.children.push_back(node());
        }
      }
    }
    return n;
  }
};

inline void write_node(const SpecNode& n, std::string& out) {
  out += n.tag;
  if (n.params.empty() && n.children.empty()) return;
  out += '(';
  bool first = true;
  for (const auto& c : n.children) {
    if (!first) out += ", ";
    first = false;
    write_node(c, out);
  }
  for (const auto& [k, vals] : n.params) {
    if (!first) out += ", ";
    first = false;
    out += k + '=';
    for (std::size_t j = 0; j < vals.size(); ++j) {
      if (j) out += ' ';
      out += fmt(vals[j]);
    }
  }
  out += ')';
}

}  // namespace detail

inline SpecNode parse_spec_node(const std::string& text) {
  detail::SpecParser p{text};
  SpecNode n = p.node();
  p.skip();
  require(p.i == text.size(),
          "measure spec: trailing input at position " + std::to_string(p.i));
  return n;
}

inline std::string write_spec_node(const SpecNode& n) {
  std::string out;
  detail::write_node(n, out);
  return out;
}

// ---------------------------------------------------------------------------
// building measures from spec nodes

namespace detail {

inline double param1(const SpecNode& n, const std::string& key, double fallback,
                     bool required = false) {
  auto it = n.params.find(key);
  if (it == n.params.end()) {
    require(!required, "measure spec: " + n.tag + " needs parameter " + key);
    return fallback;
  }
  require(it->second.size() == 1,
          "measure spec: parameter " + key + " takes a single value");
  return it->second[0];
}

inline std::vector<double> param_list(const SpecNode& n, const std::string& key) {
  auto it = n.params.find(key);
  require(it != n.params.end(), "measure spec: " + n.tag + " needs parameter " + key);
  return it->second;
}

inline Window window_of(const SpecNode& n, int dim) {
  Window w = unit_window(dim);
  auto it = n.params.find("window");
  if (it != n.params.end()) {
    require(int(it->second.size()) == dim + 1,
            "measure spec: window takes the center coordinates then the half-side");
    for (int a = 0; a < dim; ++a) w.center[a] = it->second[a];
    w.half = it->second[dim];
    require(w.half > 0, "measure spec: window half-side must be positive");
  }
  return w;
}

}  // namespace detail

inline MeasureSource build_measure(const SpecNode& n);

namespace detail {

inline MeasureSource build_tagged(const SpecNode& n) {
  const std::string& t = n.tag;
  // presets
  if (t == "lebesgue1") return lebesgue_source(1, 2);
  if (t == "lebesgue2") return lebesgue_source(2, 2);
  if (t == "cantor3")
    return digit_iid_source(3, {0.5, 0, 0.5});
  if (t == "cantorx") {
    MeasureSource c = digit_iid_source(3, {0.5, 0, 0.5});
    return product_source(c, c);
  }
  if (t == "nu10")
    return digit_iid_source(10, {0.5, 0, 0, 0, 0, 0, 0, 0, 0, 0.5});
  if (t == "nu10x") {
    MeasureSource c = digit_iid_source(10, {0.5, 0, 0, 0, 0, 0, 0, 0, 0, 0.5});
    return product_source(c, c);
  }
  if (t == "bern13")
    return digit_iid_source(2, {1.0 / 3.0, 2.0 / 3.0});

  if (t == "lebesgue") {
    int dim = int(param1(n, "dim", 1));
    int base = int(param1(n, "base", 2));
    return lebesgue_source(dim, base, window_of(n, dim));
  }
  if (t == "point") {
    auto x = param_list(n, "x");
    int dim = int(x.size());
    require(dim >= 1 && dim <= kMaxDim, "measure spec: point takes 1..3 coordinates");
    int base = int(param1(n, "base", 2));
    Vec v{0, 0, 0};
    for (int a = 0; a < dim; ++a) v[a] = x[a];
    return point_mass_source(v, dim, base, window_of(n, dim));
  }
  if (t == "iid") {
    int base = int(param1(n, "base", 0, true));
    return digit_iid_source(base, param_list(n, "p"), window_of(n, 1));
  }
  if (t == "markov") {
    int base = int(param1(n, "base", 0, true));
    DigitProcessSpec s;
    s.base = base;
    s.order = DigitProcessSpec::Order::markov;
    s.matrix = param_list(n, "rows");
    s.stationary = param_list(n, "start");
    validate(s);
    return digit_markov_source(base, s.matrix, s.stationary, window_of(n, 1));
  }
  if (t == "product") {
    require(n.children.size() >= 2, "measure spec: product needs two factors");
    MeasureSource m = build_measure(n.children[0]);
    for (std::size_t i = 1; i < n.children.size(); ++i)
      m = product_source(m, build_measure(n.children[i]));
    return m;
  }
  if (t == "push") {
    require(n.children.size() == 1, "measure spec: push takes one inner measure");
    MeasureSource inner = build_measure(n.children[0]);
    auto coeff = param_list(n, "map");
    int rows = int(param1(n, "rows", 1));
    require(int(coeff.size()) == rows * inner.dim(),
            "measure spec: push map needs rows x dim coefficients");
    LinearMap m = make_linear(rows, inner.dim(), coeff);
    int depth = int(param1(n, "depth", 10));
    return smooth_push_source(inner, m, depth);
  }
  if (t == "rotate") {
    require(n.children.size() == 1, "measure spec: rotate takes one inner measure");
    MeasureSource inner = build_measure(n.children[0]);
    require(inner.dim() == 2, "measure spec: rotate needs a planar measure");
    double a = param1(n, "angle", 0, true);
    int depth = int(param1(n, "depth", 10));
    LinearMap m = make_linear(
        2, 2, {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)});
    return smooth_push_source(inner, m, depth);
  }
  if (t == "splice") {
    require(n.children.size() >= 1, "measure spec: splice needs components");
    SpliceSpec s;
    for (const auto& c : n.children) s.components.push_back(build_measure(c));
    auto at = param_list(n, "at");
    for (double v : at) s.scales.push_back(int(v));
    int dim = s.components[0].dim();
    return splice(s, int(s.components.size()),
                  int(param1(n, "depth", 0)), window_of(n, dim));
  }
  if (t == "selfsimilar") {
    IFSSpec s;
    s.base = int(param1(n, "base", 3));
    int dim = int(param1(n, "dim", 1));
    s.window = window_of(n, dim);
    s.window.dim = dim;
    s.canon_depth = int(param1(n, "canon", 12));
    auto flat = param_list(n, "maps");
    int stride = dim == 1 ? 3 : 5;  // ratio [angle] shift... prob
    require(!flat.empty() && flat.size() % stride == 0,
            "measure spec: selfsimilar maps need ratio, placement, probability per map");
    for (std::size_t i = 0; i < flat.size(); i += stride) {
      IFSMap m;
      m.ratio = flat[i];
      if (dim == 1) {
        m.shift[0] = flat[i + 1];
      } else {
        m.angle = flat[i + 1];
        m.shift[0] = flat[i + 2];
        m.shift[1] = flat[i + 3];
      }
      s.maps.push_back(m);
      s.probs.push_back(flat[i + stride - 1]);
    }
    return self_similar(s);
  }
  if (t == "random") {
    RandomFractalSpec s;
    s.base = int(param1(n, "base", 2));
    s.seed = std::uint64_t(param1(n, "seed", 1));
    s.canon_depth = int(param1(n, "canon", 14));
    if (int(param1(n, "kind", 0)) == 1) {
      s.params.kind = RandomFractalParams::Kind::uniform4;
      s.params.w_lo = param1(n, "wlo", 0.3);
      s.params.w_hi = param1(n, "whi", 0.7);
    } else {
      auto iv = n.params.count("i") ? param_list(n, "i")
                                    : std::vector<double>{-1, -0.5};
      auto jv = n.params.count("j") ? param_list(n, "j")
                                    : std::vector<double>{0.5, 1};
      require(iv.size() == 2 && jv.size() == 2,
              "measure spec: random intervals take two endpoints each");
      s.params.i_lo = iv[0];
      s.params.i_hi = iv[1];
      s.params.j_lo = jv[0];
      s.params.j_hi = jv[1];
      s.params.w = param1(n, "w", 0.5);
    }
    double stat = integrability_statistic(s);
    numeric_require(std::isfinite(stat), "random fractal: level statistic diverges");
    return random_fractal_source(s.params, s.seed, s.base, s.canon_depth);
  }
  throw SpecError("measure spec: unknown variant '" + t + "'");
}

}  // namespace detail

inline MeasureSource build_measure(const SpecNode& n) {
  return detail::build_tagged(n);
}

inline MeasureSource parse_measure(const std::string& text) {
  return build_measure(parse_spec_node(text));
}

// ---------------------------------------------------------------------------
// columnar tree export: one line per leaf, per-axis digit strings then mass

inline void write_tree_columnar(std::ostream& os, const TreeMeasure& t) {
  os << "# base=" << t.base << " dim=" << t.dim << " depth=" << t.depth
     << " total=" << fmt(t.total) << " rebin_bound=" << fmt(t.rebin_error_bound)
     << " window=";
  for (int a = 0; a < t.dim; ++a) os << fmt(t.window.center[a]) << ' ';
  os << fmt(t.window.half) << '\n';
  for (const auto& [k, m] : t.leaves) {
    PointDigits p = key_to_digits(k, t.base, t.depth, t.dim);
    for (int a = 0; a < t.dim; ++a) {
      if (a) os << ' ';
      os << (t.depth ? digits_string(p, a) : std::string("-"));
    }
    os << ' ' << fmt(m) << '\n';
  }
}

inline TreeMeasure read_tree_columnar(std::istream& is) {
  std::string line;
  require(std::getline(is, line) && line.rfind("# ", 0) == 0,
          "tree file: missing header line");
  int base = 0, dim = 0, depth = 0;
  double total = 0, bound = 0;
  Window w;
  {
    std::istringstream hs(line.substr(2));
    std::string tok;
    std::vector<double> win;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) {
        win.push_back(std::strtod(tok.c_str(), nullptr));
        continue;
      }
      std::string key = tok.substr(0, eq);
      double v = std::strtod(tok.c_str() + eq + 1, nullptr);
      if (key == "base") base = int(v);
      else if (key == "dim") dim = int(v);
      else if (key == "depth") depth = int(v);
      else if (key == "total") total = v;
      else if (key == "rebin_bound") bound = v;
      else if (key == "window") win.push_back(v);
    }
    require(base >= 2 && dim >= 1 && dim <= kMaxDim && depth >= 0,
            "tree file: bad header");
    require(int(win.size()) == dim + 1, "tree file: bad window in header");
    w.dim = dim;
    for (int a = 0; a < dim; ++a) w.center[a] = win[a];
    w.half = win[dim];
  }
  TreeMeasure t = make_tree(base, dim, depth, w);
  t.rebin_error_bound = bound;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    PointDigits p;
    p.dim = dim;
    for (int a = 0; a < dim; ++a) {
      std::string ds;
      require(bool(ls >> ds), "tree file: truncated leaf line");
      if (ds == "-") continue;
      for (char c : ds) {
        int v = c <= '9' ? c - '0' : 10 + c - 'a';
        require(v >= 0 && v < base, "tree file: digit out of range");
        p.d[a].push_back(std::uint8_t(v));
      }
      require(int(p.d[a].size()) == depth, "tree file: digit string length mismatch");
    }
    double m = 0;
    require(bool(ls >> m), "tree file: leaf line missing mass");
    t.add(digits_to_key(p, base, depth), m);
  }
  numeric_require(std::abs(t.total - total) <= 1e-9 * std::max(1.0, std::abs(total)),
                  "tree file: leaf masses disagree with the header total");
  return t;
}

// ---------------------------------------------------------------------------
// small text-report helpers

inline void write_kv(std::ostream& os, const std::string& key, const std::string& v,
                     int indent = 0) {
  for (int i = 0; i < indent; ++i) os << ' ';
  os << key << ": " << v << '\n';
}

inline void write_kv(std::ostream& os, const std::string& key, double v,
                     int indent = 0) {
  write_kv(os, key, fmt(v), indent);
}

inline void write_csv_row(std::ostream& os, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << fmt(row[i]);
  }
  os << '\n';
}

}  // namespace scenery
