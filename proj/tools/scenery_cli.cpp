// Experiment harness: builds measures from textual specs and runs the zooming,
// dimension, projection, and construction studies on them. Every command is a
// pure function of (config, seed); reports open with a full config echo so
// re-runs are byte-identical.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scenery/scenery.hpp"

namespace {

using namespace scenery;

struct Options {
  std::string spec = "cantor3";
  int depth = 10;
  int base = 0;  // 0: take the base from the spec
  std::uint64_t seed = 1;
  int samples = 8;
  double T = 6.0;
  double t_step = 0.5;
  int metric_depth = 4;
  std::string out;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--spec", o.spec,
                  "measure spec: a file path or an inline expression such as "
                  "cantor3, iid(base=3 p=0.5 0 0.5), product(cantor3, cantor3)");
  cmd->add_option("--depth", o.depth, "refinement depth of built trees");
  cmd->add_option("--base", o.base,
                  "default digit base for spec variants that accept one "
                  "(an explicit base= inside the spec wins)");
  cmd->add_option("--seed", o.seed, "master seed; all randomness derives from it");
  cmd->add_option("--samples", o.samples,
                  "sample count: points, ensemble atoms, or orbit steps");
  cmd->add_option("--T", o.T, "time horizon of scenery averages");
  cmd->add_option("--t-step", o.t_step, "time step of scenery averages");
  cmd->add_option("--metric-depth", o.metric_depth,
                  "tree depth at which frames enter the moment metric");
  cmd->add_option("--out", o.out, "also write the report to this file");
}

std::string load_spec_text(const std::string& arg) {
  std::ifstream in(arg);
  if (!in.good()) return arg;
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  for (char& c : text)
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  return text;
}

// tags whose measure takes a base parameter; --base fills it when the spec
// leaves it out
bool takes_base(const std::string& tag) {
  return tag == "lebesgue" || tag == "point" || tag == "iid" || tag == "markov" ||
         tag == "selfsimilar" || tag == "random";
}

void apply_base_default(SpecNode& n, int base) {
  if (takes_base(n.tag) && !n.params.count("base"))
    n.params["base"] = {double(base)};
  for (auto& c : n.children) apply_base_default(c, base);
}

struct Built {
  SpecNode node;
  MeasureSource src;
  std::string canonical;
};

Built build(const Options& o) {
  Built b;
  b.node = parse_spec_node(load_spec_text(o.spec));
  if (o.base) {
    require(o.base >= 2, "--base must be >= 2");
    apply_base_default(b.node, o.base);
  }
  b.src = build_measure(b.node);
  b.canonical = write_spec_node(b.node);
  return b;
}

void write_header(std::ostream& os, const std::string& cmd, const Options& o,
                  const std::string& spec_canonical) {
  os << "# scenery-lab " << cmd << '\n';
  os << "# spec: " << spec_canonical << '\n';
  os << "# depth: " << o.depth << '\n';
  os << "# base: " << (o.base ? std::to_string(o.base) : std::string("spec")) << '\n';
  os << "# seed: " << o.seed << '\n';
  os << "# samples: " << o.samples << '\n';
  os << "# T: " << fmt(o.T) << '\n';
  os << "# t_step: " << fmt(o.t_step) << '\n';
  os << "# metric_depth: " << o.metric_depth << '\n';
  os << "# out: " << (o.out.empty() ? "-" : o.out) << '\n';
}

void write_estimate(std::ostream& os, const std::string& name,
                    const DimensionEstimate& e, int indent = 0) {
  std::string pad(indent, ' ');
  os << pad << name << ":\n";
  write_kv(os, "value", e.value, indent + 2);
  write_kv(os, "std_error", e.std_error, indent + 2);
  write_kv(os, "lower", e.lower, indent + 2);
  write_kv(os, "upper", e.upper, indent + 2);
  write_kv(os, "depths", std::to_string(e.n_min) + ".." + std::to_string(e.n_max),
           indent + 2);
  write_kv(os, "method", e.method, indent + 2);
}

// ---------------------------------------------------------------------------

void cmd_measure_build(std::ostream& os, const Options& o) {
  Built b = build(o);
  write_header(os, "measure-build", o, b.canonical);
  TreeMeasure t = b.src.refine(o.depth);
  write_kv(os, "kind", b.src.describe());
  write_kv(os, "total_mass", t.total);
  write_kv(os, "leaf_count", std::to_string(t.leaves.size()));
  write_kv(os, "rebin_error_bound", t.rebin_error_bound);
  write_tree_columnar(os, t);
}

std::vector<double> horizon_list(const Options& o) {
  require(o.t_step > 0 && o.T >= o.t_step, "need T >= t-step > 0");
  std::vector<double> T_list;
  for (int j = 1; j * o.t_step <= o.T + 1e-12; ++j) T_list.push_back(j * o.t_step);
  return T_list;
}

void cmd_scenery(std::ostream& os, const Options& o) {
  Built b = build(o);
  write_header(os, "scenery", o, b.canonical);
  std::vector<double> T_list = horizon_list(o);
  UsmReport rep = usm_convergence_report(b.src, o.samples, T_list, o.t_step,
                                         o.metric_depth, o.seed);
  Vec x0 = digits_to_point(b.src.window(), rep.points[0], b.src.base());
  Vec u_lo{0, 0, 0}, u_hi{0, 0, 0};
  for (int a = 0; a < b.src.dim(); ++a) {
    u_lo[a] = -0.5;
    u_hi[a] = 0.5;
  }
  os << "T,max_cross_point,quasi_palm";
  for (int i = 0; i < o.samples; ++i) os << ",dist_to_final_p" << i;
  os << '\n';
  for (std::size_t k = 0; k < T_list.size(); ++k) {
    EmpiricalDistribution dist =
        scenery_distribution(b.src, x0, T_list[k], o.t_step, o.metric_depth);
    double qp = quasi_palm_diagnostic(dist, u_lo, u_hi, 4, o.metric_depth, o.seed);
    os << fmt(T_list[k]) << ',' << fmt(rep.max_cross_point[k]) << ',' << fmt(qp);
    for (int i = 0; i < o.samples; ++i) os << ',' << fmt(rep.dist_to_final[i][k]);
    os << '\n';
  }
}

void cmd_dimension(std::ostream& os, const Options& o) {
  Built b = build(o);
  write_header(os, "dimension", o, b.canonical);
  int n_max = o.depth;
  int n_min = std::max(1, std::min(2, n_max - 2));
  require(n_min < n_max, "dimension: depth must be at least 3");
  write_estimate(os, "entropy_dimension", entropy_dimension(b.src, n_min, n_max));
  os << "local_dimension:\n";
  double mean = 0;
  std::vector<double> vals(std::size_t(o.samples));
  for (int i = 0; i < o.samples; ++i) {
    Rng rng = derive_stream(o.seed, std::uint64_t(i));
    PointDigits x = b.src.sample(n_max, rng);
    vals[i] = local_dimension(b.src, x, n_min, n_max).value;
    mean += vals[i];
  }
  mean /= o.samples;
  write_kv(os, "point_count", std::to_string(o.samples), 2);
  write_kv(os, "mean", mean, 2);
  for (int i = 0; i < o.samples; ++i)
    write_kv(os, "point_" + std::to_string(i), vals[i], 2);
  write_kv(os, "exactness_spread",
           exactness_spread(b.src, std::max(2, o.samples), n_min, n_max, o.seed));
}

void cmd_project(std::ostream& os, const Options& o,
                 const std::vector<double>& angles) {
  Built b = build(o);
  write_header(os, "project", o, b.canonical);
  std::vector<LinearMap> maps;
  if (b.src.dim() == 1) {
    maps.push_back(coordinate_map({0}, 1));
  } else {
    maps.push_back(coordinate_map({0}, b.src.dim()));
    maps.push_back(coordinate_map({1}, b.src.dim()));
    if (b.src.dim() == 2) {
      maps.push_back(make_linear(1, 2, {1, 1}));
      maps.push_back(make_linear(1, 2, {1, -1}));
    }
  }
  for (double a : angles) {
    require(b.src.dim() == 2, "--angles applies to planar measures");
    maps.push_back(make_linear(1, 2, {std::cos(a), std::sin(a)}));
  }
  int n_max = o.depth;
  int n_min = std::max(1, std::min(2, n_max - 2));
  auto profile = projection_dimension_profile(b.src, maps, n_min, n_max);
  os << "map,value,std_error,lower,upper\n";
  for (const auto& e : profile) {
    os << map_to_string(e.map) << ',' << fmt(e.est.value) << ','
       << fmt(e.est.std_error) << ',' << fmt(e.est.lower) << ',' << fmt(e.est.upper)
       << '\n';
  }
}

void cmd_conserve(std::ostream& os, const Options& o,
                  const std::vector<double>& map_row) {
  Built b = build(o);
  write_header(os, "conserve", o, b.canonical);
  require(b.src.dim() >= 2, "conserve: the measure must have at least two axes");
  LinearMap m = map_row.empty()
                    ? coordinate_map({0}, b.src.dim())
                    : make_linear(1, b.src.dim(), map_row);
  int n_max = o.depth;
  int n_min = std::max(1, std::min(2, n_max - 2));
  ConservationReport rep =
      conservation_report(b.src, m, o.samples, n_min, n_max, o.depth, o.seed);
  write_kv(os, "map", map_to_string(m));
  write_estimate(os, "total", rep.total);
  write_estimate(os, "image", rep.image);
  write_kv(os, "fiber_mean", rep.fiber_mean);
  write_kv(os, "fiber_std_error", rep.fiber_se);
  write_kv(os, "fiber_gap", rep.fiber_gap);
  write_kv(os, "defect", rep.defect);
  write_kv(os, "defect_std_error", rep.defect_se);
  write_kv(os, "verdict", rep.verdict);
  os << "sample,fiber_dimension\n";
  for (std::size_t i = 0; i < rep.fiber_dims.size(); ++i)
    os << i << ',' << fmt(rep.fiber_dims[i]) << '\n';
}

void cmd_cp(std::ostream& os, const Options& o) {
  Built b = build(o);
  write_header(os, "cp", o, b.canonical);
  int adapt_m = std::min(2, o.depth);
  CpRunReport rep = cp_run_report(b.src, o.samples, o.depth, adapt_m, o.seed);
  write_kv(os, "steps", std::to_string(rep.steps));
  write_kv(os, "out_depth", std::to_string(rep.out_depth));
  write_kv(os, "measure_marginal_constant", rep.marginal_constant ? "true" : "false");
  write_kv(os, "max_marginal_deviation", rep.max_marginal_dev);
  write_kv(os, "adaptedness", rep.adaptedness);
  write_kv(os, "adaptedness_cell_depth", std::to_string(rep.adapt_m));
  write_kv(os, "telescope_max_rel_err", rep.telescope_max_rel_err);
}

void cmd_counterexample(std::ostream& os, const Options& o,
                        const CounterexampleSpec& s) {
  validate(s);
  write_header(os, "counterexample", o, "base-20 perturbed product");
  write_kv(os, "levels", std::to_string(s.levels));
  {
    std::string es;
    for (int e : s.exponents) es += (es.empty() ? "" : " ") + std::to_string(e);
    write_kv(os, "exponents", es);
  }
  for (int k = 1; k <= s.levels; ++k)
    write_kv(os, "theta_" + std::to_string(k), counterexample_theta(s.exponents[k - 1]));
  // exhaustive injectivity over all code pairs at the separating resolution
  int xn = s.exponents.back();
  require(xn + s.levels <= 24, "counterexample: enumeration grid too large");
  std::vector<double> values;
  values.reserve(std::size_t(1) << (xn + s.levels));
  std::vector<int> xc(xn), yc(s.levels);
  for (std::uint64_t xi = 0; xi < (std::uint64_t(1) << xn); ++xi) {
    for (int i = 0; i < xn; ++i) xc[i] = int(xi >> i & 1);
    for (std::uint64_t yi = 0; yi < (std::uint64_t(1) << s.levels); ++yi) {
      for (int i = 0; i < s.levels; ++i) yc[i] = int(yi >> i & 1);
      values.push_back(counterexample_f(s, xc, yc));
    }
  }
  std::sort(values.begin(), values.end());
  double min_gap = 1e300;
  for (std::size_t i = 1; i < values.size(); ++i)
    min_gap = std::min(min_gap, values[i] - values[i - 1]);
  write_kv(os, "enumerated_values", std::to_string(values.size()));
  write_kv(os, "min_gap", min_gap);
  write_kv(os, "injective", min_gap > 0 ? "true" : "false");
  os << "k,cover_count,cover_length,dim_estimate\n";
  bool decreasing = true;
  double prev = 1e300, final_est = 0;
  for (int k = 1; k <= s.levels; ++k) {
    CoverCount c = counterexample_cover_count(s, k);
    os << k << ',' << fmt(c.count) << ',' << fmt(c.length) << ','
       << fmt(c.dim_estimate) << '\n';
    if (c.dim_estimate >= prev) decreasing = false;
    prev = c.dim_estimate;
    final_est = c.dim_estimate;
  }
  double target = std::log(2.0) / std::log(10.0 / 3.0);
  write_kv(os, "dim_estimates_decreasing", decreasing ? "true" : "false");
  write_kv(os, "final_estimate", final_est);
  write_kv(os, "target", target);
  write_kv(os, "final_gap_to_target", std::abs(final_est - target));
}

void cmd_splice(std::ostream& os, const Options& o) {
  Built b = build(o);
  write_header(os, "splice", o, b.canonical);
  write_kv(os, "kind", b.src.describe());
  write_kv(os, "max_refine_depth", std::to_string(b.src.max_refine_depth()));
  int depth = o.depth;
  numeric_require(depth <= b.src.max_refine_depth(),
                  "splice: depth exceeds the constructed stages");
  // per-level entropy increments expose the oscillation between stage rates
  os << "n,entropy_increment\n";
  double lb = std::log(double(b.src.base()));
  double prev = 0;
  for (int n = 1; n <= depth; ++n) {
    double h = streamed_entropy(b.src, n);
    os << n << ',' << fmt((h - prev) / lb) << '\n';
    prev = h;
  }
  std::vector<double> T_list = horizon_list(o);
  UsmReport rep = usm_convergence_report(b.src, o.samples, T_list, o.t_step,
                                         o.metric_depth, o.seed);
  os << "T,max_cross_point";
  for (int i = 0; i < o.samples; ++i) os << ",dist_to_final_p" << i;
  os << '\n';
  for (std::size_t k = 0; k < T_list.size(); ++k) {
    os << fmt(T_list[k]) << ',' << fmt(rep.max_cross_point[k]);
    for (int i = 0; i < o.samples; ++i) os << ',' << fmt(rep.dist_to_final[i][k]);
    os << '\n';
  }
}

void emit(const std::string& text, const Options& o) {
  std::cout << text;
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    require(f.good(), "cannot open output file " + o.out);
    f << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Numerical laboratory for zooming dynamics on fractal measures: builds "
      "digit-process, self-similar, spliced, and pushforward measures, runs "
      "magnification and scenery averages on them, and estimates entropy, "
      "local, and projected dimensions with seeded reproducibility."};
  app.require_subcommand(1);

  Options o;
  std::vector<double> angles, map_row;
  CounterexampleSpec ce;

  auto* c_build = app.add_subcommand(
      "measure-build", "build a measure, report mass and leaves, emit the tree");
  auto* c_scenery = app.add_subcommand(
      "scenery", "scenery-average convergence study with a translation diagnostic");
  auto* c_dim = app.add_subcommand(
      "dimension", "entropy, local, and spread dimension estimates");
  auto* c_proj = app.add_subcommand(
      "project", "dimension profile across linear projections");
  c_proj->add_option("--angles", angles,
                     "extra projection directions (radians, planar specs)");
  auto* c_cons = app.add_subcommand(
      "conserve", "projection vs fiber dimension accounting");
  c_cons->add_option("--map-row", map_row,
                     "projection row coefficients (default: first coordinate)");
  auto* c_cp = app.add_subcommand(
      "cp", "single-orbit cell-magnification run with consistency checks");
  auto* c_ce = app.add_subcommand(
      "counterexample", "perturbed-product injectivity and covering study");
  c_ce->add_option("--levels", ce.levels, "number of perturbation terms");
  c_ce->add_option("--exponents", ce.exponents, "term exponents, strictly increasing");
  auto* c_splice = app.add_subcommand(
      "splice", "stage-switching build with entropy-rate oscillation report");
  for (CLI::App* c :
       {c_build, c_scenery, c_dim, c_proj, c_cons, c_cp, c_ce, c_splice})
    add_common(c, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    std::ostringstream os;
    if (c_build->parsed()) cmd_measure_build(os, o);
    else if (c_scenery->parsed()) cmd_scenery(os, o);
    else if (c_dim->parsed()) cmd_dimension(os, o);
    else if (c_proj->parsed()) cmd_project(os, o, angles);
    else if (c_cons->parsed()) cmd_conserve(os, o, map_row);
    else if (c_cp->parsed()) cmd_cp(os, o);
    else if (c_ce->parsed()) cmd_counterexample(os, o, ce);
    else if (c_splice->parsed()) cmd_splice(os, o);
    emit(os.str(), o);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
