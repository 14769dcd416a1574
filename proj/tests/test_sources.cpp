#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "scenery/source.hpp"

using namespace scenery;

namespace {

MeasureSource cantor3() { return digit_iid_source(3, {0.5, 0, 0.5}); }

// independent cylinder-mass oracle for a digit-iid measure
double iid_cylinder(const std::vector<double>& probs, const PointDigits& p, int n) {
  double m = 1;
  for (int j = 0; j < n; ++j) m *= probs[p.d[0][j]];
  return m;
}

}  // namespace

TEST_CASE("lebesgue refines to uniform cells") {
  MeasureSource m = lebesgue_source(2, 2);
  TreeMeasure t = m.refine(3);
  CHECK(t.leaves.size() == 64);
  CHECK(t.total == Catch::Approx(1.0));
  for (const auto& [k, mass] : t.leaves) CHECK(mass == Catch::Approx(1.0 / 64));
}

TEST_CASE("point masses concentrate on one path") {
  MeasureSource m = point_mass_source(Vec{0.3, -0.2, 0}, 2, 2);
  TreeMeasure t = m.refine(6);
  CHECK(t.leaves.size() == 1);
  CHECK(t.total == Catch::Approx(1.0));
  Vec lo, hi;
  cell_box(t.window, 2, 6, t.leaves.begin()->first, lo, hi);
  CHECK(lo[0] <= 0.3);
  CHECK(hi[0] > 0.3);
  CHECK(lo[1] <= -0.2);
  CHECK(hi[1] > -0.2);
}

TEST_CASE("digit-iid cylinders carry product masses") {
  std::vector<double> probs = {0.2, 0.3, 0.5};
  MeasureSource m = digit_iid_source(3, probs);
  TreeMeasure t = m.refine(4);
  CHECK(t.total == Catch::Approx(1.0));
  for (const auto& [k, mass] : t.leaves) {
    PointDigits p = key_to_digits(k, 3, 4, 1);
    CHECK(mass == Catch::Approx(iid_cylinder(probs, p, 4)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(digit_iid_source(3, {0.5, 0.2}), SpecError);
  CHECK_THROWS_AS(digit_iid_source(3, {0.5, 0.2, 0.5}), SpecError);
}

TEST_CASE("cantor measure keeps half mass per admissible digit") {
  MeasureSource m = cantor3();
  TreeMeasure t = m.refine(10);
  CHECK(t.leaves.size() == 1024);
  CHECK(t.total == Catch::Approx(1.0));
  for (const auto& [k, mass] : t.leaves) {
    CHECK(mass == Catch::Approx(std::pow(0.5, 10)).epsilon(1e-12));
    PointDigits p = key_to_digits(k, 3, 10, 1);
    for (int j = 0; j < 10; ++j) CHECK(p.d[0][j] != 1);
  }
}

TEST_CASE("markov chains weight cylinders by transition products") {
  std::vector<double> rows = {0.9, 0.1, 0.4, 0.6};
  std::vector<double> init = {0.8, 0.2};
  MeasureSource m = digit_markov_source(2, rows, init);
  TreeMeasure t = m.refine(3);
  CHECK(t.total == Catch::Approx(1.0));
  for (const auto& [k, mass] : t.leaves) {
    PointDigits p = key_to_digits(k, 2, 3, 1);
    double expect = init[p.d[0][0]];
    for (int j = 1; j < 3; ++j) expect *= rows[2 * p.d[0][j - 1] + p.d[0][j]];
    CHECK(mass == Catch::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("products factor into their marginals") {
  MeasureSource a = cantor3();
  MeasureSource b = lebesgue_source(1, 3);
  MeasureSource prod = product_source(a, b);
  CHECK(prod.dim() == 2);
  TreeMeasure t = prod.refine(3);
  TreeMeasure ta = a.refine(3), tb = b.refine(3);
  for (const auto& [k, mass] : t.leaves) {
    CellKey ka, kb;
    ka.ax = {k.ax[0], 0, 0};
    kb.ax = {k.ax[1], 0, 0};
    double ma = ta.leaves.count(ka) ? ta.leaves.at(ka) : 0.0;
    double mb = tb.leaves.count(kb) ? tb.leaves.at(kb) : 0.0;
    CHECK(mass == Catch::Approx(ma * mb).epsilon(1e-12));
  }
  auto back = prod.project_axes({0});
  REQUIRE(back.has_value());
  CHECK(tree_equal(back->refine(3), ta, 1e-12));
  auto swapped = prod.project_axes({1, 0});
  REQUIRE(swapped.has_value());
  TreeMeasure ts = swapped->refine(2);
  TreeMeasure tp = prod.refine(2);
  for (const auto& [k, mass] : ts.leaves) {
    CellKey orig;
    orig.ax = {k.ax[1], k.ax[0], 0};
    CHECK(tp.leaves.at(orig) == Catch::Approx(mass).epsilon(1e-12));
  }
}

TEST_CASE("path masses match refined cylinders") {
  MeasureSource m = digit_iid_source(3, {0.2, 0.3, 0.5});
  TreeMeasure t = m.refine(5);
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    PointDigits p = m.sample(5, rng);
    for (int n = 1; n <= 5; ++n) {
      double pm = m.path_mass(p, n);
      CHECK(pm == Catch::Approx(cell_mass(t, digits_to_key(p, 3, n), n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sampling follows the measure and is reproducible") {
  MeasureSource m = cantor3();
  Rng r1(99), r2(99);
  PointDigits a = m.sample(12, r1);
  PointDigits b = m.sample(12, r2);
  CHECK(a == b);
  for (int j = 0; j < 12; ++j) CHECK(a.d[0][j] != 1);

  // digit frequencies concentrate near 1/2 on {0,2}
  Rng rng(7);
  int zero = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    PointDigits p = m.sample(8, rng);
    for (int j = 0; j < 8; ++j) {
      zero += p.d[0][j] == 0;
      ++total;
    }
  }
  CHECK(std::abs(double(zero) / total - 0.5) < 0.05);
}

TEST_CASE("conditional refinement rescales a cylinder to the standard frame") {
  MeasureSource m = cantor3();
  Rng rng(5);
  PointDigits p = m.sample(6, rng);
  TreeMeasure cond = m.refine_conditional(p, 2, 3);
  CHECK(cond.total == Catch::Approx(1.0));
  CHECK(cond.depth == 3);
  // conditional of an iid digit measure is the measure itself
  CHECK(tree_equal(cond, m.refine(3), 1e-12));
}

TEST_CASE("frozen trees serve their own refinements") {
  MeasureSource m = cantor3();
  TreeMeasure t = m.refine(6);
  MeasureSource f = frozen_source(t);
  CHECK(f.max_refine_depth() == 6);
  CHECK(tree_equal(f.refine(6), t, 0.0));
  CHECK(tree_equal(f.refine(4), coarsen(t, 4), 1e-12));
  CHECK_THROWS_AS(f.refine(7), NumericalError);
}

TEST_CASE("splices hand over refinement at their takeover depths") {
  MeasureSource nu = digit_iid_source(10, {0.5, 0, 0, 0, 0, 0, 0, 0, 0, 0.5});
  MeasureSource lam = lebesgue_source(1, 10);
  MeasureSource sp = splice_source({lam, nu}, {0, 3});
  TreeMeasure t = sp.refine(5);
  CHECK(t.total == Catch::Approx(1.0));
  // levels 1..3 uniform, levels 4..5 only digits {0,9}
  TreeMeasure c3 = coarsen(t, 3);
  CHECK(c3.leaves.size() == 1000);
  for (const auto& [k, mass] : t.leaves) {
    PointDigits p = key_to_digits(k, 10, 5, 1);
    CHECK((p.d[0][3] == 0 || p.d[0][3] == 9));
    CHECK((p.d[0][4] == 0 || p.d[0][4] == 9));
    CHECK(mass == Catch::Approx(1e-3 * 0.25).epsilon(1e-12));
  }
}

TEST_CASE("random fractal refinements are seed-deterministic") {
  RandomFractalParams params;
  params.kind = RandomFractalParams::Kind::uniform4;
  MeasureSource a = random_fractal_source(params, 42, 2, 12);
  MeasureSource b = random_fractal_source(params, 42, 2, 12);
  MeasureSource c = random_fractal_source(params, 43, 2, 12);
  CHECK(tree_equal(a.refine(6), b.refine(6), 0.0));
  CHECK_FALSE(tree_equal(a.refine(6), c.refine(6), 1e-6));
  CHECK(a.refine(6).total == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("self-similar systems reproduce the cantor measure") {
  std::vector<IFSMap> maps(2);
  maps[0].ratio = 1.0 / 3.0;
  maps[0].shift = {0, 0, 0};
  maps[1].ratio = 1.0 / 3.0;
  maps[1].shift = {2.0 / 3.0, 0, 0};
  MeasureSource ss =
      self_similar_source(maps, {0.5, 0.5}, 3, zero_one_window(1), 12);
  TreeMeasure t = ss.refine(6);
  MeasureSource reference =
      digit_iid_source(3, {0.5, 0, 0.5}, zero_one_window(1));
  CHECK(tree_l1_distance(t, reference.refine(6)) < 1e-9);
}

TEST_CASE("linear pushforwards rebin onto the image window") {
  MeasureSource inner = lebesgue_source(1, 2);
  LinearMap m = make_linear(1, 1, {0.5});
  MeasureSource push = smooth_push_source(inner, m, 12);
  TreeMeasure t = push.refine(3);
  CHECK(t.total == Catch::Approx(1.0).epsilon(1e-9));
  // image is uniform on [-1/2, 1/2] inside its own window
  double lo = 1e300, hi = -1e300;
  Vec clo, chi;
  for (const auto& [k, mass] : t.leaves) {
    cell_box(t.window, 2, 3, k, clo, chi);
    lo = std::min(lo, clo[0]);
    hi = std::max(hi, chi[0]);
  }
  CHECK(lo >= -0.5 - 1e-6);
  CHECK(hi <= 0.5 + 1e-6);
}

TEST_CASE("refinement results are cached and shared") {
  MeasureSource m = cantor3();
  auto p1 = m.refine_shared(8);
  auto p2 = m.refine_shared(8);
  CHECK(p1.get() == p2.get());
}
