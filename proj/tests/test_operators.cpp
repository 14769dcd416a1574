#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "scenery/operators.hpp"

using namespace scenery;

namespace {

MeasureSource cantor3() { return digit_iid_source(3, {0.5, 0, 0.5}); }

}  // namespace

TEST_CASE("zooming at scale zero from the center is the identity") {
  TreeMeasure t = cantor3().refine(5);
  TreeMeasure z = zoom_raw(t, Vec{0, 0, 0}, 0.0, 5);
  CHECK(tree_equal(z, t, 1e-12));
  CHECK(z.rebin_error_bound == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("zoom mass equals the measure of the zoom box") {
  MeasureSource leb = lebesgue_source(1, 2);
  double t = 1.0;
  TreeMeasure z = zoom_raw(leb.refine(10), Vec{0.25, 0, 0}, t, 4);
  // lebesgue on [-1,1] has density 1/2; the box has side 2 e^{-t}
  CHECK(z.total == Catch::Approx(std::exp(-t)).epsilon(1e-6));
}

TEST_CASE("scenery frames are box-normalized") {
  MeasureSource src = cantor3();
  TreeMeasure f = translate_rescale(src, Vec{-1.0, 0, 0}, 1.0, 4);
  CHECK(f.total == Catch::Approx(1.0));
  CHECK(f.window == unit_window(1));
  CHECK_THROWS_AS(translate_rescale(src, Vec{0.1, 0, 0}, 9.0, 4), NumericalError);
}

TEST_CASE("zoom refuses depths beyond the resolution budget") {
  TreeMeasure t = cantor3().refine(5);
  MeasureSource f = frozen_source(t);
  CHECK_THROWS_AS(zoom_raw(f, Vec{0, 0, 0}, 3.0, 4), NumericalError);
  CHECK_THROWS_AS(zoom_raw(t, Vec{0, 0, 0}, 3.0, 4), NumericalError);
}

TEST_CASE("streamed deep zooms match materialized ones") {
  MeasureSource src = cantor3();
  Vec x{-7.0 / 9.0, 0, 0};
  double t = 2.0;
  TreeMeasure deep = translate_rescale(src, x, t, 4);
  // same effective source granularity: depth 4 + ceil(t / log 3) = 6
  TreeMeasure flat = translate_rescale(src.refine(6), x, t, 4);
  CHECK(tree_l1_distance(deep, flat) < 1e-6);
}

TEST_CASE("alpha weighting scales the raw zoom") {
  MeasureSource leb = lebesgue_source(1, 2);
  double t = 1.0, alpha = 0.7;
  TreeMeasure raw = zoom_raw(leb.refine(10), Vec{0, 0, 0}, t, 4);
  TreeMeasure w = alpha_rescale(leb.refine(10), Vec{0, 0, 0}, t, alpha, 4);
  CHECK(w.total == Catch::Approx(raw.total * std::exp(alpha * t)).epsilon(1e-12));
}

TEST_CASE("ball masses are exact on uniform trees") {
  TreeMeasure t = lebesgue_source(1, 2).refine(6);
  MassWithBound m = ball_mass(t, Vec{0, 0, 0}, 0.5);
  CHECK(m.value == Catch::Approx(0.5).epsilon(1e-9));
  CHECK_THROWS_AS(ball_mass(t, Vec{0, 0, 0}, -1.0), NumericalError);
}

TEST_CASE("second-order density of lebesgue at its exponent is flat") {
  MeasureSource leb = lebesgue_source(1, 2);
  TreeMeasure t = leb.refine(12);
  SecondOrderDensity d = second_order_density(t, Vec{0, 0, 0}, 1.0, 4.0, 0.25);
  CHECK(d.value == Catch::Approx(1.0).epsilon(1e-3));
  CHECK_FALSE(d.diverging);
  // at a smaller exponent the weighted mass blows up
  SecondOrderDensity up = second_order_density(t, Vec{0, 0, 0}, 1.5, 4.0, 0.25);
  CHECK(up.series.back().second > 2.0);
}

TEST_CASE("coordinate pushforwards are exact marginals") {
  MeasureSource prod = product_source(cantor3(), lebesgue_source(1, 3));
  TreeMeasure t = prod.refine(4);
  LinearMap pi = coordinate_map({0}, 2);
  TreeMeasure marg = pushforward_linear(t, pi, 4);
  CHECK(tree_equal(marg, cantor3().refine(4), 1e-12));
  CHECK(marg.rebin_error_bound == 0.0);
}

TEST_CASE("pushforwards conserve mass when the image stays inside") {
  Rng rng(31);
  TreeMeasure t = lebesgue_source(2, 2).refine(4);
  for (int trial = 0; trial < 10; ++trial) {
    double a = rng.uniform(-0.5, 0.5), b = rng.uniform(-0.5, 0.5);
    LinearMap m = make_linear(1, 2, {a, b});
    TreeMeasure img = pushforward_linear(t, m, 5);
    CHECK(img.total == Catch::Approx(1.0).epsilon(1e-9));
  }
  LinearMap rot = make_linear(2, 2, {0.6, -0.35, 0.35, 0.6});
  TreeMeasure img2 = pushforward_linear(t, rot, 4);
  CHECK(img2.total == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sum convolution of two uniforms is triangular") {
  MeasureSource a = lebesgue_source(1, 2);
  MeasureSource b = lebesgue_source(1, 2);
  TreeMeasure conv = sum_convolution(a, b, 1.0, 1.0, 8, 8, 2, 6);
  CHECK(conv.total == Catch::Approx(1.0).epsilon(1e-9));
  // symmetric around 0: left half carries mass 1/2
  MassWithBound left = box_mass(conv, Vec{-2, 0, 0}, Vec{0, 0, 0});
  CHECK(left.value == Catch::Approx(0.5).epsilon(1e-6));
  // the central quarter of a triangle on [-2,2] carries 7/16 of the mass;
  // leaf-uniform pair boxes leave a small deposit error at the cut lines
  MassWithBound mid = box_mass(conv, Vec{-0.5, 0, 0}, Vec{0.5, 0, 0});
  CHECK(mid.value == Catch::Approx(7.0 / 16.0).margin(5e-3));
}

TEST_CASE("diffusing by translates produces measure-point pairs") {
  MeasureSource leb = lebesgue_source(1, 2);
  EmpiricalDistribution d =
      diffuse(leb, Vec{-0.25, 0, 0}, Vec{0.25, 0, 0}, 8, 4, 77);
  CHECK(d.atoms.size() == 8);
  double wsum = 0;
  for (const auto& a : d.atoms) {
    wsum += a.w;
    REQUIRE(a.pt.has_value());
    CHECK(a.mu->total == Catch::Approx(1.0));
    Vec x = digits_to_point(leb.window(), *a.pt, leb.base());
    CHECK(x[0] >= -0.25 - 1e-9);
    CHECK(x[0] <= 0.25 + 1e-9);
  }
  CHECK(wsum == Catch::Approx(1.0));
  // derived streams make the result independent of sample evaluation order
  EmpiricalDistribution d2 =
      diffuse(leb, Vec{-0.25, 0, 0}, Vec{0.25, 0, 0}, 8, 4, 77);
  for (std::size_t i = 0; i < d.atoms.size(); ++i)
    CHECK(tree_equal(*d.atoms[i].mu, *d2.atoms[i].mu, 0.0));
}
