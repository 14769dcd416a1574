#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "scenery/dimension.hpp"
#include "scenery/dynamics.hpp"

using namespace scenery;

namespace {

MeasureSource cantor3() { return digit_iid_source(3, {0.5, 0, 0.5}); }

MeasureSource nu_prime() {
  std::vector<double> p(10, 0.0);
  p[0] = p[9] = 0.5;
  return digit_iid_source(10, p);
}

}  // namespace

TEST_CASE("entropy counts cells of a uniform tree exactly") {
  TreeMeasure t = lebesgue_source(2, 2).refine(4);
  for (int m = 0; m <= 4; ++m)
    CHECK(shannon_entropy(t, m) == Catch::Approx(m * 2 * std::log(2.0)).margin(1e-12));
  CHECK(streamed_entropy(lebesgue_source(2, 2), 3) ==
        Catch::Approx(shannon_entropy(t, 3)).margin(1e-12));
}

TEST_CASE("entropy dimension recovers classic values") {
  DimensionEstimate c = entropy_dimension(cantor3(), 4, 12);
  CHECK(c.value == Catch::Approx(std::log(2.0) / std::log(3.0)).margin(1e-9));
  CHECK(c.lower == Catch::Approx(c.upper).margin(1e-9));  // exactly linear growth
  CHECK(c.n_min == 4);
  CHECK(c.n_max == 12);
  CHECK(c.method == "entropy-slope");

  DimensionEstimate n = entropy_dimension(nu_prime(), 4, 12);
  CHECK(n.value == Catch::Approx(std::log(2.0) / std::log(10.0)).margin(1e-9));

  CHECK(entropy_dimension(lebesgue_source(1, 2), 4, 12).value ==
        Catch::Approx(1.0).margin(1e-9));
  CHECK(entropy_dimension(lebesgue_source(2, 3), 2, 8).value ==
        Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("tree and source entropy dimensions agree") {
  DimensionEstimate a = entropy_dimension(cantor3(), 2, 9);
  DimensionEstimate b = entropy_dimension(cantor3().refine(9), 2, 9);
  CHECK(a.value == Catch::Approx(b.value).margin(1e-12));
  CHECK(a.lower == Catch::Approx(b.lower).margin(1e-12));
  CHECK(a.upper == Catch::Approx(b.upper).margin(1e-12));
}

TEST_CASE("local dimension tracks the decay of path masses") {
  MeasureSource m = cantor3();
  Rng rng(7);
  PointDigits x = m.sample(12, rng);
  DimensionEstimate e = local_dimension(m, x, 4, 12);
  CHECK(e.value == Catch::Approx(std::log(2.0) / std::log(3.0)).margin(1e-9));
  CHECK(e.method == "local-mass-slope");

  DimensionEstimate et = local_dimension(m.refine(12), x, 4, 12);
  CHECK(et.value == Catch::Approx(e.value).margin(1e-12));

  // skewed digit weights: the local slope lands between the digit exponents
  MeasureSource skew = digit_iid_source(2, {0.25, 0.75});
  Rng rng2(3);
  PointDigits y = skew.sample(12, rng2);
  DimensionEstimate s = local_dimension(skew, y, 2, 12);
  CHECK(s.value > std::log(4.0 / 3.0) / std::log(2.0) - 1e-9);
  CHECK(s.value < 2.0 + 1e-9);
  CHECK(s.lower <= s.value);
  CHECK(s.upper >= s.value);
}

TEST_CASE("local dimension rejects points outside the support") {
  PointDigits bad;
  bad.dim = 1;
  bad.d[0].assign(12, 1);
  CHECK_THROWS_AS(local_dimension(cantor3(), bad, 2, 8), NumericalError);
}

TEST_CASE("smoothed entropy stays within the comparison bound") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    int dim = 1 + int(rng.below(2));
    int base = 2 + int(rng.below(4));
    int depth = 1 + int(rng.below(3));
    TreeMeasure t = make_tree(base, dim, depth, unit_window(dim));
    int leaves = 1 + int(rng.below(20));
    std::uint64_t span = upow(std::uint64_t(base), depth);
    for (int i = 0; i < leaves; ++i) {
      CellKey k;
      for (int a = 0; a < dim; ++a) k.ax[a] = rng.below(span);
      t.add(k, rng.uniform());
    }
    t = normalize(t, Norm::box);
    double hs = smoothed_entropy(t, base);
    double hc = shannon_entropy(t, 1);
    CHECK(std::abs(hs - hc) <= dim * std::log(9.0) + 1e-9);
  }
}

TEST_CASE("box partition entropy at the tree base matches depth-one cells") {
  Rng rng(4);
  TreeMeasure t = make_tree(3, 2, 2, unit_window(2));
  for (int i = 0; i < 12; ++i) {
    CellKey k;
    k.ax = {rng.below(9), rng.below(9), 0};
    t.add(k, rng.uniform());
  }
  t = normalize(t, Norm::box);
  CHECK(box_partition_entropy(t, 3) ==
        Catch::Approx(shannon_entropy(t, 1)).margin(1e-9));
}

TEST_CASE("distribution dimension of a uniform atom is the space dimension") {
  EmpiricalDistribution d = single_atom(lebesgue_source(1, 3).refine(6));
  DistributionDimension dd = distribution_dimension(d, 1.0 / 3.0);
  CHECK(dd.value == Catch::Approx(1.0).margin(1e-9));
  CHECK(dd.excluded_weight == 0.0);
}

TEST_CASE("atoms with empty balls are excluded, not averaged") {
  Depositor dep(3, 1, 3, unit_window(1));
  dep.point(Vec{0.9, 0, 0}, 1.0);
  TreeMeasure far = dep.take();
  EmpiricalDistribution d =
      mixture(single_atom(lebesgue_source(1, 3).refine(6)), single_atom(far), 0.75);
  DistributionDimension dd = distribution_dimension(d, 1.0 / 3.0);
  CHECK(dd.value == Catch::Approx(1.0).margin(1e-9));
  CHECK(dd.excluded_weight == Catch::Approx(0.25));

  BallDimensionAccumulator acc(0.25);
  acc.add(far, 1.0);
  CHECK_THROWS_AS(acc.result(), NumericalError);
}

TEST_CASE("centered cantor orbits have the cantor dimension") {
  EmpiricalDistribution orbit = b_scenery_distribution(cantor3(), 96, 10, 5);
  EmpiricalDistribution centered = center_continuous(orbit, 8, 9);
  DistributionDimension dd = distribution_dimension(centered, 1.0 / 3.0);
  CHECK(dd.excluded_weight == 0.0);
  CHECK(dd.value == Catch::Approx(std::log(2.0) / std::log(3.0)).margin(0.1));
}

TEST_CASE("exactness spread separates exact from multifractal measures") {
  double cantor_spread = exactness_spread(cantor3(), 16, 2, 10, 11);
  CHECK(cantor_spread < 1e-6);  // every window slope equals log2/log3
  double skew_spread =
      exactness_spread(digit_iid_source(2, {0.25, 0.75}), 16, 2, 10, 11);
  CHECK(skew_spread > 0.1);
}
