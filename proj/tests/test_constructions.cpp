#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "scenery/constructions.hpp"

using namespace scenery;

namespace {

DigitProcessSpec cantor_spec() {
  DigitProcessSpec s;
  s.base = 3;
  s.probs = {0.5, 0, 0.5};
  return s;
}

DigitProcessSpec chain_spec() {
  DigitProcessSpec s;
  s.base = 2;
  s.order = DigitProcessSpec::Order::markov;
  s.matrix = {0.9, 0.1, 0.4, 0.6};
  s.stationary = {0.8, 0.2};
  return s;
}

}  // namespace

TEST_CASE("digit process specs validate their distributions") {
  CHECK_NOTHROW(validate(cantor_spec()));
  CHECK_NOTHROW(validate(chain_spec()));

  DigitProcessSpec bad = cantor_spec();
  bad.probs = {0.5, 0.5};
  CHECK_THROWS_AS(validate(bad), SpecError);  // wrong arity
  bad.probs = {0.7, 0, 0.5};
  CHECK_THROWS_AS(validate(bad), SpecError);  // sums past 1
  bad.probs = {1.5, 0, -0.5};
  CHECK_THROWS_AS(validate(bad), SpecError);  // negative weight

  DigitProcessSpec chain = chain_spec();
  chain.stationary = {0.5, 0.5};
  CHECK_THROWS_AS(validate(chain), SpecError);  // not invariant under the rows
  chain = chain_spec();
  chain.matrix = {0.9, 0.2, 0.4, 0.6};
  CHECK_THROWS_AS(validate(chain), SpecError);  // row sum off
}

TEST_CASE("digit measures factor through the source constructors") {
  TreeMeasure direct = digit_iid_source(3, {0.5, 0, 0.5}).refine(5);
  TreeMeasure via_spec = digit_axis_measure(cantor_spec()).refine(5);
  CHECK(tree_equal(direct, via_spec, 1e-15));

  TreeMeasure plane = digit_measure(cantor_spec(), 2).refine(3);
  CHECK(plane.dim == 2);
  CHECK(plane.total == Catch::Approx(1.0));
  for (const auto& [k, m] : plane.leaves) CHECK(m == Catch::Approx(std::pow(0.25, 3)));
  CHECK(plane.leaves.size() == 64);
}

TEST_CASE("cp pairs condition the future on the sampled past") {
  CpPair iid = cp_pair_sample(cantor_spec(), 30);
  CHECK(iid.last_state == -1);
  ensure_digits(iid.pointed, 6);
  for (int j = 0; j < 6; ++j) CHECK(iid.pointed.path.d[0][j] != 1);

  CpPair mc = cp_pair_sample(chain_spec(), 30);
  REQUIRE((mc.last_state == 0 || mc.last_state == 1));
  const auto& row = chain_spec().matrix;
  for (int d = 0; d < 2; ++d) {
    PointDigits one;
    one.dim = 1;
    one.d[0] = {std::uint8_t(d)};
    CHECK(mc.pointed.src.path_mass(one, 1) ==
          Catch::Approx(row[mc.last_state * 2 + d]));
  }

  CpPair again = cp_pair_sample(chain_spec(), 30);
  ensure_digits(mc.pointed, 8);
  ensure_digits(again.pointed, 8);
  CHECK(again.last_state == mc.last_state);
  CHECK(again.pointed.path == mc.pointed.path);
}

TEST_CASE("ifs separation reports the smallest image gap") {
  IFSSpec s;
  s.maps = {{1.0 / 3.0, 0.0, {-2.0 / 3.0, 0, 0}}, {1.0 / 3.0, 0.0, {2.0 / 3.0, 0, 0}}};
  s.probs = {0.5, 0.5};
  CHECK(ifs_separation_gap(s) == Catch::Approx(2.0 / 3.0));

  TreeMeasure t = self_similar(s).refine(6);
  TreeMeasure ref = digit_iid_source(3, {0.5, 0, 0.5}).refine(6);
  CHECK(tree_l1_distance(t, ref) < 1e-9);
}

TEST_CASE("overlapping systems are rejected with the offending pair") {
  IFSSpec s;
  s.maps = {{0.6, 0.0, {-0.3, 0, 0}}, {0.6, 0.0, {0.3, 0, 0}}};
  s.probs = {0.5, 0.5};
  CHECK(ifs_separation_gap(s) < 0);
  CHECK_THROWS_AS(self_similar(s), SpecError);
  try {
    self_similar(s);
  } catch (const SpecError& e) {
    CHECK(std::string(e.what()).find("0 and 1") != std::string::npos);
  }
}

TEST_CASE("fixed-interval random fractals reduce to grouped digit measures") {
  RandomFractalSpec s;  // default: quarters [-1,-0.5] and [0.5,1], weight 1/2
  CHECK(integrability_statistic(s) == Catch::Approx(std::log(0.25)));
  TreeMeasure t = random_fractal(s, 6);
  std::vector<double> p4 = {0.5, 0, 0, 0.5};
  TreeMeasure ref = digit_iid_source(4, p4).refine(3);
  CHECK(tree_equal(rebase_tree(t, 2), ref, 1e-12));
}

TEST_CASE("random fractal draws are seed-deterministic") {
  RandomFractalSpec s;
  s.params.kind = RandomFractalParams::Kind::uniform4;
  s.seed = 5;
  TreeMeasure a = random_fractal(s, 5);
  TreeMeasure b = random_fractal(s, 5);
  CHECK(a.total == Catch::Approx(1.0).margin(1e-9));
  CHECK(tree_equal(a, b, 0.0));
  s.seed = 6;
  CHECK(tree_l1_distance(a, random_fractal(s, 5)) > 1e-6);
}

TEST_CASE("bad interval parameters are caught before building") {
  RandomFractalSpec s;
  s.params.i_lo = -0.4;
  s.params.i_hi = -0.6;  // reversed
  CHECK_THROWS_AS(integrability_statistic(s), SpecError);
  s = RandomFractalSpec{};
  s.params.j_lo = -0.6;  // overlaps I
  CHECK_THROWS_AS(integrability_statistic(s), SpecError);
}

TEST_CASE("splice specs demand increasing takeover depths") {
  std::vector<double> p10(10, 0.0);
  p10[0] = p10[9] = 0.5;
  SpliceSpec s;
  s.components = {lebesgue_source(1, 10), digit_iid_source(10, p10)};
  s.scales = {3};
  CHECK_NOTHROW(validate(s));

  MeasureSource m = splice(s, 2, 5);
  TreeMeasure t = m.refine(5);
  CHECK(t.total == Catch::Approx(1.0).margin(1e-12));
  CHECK(coarsen(t, 3).leaves.size() == 1000);  // uniform head

  s.scales = {0};
  CHECK_THROWS_AS(validate(s), SpecError);
  s.scales = {3, 3};
  CHECK_THROWS_AS(validate(s), SpecError);  // arity mismatch
  s.components.push_back(lebesgue_source(1, 10));
  CHECK_THROWS_AS(validate(s), SpecError);  // depths must increase
}

TEST_CASE("components that keep boundary mass are rejected") {
  SpliceSpec s;
  s.components = {lebesgue_source(1, 10),
                  point_mass_source(Vec{1.0, 0, 0}, 1, 10)};
  s.scales = {2};
  CHECK_THROWS_AS(validate(s), SpecError);
}

TEST_CASE("requested splice depth must fit the key capacity") {
  std::vector<double> p10(10, 0.0);
  p10[0] = p10[9] = 0.5;
  SpliceSpec s;
  s.components = {lebesgue_source(1, 10), digit_iid_source(10, p10)};
  s.scales = {3};
  CHECK_NOTHROW(splice(s, 1, 9));  // stage 1 is the head measure at any depth
  CHECK_THROWS_AS(splice(s, 2, 19), NumericalError);  // base-10 keys cap at 18
}

TEST_CASE("the coding map and perturbation sizes have closed forms") {
  CHECK(cantor20_point({}) == 0.0);
  CHECK(cantor20_point({1}) == Catch::Approx(0.7));
  CHECK(cantor20_point({1, 1}) == Catch::Approx(0.91));
  CHECK(cantor20_point({0, 1}) == Catch::Approx(0.21));
  CHECK_THROWS_AS(cantor20_point({2}), SpecError);

  CHECK(counterexample_theta(1) == Catch::Approx(0.35));
  CHECK(counterexample_theta(2) == Catch::Approx(0.105));
  CHECK(counterexample_theta(9) == Catch::Approx(0.35 * std::pow(0.3, 8)));
}

TEST_CASE("the tail growth constraint accepts and rejects the right specs") {
  CHECK_NOTHROW(validate(CounterexampleSpec{}));  // (2, 9)
  CHECK_NOTHROW(validate(CounterexampleSpec{2, {1, 4}}));
  CHECK_NOTHROW(validate(CounterexampleSpec{2, {2, 5}}));
  CHECK_NOTHROW(validate(CounterexampleSpec{1, {3}}));
  CHECK_THROWS_AS(validate(CounterexampleSpec{2, {1, 3}}), SpecError);  // tail too fat
  CHECK_THROWS_AS(validate(CounterexampleSpec{2, {3, 3}}), SpecError);
  CHECK_THROWS_AS(validate(CounterexampleSpec{2, {3}}), SpecError);  // arity
}

TEST_CASE("the perturbed coding map stays injective on a small grid") {
  CounterexampleSpec s{1, {4}};
  std::vector<double> vals;
  for (int xi = 0; xi < 16; ++xi)
    for (int yi = 0; yi < 2; ++yi) {
      std::vector<int> xc(4), yc = {yi};
      for (int i = 0; i < 4; ++i) xc[i] = xi >> i & 1;
      vals.push_back(counterexample_f(s, xc, yc));
    }
  std::sort(vals.begin(), vals.end());
  double min_gap = 1e300;
  for (std::size_t i = 1; i < vals.size(); ++i)
    min_gap = std::min(min_gap, vals[i] - vals[i - 1]);
  CHECK(min_gap > 1e-4);
  CHECK(min_gap == Catch::Approx(counterexample_theta(4)).epsilon(1e-6));

  // digits beyond the last exponent cannot move the value
  std::vector<int> deep = {1, 0, 1, 1, 1, 1};
  std::vector<int> cut(deep.begin(), deep.begin() + 4);
  CHECK(counterexample_f(s, deep, {1}) == Catch::Approx(counterexample_f(s, cut, {1})));
}

TEST_CASE("cover counts decrease toward the similarity dimension") {
  CounterexampleSpec s;  // (2, 9)
  CoverCount c1 = counterexample_cover_count(s, 1);
  CHECK(c1.count == Catch::Approx(8.0));
  CHECK(c1.length == Catch::Approx(0.33));
  CHECK(c1.dim_estimate == Catch::Approx(1.87564).margin(1e-4));
  CoverCount c2 = counterexample_cover_count(s, 2);
  CHECK(c2.count == Catch::Approx(2048.0));
  CHECK(c2.length == Catch::Approx(1.1 * std::pow(0.3, 8)).epsilon(1e-12));
  CHECK(c2.dim_estimate == Catch::Approx(0.79956).margin(1e-4));
  CHECK(c2.dim_estimate < c1.dim_estimate);
  CHECK(c2.dim_estimate > std::log(2.0) / std::log(10.0 / 3.0));

  // covers longer than the window give a nonsense negative estimate
  CoverCount degenerate = counterexample_cover_count(CounterexampleSpec{1, {1}}, 1);
  CHECK(degenerate.dim_estimate < 0);
}

TEST_CASE("the counterexample measure deposits every coded rectangle") {
  CounterexampleSpec s{1, {2}};
  TreeMeasure t = counterexample_measure(s, 2, 2, 2);
  CHECK(t.base == 20);
  CHECK(t.dim == 2);
  CHECK(t.total == Catch::Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(counterexample_measure(s, 12, 12, 2), SpecError);
}
