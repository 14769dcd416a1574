#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "scenery/distribution.hpp"
#include "scenery/source.hpp"

using namespace scenery;

namespace {

TreeMeasure uniform_tree(int depth) { return lebesgue_source(1, 2).refine(depth); }

TreeMeasure corner_tree(int depth) {
  TreeMeasure t = make_tree(2, 1, depth, unit_window(1));
  CellKey k;
  t.add(k, 1.0);  // all mass in the first cell
  return t;
}

}  // namespace

TEST_CASE("empirical distributions normalize their weights") {
  DistAtom a, b;
  a.w = 3;
  a.mu = std::make_shared<const TreeMeasure>(uniform_tree(4));
  b.w = 1;
  b.mu = std::make_shared<const TreeMeasure>(corner_tree(4));
  EmpiricalDistribution p = make_empirical({a, b});
  CHECK(p.atoms[0].w == Catch::Approx(0.75));
  CHECK(p.atoms[1].w == Catch::Approx(0.25));
  CHECK(p.min_depth() == 4);
  CHECK_THROWS_AS(make_empirical({}), SpecError);
}

TEST_CASE("mixtures keep both supports with scaled weights") {
  EmpiricalDistribution p = single_atom(uniform_tree(4));
  EmpiricalDistribution q = single_atom(corner_tree(4));
  EmpiricalDistribution m = mixture(p, q, 0.25);
  CHECK(m.atoms.size() == 2);
  CHECK(m.atoms[0].w == Catch::Approx(0.25));
  CHECK(m.atoms[1].w == Catch::Approx(0.75));
}

TEST_CASE("the moment metric is a pseudo-metric") {
  EmpiricalDistribution p = single_atom(uniform_tree(4));
  EmpiricalDistribution q = single_atom(corner_tree(4));
  EmpiricalDistribution r = mixture(p, q, 0.5);
  MetricSpec spec{3, 1};
  CHECK(distribution_distance(p, p, spec) == 0.0);
  double pq = distribution_distance(p, q, spec);
  CHECK(pq > 0);
  CHECK(distribution_distance(q, p, spec) == Catch::Approx(pq));
  double pr = distribution_distance(p, r, spec);
  double rq = distribution_distance(r, q, spec);
  CHECK(pr + rq <= pq + 1e-12);  // mixture lies between
  CHECK(pr == Catch::Approx(0.5 * pq).epsilon(1e-9));
}

TEST_CASE("metric distances are explicit on hand-built atoms") {
  // depth-1 masses: uniform = (1/2, 1/2); corner = (1, 0)
  EmpiricalDistribution p = single_atom(uniform_tree(3));
  EmpiricalDistribution q = single_atom(corner_tree(3));
  MetricSpec spec{1, 1};
  // distance = 2^{-1} * b^{-1} * (|1/2-1| + |1/2-0|) = 0.25
  CHECK(distribution_distance(p, q, spec) == Catch::Approx(0.25));
  MetricSpec deg2{1, 2};
  // pair term adds 1/2 * 2^{-2} * l1(outer products) = 1/8 * (1/4+1/4+1/4+|1/4-1|)
  double expect = 0.25 + 0.125 * (0.25 + 0.25 + 0.25 + 0.75);
  CHECK(distribution_distance(p, q, deg2) == Catch::Approx(expect));
}

TEST_CASE("summaries stream the same result as batch summarization") {
  EmpiricalDistribution p = single_atom(uniform_tree(4));
  EmpiricalDistribution q = single_atom(corner_tree(4));
  EmpiricalDistribution m = mixture(p, q, 0.3);
  MetricSpec spec{3, 2};
  MomentSummary batch = summarize(m, spec);
  MomentSummary stream = make_summary(2, 1, spec);
  for (const auto& a : m.atoms) summary_add(stream, *a.mu, a.w);
  CHECK(summary_distance(batch, stream) == Catch::Approx(0.0).margin(1e-15));
  // summaries ignore overall weight scaling
  MomentSummary doubled = make_summary(2, 1, spec);
  for (const auto& a : m.atoms) summary_add(doubled, *a.mu, 2 * a.w);
  CHECK(summary_distance(batch, doubled) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("summary mixing matches distribution mixing") {
  EmpiricalDistribution p = single_atom(uniform_tree(4));
  EmpiricalDistribution q = single_atom(corner_tree(4));
  MetricSpec spec{2, 1};
  for (double lam : {0.0, 0.3, 1.0}) {
    MomentSummary mixed = summary_mix(summarize(p, spec), summarize(q, spec), lam);
    MomentSummary direct = summarize(
        lam == 0.0 ? q : (lam == 1.0 ? p : mixture(p, q, lam)), spec);
    CHECK(summary_distance(mixed, direct) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("segment distance vanishes on segment members and not off it") {
  EmpiricalDistribution p = single_atom(uniform_tree(4));
  EmpiricalDistribution q = single_atom(corner_tree(4));
  MetricSpec spec{3, 1};
  auto [d_mid, l_mid] = distance_to_segment(mixture(p, q, 0.4), p, q, spec);
  CHECK(d_mid == Catch::Approx(0.0).margin(1e-9));
  CHECK(l_mid == Catch::Approx(0.4).margin(0.02));
  // a third distribution away from the segment keeps positive distance
  TreeMeasure far = make_tree(2, 1, 4, unit_window(1));
  CellKey k;
  k.ax = {15, 0, 0};
  far.add(k, 1.0);
  auto [d_far, l_far] = distance_to_segment(single_atom(far), p, q, spec);
  (void)l_far;
  CHECK(d_far > 0.01);
}
