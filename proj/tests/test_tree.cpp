#include <catch2/catch_amalgamated.hpp>

#include "scenery/rng.hpp"
#include "scenery/tree.hpp"

using namespace scenery;

namespace {

TreeMeasure random_tree(Rng& rng, int base, int dim, int depth, int leaves) {
  TreeMeasure t = make_tree(base, dim, depth, unit_window(dim));
  std::uint64_t span = upow(std::uint64_t(base), depth);
  for (int i = 0; i < leaves; ++i) {
    CellKey k;
    for (int a = 0; a < dim; ++a) k.ax[a] = rng.below(span);
    t.add(k, rng.uniform(0.1, 1.0));
  }
  return t;
}

}  // namespace

TEST_CASE("adding mass accumulates and ignores nonpositive deposits") {
  TreeMeasure t = make_tree(2, 1, 3, unit_window(1));
  CellKey k;
  k.ax = {5, 0, 0};
  t.add(k, 0.25);
  t.add(k, 0.25);
  t.add(k, 0.0);
  t.add(k, -1.0);
  CHECK(t.leaves.size() == 1);
  CHECK(t.total == 0.5);
  CHECK(t.leaves.at(k) == 0.5);
}

TEST_CASE("coarsening conserves mass and folds children") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    TreeMeasure t = random_tree(rng, 3, 2, 4, 40);
    TreeMeasure c = coarsen(t, 2);
    CHECK(c.depth == 2);
    CHECK(c.total == Catch::Approx(t.total).epsilon(1e-12));
    for (const auto& [k, m] : c.leaves)
      CHECK(cell_mass(t, k, 2) == Catch::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("cell masses agree with brute-force sums") {
  Rng rng(11);
  TreeMeasure t = random_tree(rng, 2, 2, 5, 60);
  for (int d = 0; d <= 5; ++d) {
    double acc = 0;
    std::uint64_t span = upow(2, d);
    for (std::uint64_t i = 0; i < span; ++i)
      for (std::uint64_t j = 0; j < span; ++j) {
        CellKey k;
        k.ax = {i, j, 0};
        acc += cell_mass(t, k, d);
      }
    CHECK(acc == Catch::Approx(t.total).epsilon(1e-12));
  }
}

TEST_CASE("path masses telescope monotonically") {
  Rng rng(5);
  TreeMeasure t = random_tree(rng, 3, 1, 6, 50);
  PointDigits p = key_to_digits(t.leaves.begin()->first, 3, 6, 1);
  std::vector<double> pm = path_masses(t, p, 6);
  for (int j = 1; j < 6; ++j) CHECK(pm[j] <= pm[j - 1] + 1e-15);
  CHECK(pm[5] >= t.leaves.begin()->second - 1e-15);
  for (int j = 0; j < 6; ++j)
    CHECK(pm[j] == Catch::Approx(cell_mass(t, digits_to_key(p, 3, j + 1), j + 1))
                       .epsilon(1e-12));
}

TEST_CASE("box masses are exact on aligned boxes and bounded on straddling ones") {
  TreeMeasure t = make_tree(2, 1, 2, unit_window(1));
  for (std::uint64_t i = 0; i < 4; ++i) {
    CellKey k;
    k.ax = {i, 0, 0};
    t.add(k, 0.25);
  }
  MassWithBound half = box_mass(t, Vec{-1, 0, 0}, Vec{0, 0, 0});
  CHECK(half.value == Catch::Approx(0.5));
  CHECK(half.bound == 0.0);
  MassWithBound part = box_mass(t, Vec{-0.25, 0, 0}, Vec{0.25, 0, 0});
  CHECK(part.value == Catch::Approx(0.25));
  CHECK(part.bound == Catch::Approx(0.5));  // two straddling leaves
}

TEST_CASE("restriction renormalizes and rejects empty regions") {
  TreeMeasure t = make_tree(2, 1, 3, unit_window(1));
  CellKey a, b;
  a.ax = {0, 0, 0};
  b.ax = {7, 0, 0};
  t.add(a, 0.2);
  t.add(b, 0.6);
  TreeMeasure r = restrict_box(t, Vec{0, 0, 0}, Vec{1, 0, 0});
  CHECK(r.total == Catch::Approx(1.0));
  CHECK(r.leaves.size() == 1);
  CHECK(r.leaves.at(b) == Catch::Approx(1.0));
  CHECK_THROWS_AS(restrict_box(t, Vec{-0.5, 0, 0}, Vec{-0.3, 0, 0}), NumericalError);

  std::set<CellKey> cells;
  CellKey top;
  top.ax = {0, 0, 0};
  cells.insert(top);
  TreeMeasure rc = restrict_cells(t, 1, cells);
  CHECK(rc.total == Catch::Approx(1.0));
  CHECK(rc.leaves.count(a) == 1);
}

TEST_CASE("normalization puts unit mass on the standard ball") {
  TreeMeasure t = make_tree(2, 1, 1, unit_window(1));
  CellKey l, r;
  l.ax = {0, 0, 0};
  r.ax = {1, 0, 0};
  t.add(l, 3.0);
  t.add(r, 1.0);
  TreeMeasure n = normalize(t, Norm::box);
  CHECK(n.total == Catch::Approx(1.0));
  TreeMeasure s = normalize(t, Norm::star);
  CHECK(s.total == Catch::Approx(1.0));
  CHECK(tree_equal(n, s, 1e-12));  // everything already inside B_1
}

TEST_CASE("rebasing groups digits exactly") {
  Rng rng(9);
  TreeMeasure t = random_tree(rng, 2, 2, 6, 30);
  TreeMeasure r = rebase_tree(t, 3);
  CHECK(r.base == 8);
  CHECK(r.depth == 2);
  CHECK(r.total == t.total);
  CHECK(r.leaves == t.leaves);
  CHECK_THROWS_AS(rebase_tree(t, 4), SpecError);
}

TEST_CASE("boundary mass sees only edge-touching leaves") {
  TreeMeasure t = make_tree(3, 1, 2, unit_window(1));
  CellKey inner, edge;
  inner.ax = {4, 0, 0};
  edge.ax = {8, 0, 0};
  t.add(inner, 0.7);
  t.add(edge, 0.3);
  CHECK(boundary_mass(t) == Catch::Approx(0.3));
}

TEST_CASE("l1 distance is a metric on matching grids") {
  Rng rng(13);
  TreeMeasure a = random_tree(rng, 2, 1, 4, 10);
  TreeMeasure b = random_tree(rng, 2, 1, 4, 10);
  CHECK(tree_l1_distance(a, a) == 0.0);
  CHECK(tree_l1_distance(a, b) == Catch::Approx(tree_l1_distance(b, a)));
  TreeMeasure c = random_tree(rng, 2, 1, 4, 10);
  CHECK(tree_l1_distance(a, c) <=
        tree_l1_distance(a, b) + tree_l1_distance(b, c) + 1e-12);
}
