#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "scenery/rng.hpp"
#include "scenery/serialize.hpp"

using namespace scenery;

TEST_CASE("numbers print in their shortest round-trip form") {
  CHECK(fmt(0.0) == "0");
  CHECK(fmt(1.0) == "1");
  CHECK(fmt(0.5) == "0.5");
  CHECK(fmt(-0.25) == "-0.25");

  Rng r(99);
  for (int i = 0; i < 500; ++i) {
    int k = int(r.below(17)) - 8;
    double x = (r.uniform() - 0.5) * std::pow(10.0, k);
    std::string s = fmt(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
  CHECK(std::strtod(fmt(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
  CHECK(std::strtod(fmt(1e300).c_str(), nullptr) == 1e300);
  CHECK(std::strtod(fmt(1e-300).c_str(), nullptr) == 1e-300);
}

TEST_CASE("spec text round-trips through its canonical form") {
  std::string text =
      "product( iid( base=3 p=0.5 0 0.5 ) , lebesgue( dim=1, base=3 ) )";
  SpecNode n = parse_spec_node(text);
  std::string canon = write_spec_node(n);
  CHECK(canon == "product(iid(base=3, p=0.5 0 0.5), lebesgue(base=3, dim=1))");
  CHECK(write_spec_node(parse_spec_node(canon)) == canon);

  SpecNode bare = parse_spec_node("cantor3");
  CHECK(bare.tag == "cantor3");
  CHECK(bare.params.empty());
  CHECK(write_spec_node(bare) == "cantor3");
}

TEST_CASE("malformed specs are rejected") {
  CHECK_THROWS_AS(parse_spec_node("iid(base=3, base=4, p=1)"), SpecError);
  CHECK_THROWS_AS(parse_spec_node("iid(base=2"), SpecError);
  CHECK_THROWS_AS(parse_spec_node("iid(p=)"), SpecError);
  CHECK_THROWS_AS(parse_spec_node("iid(base=2, p=1) tail"), SpecError);
  CHECK_THROWS_AS(parse_spec_node(""), SpecError);
  CHECK_THROWS_WITH(parse_measure("wibble"),
                    Catch::Matchers::ContainsSubstring("unknown variant"));
}

TEST_CASE("presets build the documented measures") {
  struct Row {
    const char* name;
    int dim, base;
  };
  const Row rows[] = {{"lebesgue1", 1, 2}, {"lebesgue2", 2, 2},
                      {"cantor3", 1, 3},   {"cantorx", 2, 3},
                      {"nu10", 1, 10},     {"nu10x", 2, 10},
                      {"bern13", 1, 2}};
  for (const Row& row : rows) {
    MeasureSource m = parse_measure(row.name);
    INFO(row.name);
    CHECK(m.dim() == row.dim);
    CHECK(m.base() == row.base);
  }
  CHECK(tree_equal(parse_measure("cantor3").refine(4),
                   digit_iid_source(3, {0.5, 0, 0.5}).refine(4), 0.0));
}

TEST_CASE("tagged variants forward their parameters") {
  MeasureSource leb = parse_measure("lebesgue(dim=2, base=3, window=0 0 1)");
  CHECK(leb.dim() == 2);
  CHECK(leb.base() == 3);
  CHECK(leb.window().half == 1.0);
  CHECK(leb.window().center[0] == 0.0);

  MeasureSource pt = parse_measure("point(x=0.25 0.5)");
  CHECK(pt.dim() == 2);
  TreeMeasure ptt = pt.refine(2);
  CHECK(ptt.leaves.size() == 1);
  CHECK(ptt.total == Catch::Approx(1.0));

  MeasureSource mk =
      parse_measure("markov(base=2, rows=0.9 0.1 0.4 0.6, start=0.8 0.2)");
  TreeMeasure mkt = mk.refine(1);
  std::vector<double> ms;
  for (const auto& [k, m] : mkt.leaves) ms.push_back(m);
  std::sort(ms.begin(), ms.end());
  REQUIRE(ms.size() == 2);
  CHECK(ms[0] == Catch::Approx(0.2));
  CHECK(ms[1] == Catch::Approx(0.8));
  CHECK_THROWS_AS(
      parse_measure("markov(base=2, rows=0.9 0.1 0.4 0.6, start=0.5 0.5)"),
      SpecError);

  MeasureSource pr = parse_measure("product(cantor3, lebesgue(dim=1, base=3))");
  CHECK(pr.dim() == 2);
  CHECK(pr.base() == 3);

  MeasureSource pu = parse_measure("push(lebesgue2, rows=1, map=1 1, depth=8)");
  CHECK(pu.dim() == 1);
  CHECK(pu.refine(3).total == Catch::Approx(1.0).margin(1e-9));

  MeasureSource ro = parse_measure("rotate(cantorx, angle=0.7853981634, depth=8)");
  CHECK(ro.dim() == 2);
  CHECK(ro.refine(3).total == Catch::Approx(1.0).margin(1e-9));

  MeasureSource sp =
      parse_measure("splice(lebesgue(dim=1, base=10), nu10, at=3, depth=5)");
  CHECK(sp.dim() == 1);
  CHECK(sp.base() == 10);
  CHECK(sp.refine(5).total == Catch::Approx(1.0).margin(1e-9));

  std::string thirds =
      "selfsimilar(base=3, dim=1, canon=10, maps="
      "0.3333333333333333 -0.6666666666666666 0.5 "
      "0.3333333333333333 0.6666666666666666 0.5)";
  MeasureSource ss = parse_measure(thirds);
  CHECK(tree_l1_distance(ss.refine(4),
                         digit_iid_source(3, {0.5, 0, 0.5}).refine(4)) < 1e-9);

  MeasureSource rf = parse_measure("random(seed=7)");
  CHECK(rf.base() == 2);
  CHECK(rf.refine(4).total == Catch::Approx(1.0).margin(1e-9));
  CHECK(tree_equal(rf.refine(4), parse_measure("random(seed=7)").refine(4), 0.0));
}

namespace {

TreeMeasure random_tree(std::uint64_t seed) {
  Rng r(seed);
  TreeMeasure t = make_tree(3, 2, 3, unit_window(2));
  for (int i = 0; i < 15; ++i) {
    PointDigits p;
    p.dim = 2;
    for (int a = 0; a < 2; ++a)
      for (int j = 0; j < 3; ++j) p.d[a].push_back(std::uint8_t(r.below(3)));
    t.add(digits_to_key(p, 3, 3), r.uniform() + 0.01);
  }
  t.rebin_error_bound = 0.125;
  return t;
}

}  // namespace

TEST_CASE("trees round-trip through the columnar format") {
  TreeMeasure t = random_tree(7);
  std::ostringstream os;
  write_tree_columnar(os, t);
  std::istringstream is(os.str());
  TreeMeasure back = read_tree_columnar(is);
  CHECK(back.base == t.base);
  CHECK(back.dim == t.dim);
  CHECK(back.depth == t.depth);
  CHECK(back.window == t.window);
  CHECK(back.rebin_error_bound == t.rebin_error_bound);
  CHECK(tree_equal(back, t, 0.0));
  // leaves are exact; the reader re-sums them in key order, so the derived
  // total can differ from the insertion-order sum by an ulp
  CHECK(back.total == Catch::Approx(t.total).epsilon(1e-14));
}

TEST_CASE("depth-zero trees use a placeholder digit column") {
  TreeMeasure t = make_tree(2, 1, 0, unit_window(1));
  t.add(CellKey{}, 1.0);
  std::ostringstream os;
  write_tree_columnar(os, t);
  CHECK(os.str().find("\n- 1\n") != std::string::npos);
  std::istringstream is(os.str());
  TreeMeasure back = read_tree_columnar(is);
  CHECK(back.depth == 0);
  CHECK(back.total == 1.0);
}

TEST_CASE("corrupt tree files are refused") {
  std::istringstream no_header("0 0.5\n");
  CHECK_THROWS_AS(read_tree_columnar(no_header), SpecError);

  std::istringstream bad_total(
      "# base=2 dim=1 depth=1 total=0.75 rebin_bound=0 window=0 1\n"
      "0 0.5\n1 0.5\n");
  CHECK_THROWS_AS(read_tree_columnar(bad_total), NumericalError);

  std::istringstream bad_digit(
      "# base=2 dim=1 depth=1 total=1 rebin_bound=0 window=0 1\n"
      "2 1\n");
  CHECK_THROWS_AS(read_tree_columnar(bad_digit), SpecError);

  std::istringstream short_digits(
      "# base=2 dim=1 depth=2 total=1 rebin_bound=0 window=0 1\n"
      "0 1\n");
  CHECK_THROWS_AS(read_tree_columnar(short_digits), SpecError);
}

TEST_CASE("report helpers format stable text") {
  std::ostringstream os;
  write_kv(os, "alpha", 0.5);
  write_kv(os, "name", "x", 2);
  write_csv_row(os, {1, 0.25, -3});
  CHECK(os.str() == "alpha: 0.5\n  name: x\n1,0.25,-3\n");
}
