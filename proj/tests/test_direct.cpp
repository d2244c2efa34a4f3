#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mbmf/direct.hpp"
#include "oracles.hpp"

using namespace mbmf;
using direct_opt::DirectRect;
using direct_opt::SearchBox;

namespace {

SearchBox box2(double lo0, double hi0, double lo1, double hi1) {
  SearchBox b;
  b.lower.resize(2);
  b.upper.resize(2);
  b.lower << lo0, lo1;
  b.upper << hi0, hi1;
  return b;
}

DirectRect rect(double diameter, double f, std::uint64_t index) {
  DirectRect r;
  r.center = Vec::Constant(2, 0.5);
  r.levels = Eigen::VectorXi::Zero(2);
  r.diameter = diameter;
  r.f_center = f;
  r.creation_index = index;
  return r;
}

double min_f(const std::vector<DirectRect>& rects) {
  double m = rects.front().f_center;
  for (const DirectRect& r : rects) m = std::min(m, r.f_center);
  return m;
}

}  // namespace

TEST_SUITE("direct") {

TEST_CASE("constant objective returns the box center") {
  SearchBox box = box2(-1, 3, 2, 4);
  auto r = direct_opt::direct_minimize([](const Vec&) { return 3.0; }, box, 10);
  CHECK(r.best_value == 3.0);
  CHECK(r.best_point[0] == doctest::Approx(1.0));
  CHECK(r.best_point[1] == doctest::Approx(3.0));
  CHECK(r.eval_count <= 10);
}

TEST_CASE("branin reaches the grid-oracle minimum") {
  SearchBox box = box2(-5, 10, 0, 15);
  double oracle = oracles::grid_minimum(oracles::branin, box, 2000);
  auto r = direct_opt::direct_minimize(oracles::branin, box, 500, 1e-4);
  CHECK(r.eval_count <= 500);
  CHECK(r.best_value <= oracle + 1e-2);
  // sanity: the oracle itself is near the known optimum
  CHECK(oracle == doctest::Approx(0.397887).epsilon(1e-3));
}

TEST_CASE("sphere in 3d") {
  SearchBox box;
  box.lower = Vec::Constant(3, -2.0);
  box.upper = Vec::Constant(3, 2.0);
  auto r = direct_opt::direct_minimize(
      [](const Vec& x) { return x.squaredNorm(); }, box, 300);
  CHECK(r.eval_count <= 300);
  CHECK(r.best_value <= 1e-2);
  // the box center is the optimum and is sampled first
  CHECK(r.best_value == 0.0);
}

TEST_CASE("potentially optimal: singleton and dominance") {
  std::vector<DirectRect> one{rect(0.5, 3.0, 0)};
  auto po = direct_opt::potentially_optimal(one, 3.0, 1e-4);
  REQUIRE(po.size() == 1);
  CHECK(po[0] == 0);

  std::vector<DirectRect> two{rect(0.5, 3.0, 0), rect(0.5, 2.0, 1)};
  po = direct_opt::potentially_optimal(two, 2.0, 1e-4);
  REQUIRE(po.size() == 1);
  CHECK(po[0] == 1);
}

TEST_CASE("potentially optimal: handcrafted hull") {
  std::vector<DirectRect> rects{rect(0.1, 1.0, 0), rect(0.2, 0.8, 1),
                                rect(0.3, 0.85, 2), rect(0.3, 0.9, 3),
                                rect(0.5, 1.2, 4)};
  auto po = direct_opt::potentially_optimal(rects, min_f(rects), 1e-4);
  // hand-derived hull: diameters 0.2, 0.3 (the 0.85 one), 0.5
  std::vector<std::size_t> expected{1, 2, 4};
  CHECK(po == expected);
  CHECK(po == oracles::po_oracle(rects, min_f(rects), 1e-4));
}

TEST_CASE("potentially optimal: equal values leave only the largest class") {
  std::vector<DirectRect> rects{rect(0.1, 1.0, 0), rect(0.2, 1.0, 1),
                                rect(0.4, 1.0, 2)};
  auto po = direct_opt::potentially_optimal(rects, 1.0, 1e-4);
  REQUIRE(po.size() == 1);
  CHECK(po[0] == 2);
}

TEST_CASE("potentially optimal matches the exhaustive oracle on random sets") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> ud(0.05, 1.0);
  std::uniform_real_distribution<double> uf(-2.0, 5.0);
  std::uniform_int_distribution<int> dup(0, 3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<DirectRect> rects;
    const int n = 2 + rep % 12;
    double diam = 0.0;
    for (int i = 0; i < n; ++i) {
      // reuse some diameters so diameter classes have ties
      if (i == 0 || dup(rng) != 0) diam = ud(rng);
      rects.push_back(rect(diam, uf(rng), static_cast<std::uint64_t>(i)));
    }
    double fm = min_f(rects);
    auto got = direct_opt::potentially_optimal(rects, fm, 1e-4);
    auto want = oracles::po_oracle(rects, fm, 1e-4);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
  }
}

TEST_CASE("partition tiles the unit box through every iteration") {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SearchBox box;
  box.lower = Vec::Constant(2, -1.0);
  box.upper = Vec::Constant(2, 1.0);

  int iterations = 0;
  direct_opt::DirectOptions opt;
  opt.budget = 200;
  opt.observer = [&](const std::vector<DirectRect>& rects) {
    ++iterations;
    double volume = 0.0;
    for (const DirectRect& r : rects) {
      double v = 1.0;
      for (Eigen::Index d = 0; d < r.levels.size(); ++d)
        v *= std::pow(3.0, -static_cast<double>(r.levels[d]));
      volume += v;
      CHECK(r.diameter == direct_opt::rect_diameter(r.levels));
    }
    CHECK(volume == doctest::Approx(1.0).epsilon(1e-9));
    // interior disjointness at sampled points: exactly one containing rect
    for (int s = 0; s < 20; ++s) {
      Vec p(2);
      p << u(rng), u(rng);
      int hits = 0;
      for (const DirectRect& r : rects) {
        bool inside = true;
        for (Eigen::Index d = 0; d < 2 && inside; ++d) {
          double half = 0.5 * std::pow(3.0, -static_cast<double>(r.levels[d]));
          inside = std::abs(p[d] - r.center[d]) < half;
        }
        hits += inside;
      }
      CHECK(hits == 1);
    }
  };
  auto r = direct_opt::direct_minimize(oracles::branin, box, opt);
  CHECK(iterations > 0);
  CHECK(r.eval_count <= 200);
}

TEST_CASE("trisection splits the lowest-index longest side") {
  // after the first iteration the root must have been split along dim 0
  bool first = true;
  direct_opt::DirectOptions opt;
  opt.budget = 3;
  opt.observer = [&](const std::vector<DirectRect>& rects) {
    if (!first) return;
    first = false;
    REQUIRE(rects.size() == 3);
    CHECK(rects[0].levels[0] == 1);
    CHECK(rects[0].levels[1] == 0);
  };
  SearchBox box = box2(0, 1, 0, 1);
  direct_opt::direct_minimize([](const Vec& x) { return x[0] + x[1]; }, box,
                              opt);
}

TEST_CASE("budget cap, incumbent consistency, determinism") {
  SearchBox box = box2(-5, 10, 0, 15);
  for (int budget : {1, 2, 7, 33, 120}) {
    std::vector<double> seen;
    auto obj = [&seen](const Vec& x) {
      double v = oracles::branin(x);
      seen.push_back(v);
      return v;
    };
    auto r = direct_opt::direct_minimize(obj, box, budget);
    CHECK(r.eval_count == static_cast<int>(seen.size()));
    CHECK(r.eval_count <= budget);
    CHECK(r.best_value == *std::min_element(seen.begin(), seen.end()));
  }

  std::vector<Vec> pts_a, pts_b;
  auto rec_a = [&pts_a](const Vec& x) { pts_a.push_back(x); return oracles::branin(x); };
  auto rec_b = [&pts_b](const Vec& x) { pts_b.push_back(x); return oracles::branin(x); };
  auto ra = direct_opt::direct_minimize(rec_a, box, 150);
  auto rb = direct_opt::direct_minimize(rec_b, box, 150);
  CHECK(ra.best_value == rb.best_value);
  CHECK(ra.best_point == rb.best_point);
  REQUIRE(pts_a.size() == pts_b.size());
  for (std::size_t i = 0; i < pts_a.size(); ++i) CHECK(pts_a[i] == pts_b[i]);
}

TEST_CASE("all points stay inside the box") {
  SearchBox box = box2(2, 3, -7, -4);
  auto r = direct_opt::direct_minimize(
      [&box](const Vec& x) {
        CHECK(x[0] >= box.lower[0]);
        CHECK(x[0] <= box.upper[0]);
        CHECK(x[1] >= box.lower[1]);
        CHECK(x[1] <= box.upper[1]);
        return std::sin(13 * x[0]) + x[1] * x[1];
      },
      box, 100);
  CHECK((r.eval_count == 100 || r.eval_count == 99));
}

TEST_CASE("non-finite handling") {
  SearchBox box = box2(0, 1, 0, 1);
  CHECK_THROWS_AS(direct_opt::direct_minimize(
                      [](const Vec&) { return std::nan(""); }, box, 20),
                  NumericalError);
  // a partially non-finite objective still finds the finite region
  auto r = direct_opt::direct_minimize(
      [](const Vec& x) {
        if (x[0] < 0.4) return std::numeric_limits<double>::infinity();
        return (x - Vec::Constant(2, 0.8)).squaredNorm();
      },
      box, 200);
  CHECK(r.best_value < 0.05);
}

TEST_CASE("invalid arguments") {
  SearchBox bad = box2(1, 1, 0, 1);
  CHECK_THROWS_AS(
      direct_opt::direct_minimize([](const Vec&) { return 0.0; }, bad, 10),
      std::invalid_argument);
  SearchBox box = box2(0, 1, 0, 1);
  CHECK_THROWS_AS(
      direct_opt::direct_minimize([](const Vec&) { return 0.0; }, box, 0),
      std::invalid_argument);
}

}  // TEST_SUITE
