#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bootperc/pinch.hpp"
#include "oracles.hpp"

using namespace bootperc;

namespace {

const double kPi = std::numbers::pi;

ScaleSchedule desk_schedule() { return build_schedule(2, 1e-8, 1.25, 2); }

// i-separated augmentation built from projections of random lattice points.
std::vector<std::vector<Vec>> random_augmentation(const Direction& u, const ScaleSchedule& s, int k, double spread,
                                                  oracle::Gen& gen) {
  std::vector<std::vector<Vec>> z(k);
  for (int i = 1; i <= k; ++i) {
    const int want = static_cast<int>(gen.integer(0, 4));
    for (int attempt = 0; attempt < 50 && static_cast<int>(z[i - 1].size()) < want; ++attempt) {
      const Vec y{static_cast<double>(gen.integer(-spread, spread)), static_cast<double>(gen.integer(-spread, spread))};
      const Vec p = y - dot(y, u.u) * u.u;
      bool ok = true;
      for (const Vec& q : z[i - 1]) ok = ok && distance(p, q) > s.gap(i) / 2;
      if (ok) z[i - 1].push_back(p);
    }
  }
  return z;
}

}  // namespace

TEST_SUITE("pinch") {
  TEST_CASE("bump") {
    CHECK(bump(0) == 1.0);
    CHECK(bump(kPi / 2) == doctest::Approx(0.0));
    CHECK(bump(kPi / 4) == doctest::Approx(0.5));
    CHECK(bump(2.0) == 0.0);
    CHECK(bump(-kPi / 4) == doctest::Approx(0.5));
  }

  TEST_CASE("height examples") {
    const auto s = desk_schedule();
    const Direction u = Direction::from_rational({2, 1});
    const double gamma = 10.0;
    const Pinch flat(u, 3.5, gamma, s, 0);
    CHECK(flat.height({7, -2}) == 3.5);

    const Vec z{-1.0 / std::sqrt(5.0), 2.0 / std::sqrt(5.0)};
    const Pinch one(u, 3.5, gamma, s, 1, {{z}});
    CHECK(one.height(z) == doctest::Approx(3.5 + 16 * gamma * 10));
    CHECK(one.height(z, 2) == 3.5);
    const Vec far = z + (s.gap(1) * kPi / 64 + 1e-9) * z;
    CHECK(one.height(far) == 3.5);
    CHECK_THROWS_AS(one.height(z, 3), ParameterError);
    CHECK_THROWS_AS(Pinch(u, 0, gamma, s, 1, {{{1.0, 0.0}}}), ParameterError);
  }

  TEST_CASE("range membership") {
    const auto s = desk_schedule();
    const Direction u = Direction::from_rational({0, 1});
    const Pinch flat(u, 0.0, 10.0, s, 0);
    CHECK(flat.in_range(Vec{4, -1}));
    CHECK_FALSE(flat.in_range(Vec{4, 0}));  // on the surface
    const Vec z{0, 0};
    const Pinch one(u, 0.0, 10.0, s, 1, {{z}});
    CHECK(one.in_range(Vec{0, 8 * 10.0 * 10}));
    CHECK_FALSE(one.in_range(Vec{0, 16 * 10.0 * 10}));
    CHECK(one.in_slab(Vec{0, 16 * 10.0 * 10 + 5}, 1, 1));
    CHECK_FALSE(one.in_slab(Vec{0, 16 * 10.0 * 10 + 11}, 1, 1));
  }

  TEST_CASE("separation") {
    const auto s = desk_schedule();
    const Direction u = Direction::from_rational({0, 1});
    Pinch p(u, 0.0, 10.0, s, 1, {{{0, 0}, {s.gap(1) / 4, 0}}});
    CHECK(p.separation_violation());
    const auto rep = verify_height_bounds(p, 100, 1);
    REQUIRE_FALSE(rep.ok());
    CHECK(rep.violations[0].rfind("separation", 0) == 0);
    p.set_z(1, {{0, 0}, {s.gap(1) / 2 + 0.01, 0}});
    CHECK_FALSE(p.separation_violation());
  }

  TEST_CASE("height bounds hold on separated augmentations") {
    oracle::Gen gen(3);
    // geometric decay of Delta^(1-beta) needs Delta_{i+1}/Delta_i >= 16 at beta 1.25
    const auto s = build_schedule(2, 0.1, 1.25, 3, 256);
    for (int trial = 0; trial < 6; ++trial) {
      const Direction u = Direction::from_rational({gen.integer(1, 3), gen.integer(-3, 3)});
      const int k = static_cast<int>(gen.integer(0, 3));
      const auto z = random_augmentation(u, s, k, 2 * s.gap(1), gen);
      const Pinch p(u, 10 * gen.real(), 9.0, s, k, z);
      const auto rep = verify_height_bounds(p, 2000, static_cast<std::uint64_t>(trial));
      for (const auto& v : rep.violations) MESSAGE(v);
      CHECK(rep.ok());
      CHECK(rep.level_step_ratio <= 1.0);
    }
    CHECK(verify_height_bounds(Pinch(Direction::from_rational({1, 0}), 0, 9, s, 0), 10, 1).ok());
  }

  TEST_CASE("heights are local, bounded below by lambda, and monotone in lambda") {
    oracle::Gen gen(4);
    const auto s = desk_schedule();
    const Direction u = Direction::from_rational({2, 1});
    for (int trial = 0; trial < 20; ++trial) {
      const auto z = random_augmentation(u, s, 3, 200, gen);
      const Pinch p(u, 1.5, 8.9, s, 3, z);
      auto moved = z;
      // add a far point at level 1; nothing near the origin may change
      moved[0].push_back(Vec{-1000 * u.u[1], 1000 * u.u[0]});
      const Pinch q(u, 1.5, 8.9, s, 3, moved);
      const Pinch higher(u, 2.0, 8.9, s, 3, z);
      for (int i = 0; i < 200; ++i) {
        const Vec x{gen.real() * 400 - 200, gen.real() * 400 - 200};
        CHECK(p.height(x) >= p.lambda());
        CHECK(p.height(x) == q.height(x));
        if (p.in_range(x)) CHECK(higher.in_range(x));
        // at most one active bump per level
        for (int lvl = 1; lvl <= 3; ++lvl) {
          int active = 0;
          for (const Vec& c : p.z(lvl)) active += distance(p.project(x), c) < p.support(lvl) ? 1 : 0;
          CHECK(active <= 1);
        }
      }
    }
  }

  TEST_CASE("range closedness") {
    oracle::Gen gen(5);
    const auto s = desk_schedule();
    const auto n3 = neighbourhood_family(2, 3);
    const LatticeWindow w = LatticeWindow::centered(2, 40);
    const std::vector<IVec> dirs{{2, 1}, {-1, 2}, {-2, -1}, {1, -2}};
    for (const IVec& r : dirs) {
      const Pinch flat(Direction::from_rational(r), gen.real() * 5, 8.94, s, 0);
      CHECK(verify_range_closed(flat, w, n3).empty());
    }
    const Pinch unstable(Direction::from_rational({1, 1}), 0.3, 8.94, s, 0);
    CHECK_FALSE(verify_range_closed(unstable, w, neighbourhood_family(2, 2)).empty());
    CHECK(verify_range_closed(unstable, w, UpdateFamily(2, {})).empty());
  }

  TEST_CASE("closedness needs the slope hypothesis") {
    const auto n3 = neighbourhood_family(2, 3);
    const LatticeWindow w = LatticeWindow::centered(2, 40);
    const Direction u = Direction::from_rational({2, 1});
    const double eps = 1 / std::sqrt(10.0), gamma = 8.944;

    // At desk scale a single bump rises by more than a lattice step within
    // one step of its support edge, and the foot of the bump is not closed.
    const auto desk = desk_schedule();
    CHECK_FALSE(closedness_slope_condition(desk, gamma, eps));
    const Pinch steep(u, 0.3, gamma, desk, 1, {{{0, 0}}});
    CHECK_FALSE(verify_range_closed(steep, w, n3).empty());

    // With Delta_1 large enough the bump flank is a gentle tilt and the
    // range is closed.
    const std::int64_t d1 = min_delta1_for_closedness(gamma, eps, 1.49);
    const auto s = build_schedule(2, 0.5, 1.49, 1, d1);
    CHECK(closedness_slope_condition(s, gamma, eps));
    CHECK_FALSE(closedness_slope_condition(build_schedule(2, 0.5, 1.49, 1, d1 / 2), gamma, eps));
    // put the window on the flank, where the bump is about 1e6 high
    const Pinch probe(u, 0.0, gamma, s, 1, {{{0, 0}}});
    const Vec side{-u.u[1], u.u[0]};
    const double t = std::sqrt(1e6 / probe.amplitude(1));
    const double dist = (std::numbers::pi / 2 - t) * s.gap(1) / 32;
    const Vec z = (-dist) * side;
    const Pinch gentle(u, -1e6, gamma, s, 1, {{z}});
    CHECK(std::abs(gentle.height(Vec{0, 0})) < 1e3);
    CHECK(verify_range_closed(gentle, w, n3).empty());
  }

  TEST_CASE("serialisation") {
    oracle::Gen gen(6);
    const auto s = desk_schedule();
    const Direction u = Direction::from_rational({2, 1});
    const Pinch p(u, 0.25, 8.94, s, 2, random_augmentation(u, s, 2, 100, gen));
    const Pinch q = Pinch::from_json(p.to_json());
    CHECK(q.to_json() == p.to_json());
    CHECK(q.height(Vec{3, 4}) == p.height(Vec{3, 4}));
  }
}
