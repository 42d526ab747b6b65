#include <doctest.h>

#include "bootperc/lattice.hpp"
#include "oracles.hpp"

using namespace bootperc;

namespace {

std::set<IVec> as_set(const Configuration& c) {
  auto v = c.sites();
  return {v.begin(), v.end()};
}

oracle::World world_of(const LatticeWindow& w) {
  oracle::World o;
  o.box = {w.lower(), w.upper()};
  if (w.is_torus()) o.edge = oracle::Edge::torus;
  if (auto* h = std::get_if<HalfSpaceBoundary>(&w.policy())) {
    o.edge = oracle::Edge::halfspace;
    o.normal = h->normal;
    o.offset = h->offset;
  }
  return o;
}

Configuration random_config(const LatticeWindow& w, double p, oracle::Gen& gen) {
  Configuration c(w);
  for (std::uint64_t i = 0; i < w.volume(); ++i)
    if (gen.coin(p)) c.infect(i);
  return c;
}

}  // namespace

TEST_SUITE("lattice") {
  TEST_CASE("r-neighbour families") {
    CHECK(neighbourhood_family(2, 2).rules().size() == 6);
    const auto two = neighbourhood_family(2, 2);
    for (const auto& r : two.rules()) CHECK(r.size() == 2);
    const auto one = neighbourhood_family(1, 2);
    REQUIRE(one.rules().size() == 1);
    CHECK(one.rules()[0].size() == 2);
    CHECK(neighbourhood_family(2, 1).rules().size() == 4);
    CHECK(neighbourhood_family(3, 3).rules().size() == 20);
    CHECK_THROWS_AS(neighbourhood_family(2, 0), ParameterError);
    CHECK_THROWS_AS(neighbourhood_family(2, 5), ParameterError);
  }

  TEST_CASE("family documents") {
    const auto f = parse_family(R"({"d":2,"rules":[[[1,0],[0,1]]]})");
    CHECK(f.rules().size() == 1);
    CHECK(f.rules()[0].size() == 2);
    CHECK(f.radius() == doctest::Approx(1.0));

    try {
      parse_family(R"({"d":2,"rules":[[[0,0]]]})");
      FAIL("origin accepted");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("origin not allowed") != std::string::npos);
    }
    CHECK(parse_family(R"({"d":2,"rules":[]})").empty());
    CHECK_THROWS_AS(parse_family(R"({"d":2,"rules":[[]]})"), ValidationError);
    CHECK_THROWS_AS(parse_family(R"({"d":2,"rules":[[[1,0],[1,0]]]})"), ValidationError);
    CHECK_THROWS_AS(parse_family(R"({"d":2,"rules":[[[1,0]],[[1,0]]]})"), ValidationError);
    CHECK_THROWS_AS(parse_family(R"({"d":2,"rules":[[[1,0,0]]]})"), ValidationError);
    CHECK_THROWS_AS(parse_family(R"({"d":2,"rules":[[[1,"x"]]]})"), ParseError);
    CHECK_THROWS_AS(parse_family(R"({"d":2,"rules":)"), ParseError);

    const auto back = parse_family(f.to_json());
    CHECK(back.rules() == f.rules());
    CHECK(back.hash() == f.hash());
  }

  TEST_CASE("radius is the largest rule-site norm") {
    const UpdateFamily f(2, {{{3, 4}}, {{1, 0}, {0, -2}}});
    CHECK(f.radius() == doctest::Approx(5.0));
    CHECK(f.radius_ceil() == 5);
    CHECK(UpdateFamily(2, {}).radius() == 0.0);
  }

  TEST_CASE("one step of the 2-neighbour rule") {
    Configuration c(LatticeWindow({-3, -3}, {4, 4}));
    c.infect(IVec{0, 0});
    c.infect(IVec{1, 1});
    const auto next = step(c, neighbourhood_family(2, 2));
    CHECK(as_set(next) == std::set<IVec>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    CHECK(step(Configuration(c.window()), neighbourhood_family(2, 2)).count() == 0);

    Configuration single(c.window());
    single.infect(IVec{0, 0});
    CHECK(step(single, neighbourhood_family(2, 3)) == single);
    CHECK_THROWS_AS(step(single, neighbourhood_family(3, 3)), ParameterError);
  }

  TEST_CASE("closure examples") {
    Configuration diag(LatticeWindow::cube(2, 8));
    for (int i = 0; i < 8; ++i) diag.infect(IVec{i, i});
    CHECK(closure(diag, neighbourhood_family(2, 2)).full());

    Configuration c(LatticeWindow::cube(2, 8));
    c.infect(IVec{3, 3});
    CHECK(closure(c, UpdateFamily(2, {})) == c);
    c.infect(IVec{4, 4});
    CHECK(closure(c, neighbourhood_family(2, 3)) == c);
  }

  TEST_CASE("percolation") {
    Configuration all(LatticeWindow::cube(2, 6, TorusBoundary{}));
    for (std::uint64_t i = 0; i < all.window().volume(); ++i) all.infect(i);
    CHECK(percolates(all, neighbourhood_family(2, 3)));
    CHECK_FALSE(percolates(Configuration(all.window()), neighbourhood_family(2, 1)));

    // A full row is already closed: every site off the row sees one infected
    // neighbour. A full row plus a diagonal percolates.
    Configuration row(LatticeWindow::cube(2, 16, TorusBoundary{}));
    for (int x = 0; x < 16; ++x) row.infect(IVec{x, 5});
    const auto fam = neighbourhood_family(2, 2);
    CHECK_FALSE(percolates(row, fam));
    CHECK(oracle::naive_closure(world_of(row.window()), as_set(row), fam.rules()).size() == 16);
    for (int x = 0; x < 16; ++x) row.infect(IVec{x, x});
    CHECK(percolates(row, fam));
    CHECK(oracle::naive_closure(world_of(row.window()), as_set(row), fam.rules()).size() == 256);
  }

  TEST_CASE("frontier closure matches the naive fixed point") {
    oracle::Gen gen(11);
    const std::vector<BoundaryPolicy> policies = {FreeBoundary{}, TorusBoundary{}, HalfSpaceBoundary{{1, 2}, -3}};
    for (int trial = 0; trial < 150; ++trial) {
      const auto fam = gen.family(2, 4, 4, 2);
      const auto& policy = policies[trial % policies.size()];
      const LatticeWindow w({-4, -3}, {6, 8}, policy);
      const auto c = random_config(w, trial % 2 ? 0.1 : 0.3, gen);
      const auto fast = closure(c, fam);
      const auto slow = oracle::naive_closure(world_of(w), as_set(c), fam.rules());
      REQUIRE(as_set(fast) == slow);
    }
  }

  TEST_CASE("closure on a 3-dimensional torus") {
    oracle::Gen gen(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto fam = gen.family(3, 3, 3, 1);
      const LatticeWindow w({0, 0, 0}, {5, 4, 6}, TorusBoundary{});
      const auto c = random_config(w, 0.15, gen);
      REQUIRE(as_set(closure(c, fam)) == oracle::naive_closure(world_of(w), as_set(c), fam.rules()));
    }
  }

  TEST_CASE("monotone in the initial set and idempotent") {
    oracle::Gen gen(23);
    for (int trial = 0; trial < 60; ++trial) {
      const auto fam = gen.family(2, 4, 3, 2);
      const LatticeWindow w = LatticeWindow::cube(2, 20);
      const auto small = random_config(w, 0.1, gen);
      Configuration big = small;
      big |= random_config(w, 0.1, gen);
      const auto cs = closure(small, fam), cb = closure(big, fam);
      CHECK(small.subset_of(cs));
      CHECK(cs.subset_of(cb));
      CHECK(closure(cs, fam) == cs);
      CHECK(step(cs, fam) == cs);
    }
  }

  TEST_CASE("closure commutes with torus shifts") {
    oracle::Gen gen(31);
    for (int trial = 0; trial < 40; ++trial) {
      const auto fam = gen.family(2, 3, 3, 2);
      const LatticeWindow w = LatticeWindow::cube(2, 12, TorusBoundary{});
      const auto c = random_config(w, 0.2, gen);
      const std::int64_t dx = gen.integer(0, 11), dy = gen.integer(0, 11);
      auto shift = [&](const Configuration& in) {
        Configuration out(w);
        for (const IVec& x : in.sites()) out.infect(IVec{(x[0] + dx) % 12, (x[1] + dy) % 12});
        return out;
      };
      CHECK(closure(shift(c), fam) == shift(closure(c, fam)));
    }
  }

  TEST_CASE("sites beyond R times t steps cannot matter after t steps") {
    oracle::Gen gen(47);
    for (int trial = 0; trial < 30; ++trial) {
      const auto fam = gen.family(2, 4, 3, 2);
      const LatticeWindow w = LatticeWindow::cube(2, 30);
      auto a = random_config(w, 0.25, gen);
      auto b = a;
      const int steps = static_cast<int>(gen.integer(1, 3));
      const double reach = fam.radius() * steps;
      // flip a site far from the probed corner region
      const IVec far{29, 29};
      if (b.infected(far))
        b.clear(w.index(far));
      else
        b.infect(far);
      for (int t = 0; t < steps; ++t) {
        a = step(a, fam);
        b = step(b, fam);
      }
      for (std::uint64_t i = 0; i < w.volume(); ++i) {
        const IVec x = w.site(i);
        if (std::hypot(static_cast<double>(x[0] - far[0]), static_cast<double>(x[1] - far[1])) > reach)
          REQUIRE(a.infected(i) == b.infected(i));
      }
    }
  }

  TEST_CASE("snapshots round-trip") {
    Configuration c(LatticeWindow({-2, 1}, {5, 9}, HalfSpaceBoundary{{1, -1}, 2}));
    c.infect(IVec{-2, 1});
    c.infect(IVec{4, 8});
    c.infect(IVec{0, 3});
    const std::string text = write_snapshot(c);
    CHECK(text.rfind("# window lower=-2,1 upper=5,9 policy=halfspace:1,-1:2\n", 0) == 0);
    CHECK(read_snapshot(text) == c);
    CHECK_THROWS_AS(read_snapshot("# window lower=0,0 upper=4,4 policy=free\n9 9\n"), ParseError);
    CHECK_THROWS_AS(read_snapshot("0 0\n"), ParseError);
  }

  TEST_CASE("window validation") {
    CHECK_THROWS_AS(LatticeWindow({0, 0}, {0, 3}), ParameterError);
    CHECK_THROWS_AS(LatticeWindow({0}, {3, 3}), ParameterError);
    const LatticeWindow w({-1, 2}, {3, 5});
    CHECK(w.volume() == 12);
    for (std::uint64_t i = 0; i < w.volume(); ++i) CHECK(w.index(w.site(i)) == i);
  }
}
