#include "bootperc/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace bootperc {

using nlohmann::json;

namespace {

constexpr std::size_t kBoxBudget = std::size_t{1} << 18;
constexpr double kMinRadius = 1e-7;

struct Box {
  Vec lo, hi;
};

Vec centre_of(const Box& b) { return 0.5 * (b.lo + b.hi); }
double half_diagonal(const Box& b) { return 0.5 * distance(b.lo, b.hi); }

void split(const Box& b, std::vector<Box>& out) {
  const std::size_t d = b.lo.size();
  const Vec m = centre_of(b);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    Box c{b.lo, b.hi};
    for (std::size_t i = 0; i < d; ++i) ((mask >> i) & 1U ? c.lo[i] : c.hi[i]) = m[i];
    out.push_back(std::move(c));
  }
}

// Point of b nearest to the box [clo, chi].
Vec nearest_in(const Box& b, const Vec& clo, const Vec& chi) {
  Vec p(b.lo.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(0.5 * (b.lo[i] + b.hi[i]), clo[i], chi[i]);
    p[i] = std::clamp(q, b.lo[i], b.hi[i]);
  }
  return p;
}

double point_box_distance(const Vec& x, const Vec& lo, const Vec& hi) { return box_distance(x, x, lo, hi); }

std::string describe(const IVec& v) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

std::string describe(const Vec& v) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

// Bad cubes first, then indeterminate ones: both must stay clear of a slab.
std::vector<std::pair<IVec, CubeState>> non_good(const CubeHierarchy& h, int k) {
  std::vector<std::pair<IVec, CubeState>> out;
  for (const IVec& c : h.cubes(k, CubeState::bad)) out.emplace_back(c, CubeState::bad);
  for (const IVec& c : h.cubes(k, CubeState::indeterminate)) out.emplace_back(c, CubeState::indeterminate);
  return out;
}

// Throws unless every non-good (k)-cube misses sigma + c L^(k).
void require_slab_clear(const Pinch& sigma, const CubeHierarchy& h, int k, double c, const std::string& check,
                        int level) {
  const double band = c * static_cast<double>(h.schedule().delta(k));
  for (const auto& [cube, st] : non_good(h, k)) {
    const auto [lo, hi] = cube_box(h.schedule().delta(k), cube);
    const Tri t = box_meets_slab(sigma, lo, hi, band);
    if (t == Tri::no) continue;
    std::ostringstream os;
    os << to_string(st) << " (" << k << ")-cube " << describe(cube) << (t == Tri::unknown ? " may meet" : " meets")
       << " the slab of half-width " << c << " Delta_" << k << " about the " << describe(sigma.u()) << " pinch";
    throw BarrierError(check, level, os.str());
  }
}

std::uint64_t raster_index(const IVec& lo, const IVec& hi, const IVec& x) {
  std::uint64_t idx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) idx = idx * static_cast<std::uint64_t>(hi[i] - lo[i]) + (x[i] - lo[i]);
  return idx;
}

bool in_box(const IVec& lo, const IVec& hi, const IVec& x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lo[i] || x[i] >= hi[i]) return false;
  return true;
}

template <class F>
void for_each_raster_site(const Cover& c, F&& fn) {
  std::uint64_t idx = 0;
  for_each_index(c.box_lo, c.box_hi, [&](const IVec& x) {
    if ((c.raster[idx >> 6] >> (idx & 63)) & 1U) fn(x);
    ++idx;
  });
}

void closedness_scan(const Configuration& inside, const LatticeWindow& window, const UpdateFamily& family,
                     std::vector<ClosureViolation>& out) {
  const LatticeWindow& big = inside.window();
  IVec y(window.dim());
  for (std::uint64_t i = 0; i < window.volume(); ++i) {
    const IVec x = window.site(i);
    if (inside.infected(big.index(x))) continue;
    for (std::size_t ri = 0; ri < family.rules().size(); ++ri) {
      bool all = true;
      for (const IVec& s : family.rules()[ri]) {
        for (int a = 0; a < window.dim(); ++a) y[a] = x[a] + s[a];
        if (!inside.infected(y)) {
          all = false;
          break;
        }
      }
      if (all) out.push_back({x, ri});
    }
  }
}

}  // namespace

BarrierError::BarrierError(std::string check, int level, std::string detail)
    : std::runtime_error(check + " (level " + std::to_string(level) + "): " + detail),
      check_(std::move(check)),
      level_(level),
      detail_(std::move(detail)) {}

Tri box_meets_slab(const Pinch& pinch, const Vec& lo, const Vec& hi, double band, Vec* witness) {
  std::vector<Box> stack{{lo, hi}};
  bool unknown = false;
  std::size_t used = 0;
  while (!stack.empty()) {
    const Box b = std::move(stack.back());
    stack.pop_back();
    if (++used > kBoxBudget) return Tri::unknown;
    const Vec m = centre_of(b);
    const double r = half_diagonal(b);
    const double g = pinch.gap(m);
    if (std::abs(g) <= band) {
      if (witness) *witness = m;
      return Tri::yes;
    }
    const double slope = 1.0 + pinch.slope_bound_near(m, r);
    if (std::abs(g) - slope * r > band) continue;
    if (r < kMinRadius) {
      unknown = true;
      continue;
    }
    split(b, stack);
  }
  return unknown ? Tri::unknown : Tri::no;
}

bool RangeSet::contains(const Vec& x) const {
  for (const Pinch& p : ranges)
    if (!p.in_range(x)) return false;
  return !ranges.empty();
}

NeighbourhoodProbe probe_neighbourhood(const RangeSet& region, const Vec& lo, const Vec& hi, double rho) {
  NeighbourhoodProbe out;
  Vec root_lo = lo, root_hi = hi;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    root_lo[i] -= rho;
    root_hi[i] += rho;
  }
  std::vector<Box> stack{{root_lo, root_hi}};
  std::size_t used = 0;
  auto note = [&](bool inside, const Vec& p) {
    if (inside && !out.meets_inside) {
      out.meets_inside = true;
      out.inside_witness = p;
    } else if (!inside && !out.meets_outside) {
      out.meets_outside = true;
      out.outside_witness = p;
    }
  };
  while (!stack.empty() && !out.crosses_boundary()) {
    const Box b = std::move(stack.back());
    stack.pop_back();
    if (box_distance(b.lo, b.hi, lo, hi) > rho) continue;
    if (++used > kBoxBudget) {
      out.unresolved = true;
      break;
    }
    const Vec m = centre_of(b);
    const double r = half_diagonal(b);
    if (point_box_distance(m, lo, hi) <= rho) note(region.contains(m), m);
    bool all_inside = !region.ranges.empty();
    bool all_outside = region.ranges.empty();
    for (const Pinch& p : region.ranges) {
      const double g = p.gap(m);
      const double slack = (1.0 + p.slope_bound_near(m, r)) * r;
      if (g - slack <= 0) all_inside = false;
      if (g + slack <= 0) all_outside = true;
    }
    if (all_inside || all_outside) {
      note(all_inside, nearest_in(b, lo, hi));
      continue;
    }
    if (r < kMinRadius) {
      out.unresolved = true;
      continue;
    }
    split(b, stack);
  }
  return out;
}

ExtendReport extend_pinch(Pinch& sigma, int i, const CubeHierarchy& h) {
  if (i < 1 || i > sigma.k()) throw ParameterError("extend_pinch: level outside 1..k");
  if (h.levels() < i + 1) throw ParameterError("extend_pinch: hierarchy lacks level i+1");
  if (!sigma.z(i).empty()) throw ParameterError("extend_pinch: Z_i already populated");
  const ScaleSchedule& s = h.schedule();
  const std::int64_t side = s.delta(i);
  const double gamma = sigma.gamma();

  require_slab_clear(sigma, h, i + 1, 1.0, "hypothesis", i);

  ExtendReport rep;
  rep.level = i;
  for (const BadCluster& P : all_clusters(h, i)) {
    std::optional<IVec> best;
    for (const IVec& m : P.members) {
      IVec lo(m.size()), hi(m.size());
      for (std::size_t a = 0; a < m.size(); ++a) {
        lo[a] = m[a] * side;
        hi[a] = lo[a] + side;
      }
      // lexicographic visit: the first hit in a member is its smallest
      bool found = false;
      for_each_index(lo, hi, [&](const IVec& x) {
        if (found || (best && !(x < *best))) return;
        if (sigma.in_slab(to_real(x), 4 * gamma, i)) {
          best = x;
          found = true;
        }
      });
    }
    Vec y;
    if (best) {
      y = to_real(*best);
      rep.chosen.push_back(*best);
    } else {
      bool any = false;
      for (const IVec& m : P.members) {
        const auto [lo, hi] = cube_box(side, m);
        Vec w;
        const Tri t = box_meets_slab(sigma, lo, hi, 4 * gamma * static_cast<double>(side), &w);
        if (t == Tri::no) continue;
        any = true;
        ++rep.fallbacks;
        if (t == Tri::yes) {
          y = w;
          rep.notes.push_back("cluster at " + describe(P.anchor) + ": no lattice point in the slab, used " + describe(w));
        } else {
          y = 0.5 * (lo + hi);
          rep.notes.push_back("cluster at " + describe(P.anchor) + ": slab contact undecided, used the cube centre");
        }
        break;
      }
      if (!any) continue;
    }
    rep.points.push_back(sigma.project(y));
  }
  sigma.set_z(i, rep.points);

  if (auto bad = sigma.separation_violation()) throw BarrierError("separation", i, *bad);
  require_slab_clear(sigma, h, i, 4.0, "slab-goodness", i);
  return rep;
}

PinchConstruction construct_pinch(const Direction& u, double lambda, double gamma, const CubeHierarchy& h, int k) {
  if (k < 0) throw ParameterError("construct_pinch: negative level");
  if (h.levels() < k + 1) throw ParameterError("construct_pinch: hierarchy lacks level k+1");
  PinchConstruction out{Pinch(u, lambda, gamma, h.schedule(), k), {}};
  require_slab_clear(out.pinch, h, k + 1, 1.0, "precondition", k + 1);
  for (int i = k; i >= 1; --i) out.steps.push_back(extend_pinch(out.pinch, i, h));
  for (int i = 1; i <= k; ++i) require_slab_clear(out.pinch, h, i, 3.0, "final-slab", i);
  return out;
}

bool Cover::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

bool Cover::contains(const IVec& x) const {
  if (!in_box(box_lo, box_hi, x)) return false;
  const std::uint64_t idx = raster_index(box_lo, box_hi, x);
  return (raster[idx >> 6] >> (idx & 63)) & 1U;
}

std::string Cover::to_json() const {
  json j;
  j["level"] = level;
  j["anchor"] = anchor;
  j["members"] = cluster.members;
  json ranges = json::array();
  for (const PinchConstruction& pc : constructions) {
    const Pinch& p = pc.pinch;
    json r;
    r["u"] = p.direction().rational ? json(*p.direction().rational) : json(p.u());
    r["lambda"] = p.lambda();
    r["k"] = p.k();
    json z = json::array();
    for (int i = 1; i <= p.k(); ++i) z.push_back(p.z(i));
    r["Z"] = z;
    int fallbacks = 0;
    for (const auto& st : pc.steps) fallbacks += st.fallbacks;
    r["fallbacks"] = fallbacks;
    ranges.push_back(r);
  }
  j["ranges"] = ranges;
  json checks_j = json::array();
  for (const Check& c : checks) checks_j.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["checks"] = checks_j;
  j["clearance_cubes"] = clearance.size();
  j["lattice_sites"] = raster_count;
  return j.dump();
}

Cover build_cover(const BadCluster& q, const Configuration& a, const CubeHierarchy& h,
                  const StabilityCertificate& cert) {
  const int k = q.level;
  if (!q.meets_good_parent)
    throw BarrierError("precondition", k, "cluster at " + describe(q.anchor) + " touches no good parent cube");
  if (q.touches_indeterminate)
    throw BarrierError("precondition", k, "cluster at " + describe(q.anchor) + " touches an indeterminate cube");
  const ScaleSchedule& s = h.schedule();
  const int d = s.d;
  if (cert.dim != d) throw ParameterError("build_cover: certificate dimension differs");
  const double gamma = cert.gamma;
  const double dk = static_cast<double>(s.delta(k));

  Cover cov;
  cov.level = k;
  cov.cluster = q;
  cov.anchor = q.anchor;
  const Vec xq = to_real(q.anchor);

  // A' = A within 2 gamma Delta_k of x_Q, reclassified on its own
  const double ball = 2 * gamma * dk;
  const std::int64_t reach = static_cast<std::int64_t>(std::ceil(ball));
  IVec lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = q.anchor[i] - reach;
    hi[i] = q.anchor[i] + reach + 1;
  }
  Configuration restricted{LatticeWindow(lo, hi)};
  bool truncated = false;
  for_each_index(lo, hi, [&](const IVec& x) {
    if (dot(to_real(x) - xq, to_real(x) - xq) > ball * ball) return;
    if (!a.window().contains(x)) {
      truncated = true;
      return;
    }
    if (a.infected(x)) restricted.infect(x);
  });
  const CubeHierarchy local = classify(restricted, s, Outside::empty);

  for (const Direction& u : cert.directions) {
    const double lambda = dot(xq, u.u) + 3.0 * d * dk;
    cov.constructions.push_back(construct_pinch(u, lambda, gamma, local, k - 1));
    cov.region.ranges.push_back(cov.constructions.back().pinch);
  }
  if (truncated && h.outside() == Outside::unknown)
    cov.checks.push_back({"restriction", false, "the 2 gamma Delta_k ball leaves the window, A' is incomplete"});

  // nesting chain Q in x_Q + 3T~ in T in x_Q + 4T~ in B_{gamma Delta_k}
  {
    Check c{"nesting", true, ""};
    double worst_corner = -kInf, worst_bump = 0.0;
    for (const PinchConstruction& pc : cov.constructions) {
      const Pinch& p = pc.pinch;
      for (const IVec& m : q.members) {
        const auto [clo, chi] = cube_box(s.delta(k), m);
        double top = 0.0;
        for (int i = 0; i < d; ++i) top += std::max((clo[i] - xq[i]) * p.u()[i], (chi[i] - xq[i]) * p.u()[i]);
        worst_corner = std::max(worst_corner, top);
      }
      double bump = 0.0;
      for (int i = 1; i <= p.k(); ++i)
        if (!p.z(i).empty()) bump += p.amplitude(i);
      worst_bump = std::max(worst_bump, bump);
    }
    std::ostringstream os;
    if (worst_corner > 3.0 * d * dk) {
      c.passed = false;
      os << "cluster reaches " << worst_corner << " > 3 d Delta_k = " << 3.0 * d * dk << "; ";
    }
    if (worst_bump > d * dk) {
      c.passed = false;
      os << "bump height " << worst_bump << " > d Delta_k = " << d * dk << "; ";
    }
    const double need = compute_gamma(cert);
    if (need > gamma * (1 + 1e-9)) {
      c.passed = false;
      os << "certificate gamma " << gamma << " below the polytope radius " << need << "; ";
    }
    c.detail = c.passed ? "holds" : os.str();
    cov.checks.push_back(c);
  }

  // rasterise T over a box that provably contains it
  {
    double reach_t = 0.0;
    for (const PinchConstruction& pc : cov.constructions) {
      double top = 3.0 * d * dk;
      for (int i = 1; i <= pc.pinch.k(); ++i)
        if (!pc.pinch.z(i).empty()) top += pc.pinch.amplitude(i);
      reach_t = std::max(reach_t, top);
    }
    const std::int64_t r = static_cast<std::int64_t>(std::ceil(reach_t / cert.r_cov)) + 1;
    cov.box_lo.resize(d);
    cov.box_hi.resize(d);
    std::uint64_t vol = 1;
    for (int i = 0; i < d; ++i) {
      cov.box_lo[i] = q.anchor[i] - r;
      cov.box_hi[i] = q.anchor[i] + r + 1;
      vol *= static_cast<std::uint64_t>(2 * r + 1);
    }
    if (vol > (std::uint64_t{1} << 34)) throw BarrierError("raster", k, "cover bounding box too large to rasterise");
    cov.raster.assign((vol + 63) / 64, 0);
    std::uint64_t idx = 0;
    double far = 0.0;
    IVec far_site;
    for_each_index(cov.box_lo, cov.box_hi, [&](const IVec& x) {
      if (cov.region.contains(x)) {
        cov.raster[idx >> 6] |= std::uint64_t{1} << (idx & 63);
        ++cov.raster_count;
        const double dist = distance(to_real(x), xq);
        if (dist > far) {
          far = dist;
          far_site = x;
        }
      }
      ++idx;
    });

    Check c{"containment", true, ""};
    std::ostringstream os;
    for (const IVec& m : q.members) {
      const auto [clo, chi] = cube_box(s.delta(k), m);
      const NeighbourhoodProbe pr = probe_neighbourhood(cov.region, clo, chi, 0.0);
      if (pr.meets_outside || pr.unresolved) {
        c.passed = false;
        os << "cube " << describe(m) << (pr.meets_outside ? " has a point outside T at " + describe(pr.outside_witness)
                                                         : " could not be shown inside T")
           << "; ";
      }
    }
    if (far > gamma * dk) {
      c.passed = false;
      os << "lattice site " << describe(far_site) << " of T is " << far << " from x_Q > gamma Delta_k = " << gamma * dk
         << "; ";
    }
    c.detail = c.passed ? "Q in T, T_Z within " + std::to_string(far) + " of x_Q" : os.str();
    cov.checks.push_back(c);
  }

  // clearance: bad (i)-cubes keep 2 gamma Delta_i away from the boundary
  {
    Check c{"clearance", true, ""};
    std::ostringstream os;
    int failures = 0;
    for (int i = 1; i <= k; ++i) {
      const double di = static_cast<double>(s.delta(i));
      const double rho = 2 * gamma * di;
      for (const auto& [cube, st] : non_good(h, i)) {
        if (i == k && std::binary_search(q.members.begin(), q.members.end(), cube)) continue;
        const auto [clo, chi] = cube_box(s.delta(i), cube);
        if (point_box_distance(xq, clo, chi) > gamma * dk + rho) continue;
        Clearance cl;
        cl.level = i;
        cl.cube = cube;
        if (st == CubeState::indeterminate) {
          cl.unresolved = true;
        } else {
          const NeighbourhoodProbe pr = probe_neighbourhood(cov.region, clo, chi, rho);
          cl.crosses = pr.crosses_boundary();
          cl.unresolved = pr.unresolved && !cl.crosses;
          cl.witness_inside = pr.inside_witness;
          cl.witness_outside = pr.outside_witness;
        }
        if (cl.crosses || cl.unresolved) {
          c.passed = false;
          if (failures++ < 3)
            os << to_string(st) << " (" << i << ")-cube " << describe(cube)
               << (cl.crosses ? " lies within 2 gamma Delta_i of the boundary" : " could not be resolved") << "; ";
        }
        cov.clearance.push_back(std::move(cl));
      }
    }
    if (failures > 3) os << failures << " cubes in all";
    c.detail = c.passed ? std::to_string(cov.clearance.size()) + " nearby cubes clear" : os.str();
    cov.checks.push_back(c);
  }
  return cov;
}

std::vector<ClosureViolation> verify_cover_closed(const Cover& cover, const LatticeWindow& window,
                                                  const UpdateFamily& family) {
  if (family.dim() != window.dim()) throw ParameterError("verify_cover_closed: dimension mismatch");
  const std::int64_t r = family.radius_ceil();
  IVec lo = window.lower(), hi = window.upper();
  for (auto& v : lo) v -= r;
  for (auto& v : hi) v += r;
  const LatticeWindow big(lo, hi);
  Configuration inside(big);
  for (std::uint64_t i = 0; i < big.volume(); ++i)
    if (cover.region.contains(big.site(i))) inside.infect(i);
  std::vector<ClosureViolation> out;
  closedness_scan(inside, window, family, out);
  return out;
}

const char* to_string(PairRelation r) {
  switch (r) {
    case PairRelation::nested: return "nested";
    case PairRelation::strongly_disjoint: return "strongly_disjoint";
    case PairRelation::violation: return "violation";
  }
  return "?";
}

PairCheck check_pairwise(const Cover& a, const Cover& b, double rule_radius) {
  PairCheck out;
  const Cover& small = a.raster_count <= b.raster_count ? a : b;
  const Cover& large = a.raster_count <= b.raster_count ? b : a;
  bool inside = true, touching = false;
  IVec shared;
  for_each_raster_site(small, [&](const IVec& x) {
    if (large.contains(x)) {
      if (!touching) shared = x;
      touching = true;
    } else {
      inside = false;
    }
  });
  if (inside) {
    out.relation = PairRelation::nested;
    return out;
  }
  if (touching) {
    out.witness_a = out.witness_b = shared;
    return out;
  }
  // lattice set distance, exact up to 2R
  const std::int64_t r = static_cast<std::int64_t>(std::floor(2 * rule_radius));
  const double limit2 = 4 * rule_radius * rule_radius;
  double best2 = kInf;
  for_each_raster_site(small, [&](const IVec& x) {
    IVec lo(x), hi(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      lo[i] -= r;
      hi[i] += r + 1;
    }
    for_each_index(lo, hi, [&](const IVec& y) {
      double d2 = 0;
      for (std::size_t i = 0; i < x.size(); ++i) d2 += static_cast<double>((x[i] - y[i]) * (x[i] - y[i]));
      if (d2 <= limit2 && d2 < best2 && large.contains(y)) {
        best2 = d2;
        out.witness_a = x;
        out.witness_b = y;
      }
    });
  });
  if (best2 <= limit2) {
    out.distance = std::sqrt(best2);
    return out;
  }
  out.relation = PairRelation::strongly_disjoint;
  // outside 2R the raster boxes give a lower bound
  out.distance = std::max(2 * rule_radius, box_distance(to_real(small.box_lo), to_real(small.box_hi),
                                                        to_real(large.box_lo), to_real(large.box_hi)));
  return out;
}

bool GlobalCover::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string GlobalCover::to_json() const {
  json j;
  json cs = json::array();
  for (const Cover& c : covers) cs.push_back(json::parse(c.to_json()));
  j["covers"] = cs;
  auto checks_json = [](const std::vector<Check>& v) {
    json arr = json::array();
    for (const Check& c : v) arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return arr;
  };
  j["checks"] = checks_json(checks);
  j["side_conditions"] = checks_json(side_conditions);
  j["failed_covers"] = failed_covers;
  j["window"] = {{"lower", verify_window.lower()}, {"upper", verify_window.upper()}};
  j["region_sites"] = region.count();
  std::vector<IVec> shown(uncovered.begin(), uncovered.begin() + std::min<std::size_t>(uncovered.size(), 100));
  j["uncovered"] = shown;
  j["uncovered_count"] = uncovered_count;
  j["origin_in_region"] = origin_in_region;
  j["ok"] = ok();
  return j.dump(2);
}

std::string GlobalCover::report() const {
  std::ostringstream os;
  for (const Check& c : checks) os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  for (const Check& c : side_conditions)
    os << (c.passed ? "holds  " : "fails  ") << c.name << ": " << c.detail << "\n";
  return os.str();
}

GlobalCover build_global_cover(const Configuration& a, const ScaleSchedule& s, const StabilityCertificate& cert,
                               const UpdateFamily& family, Outside outside) {
  const int d = s.d;
  if (a.dim() != d || family.dim() != d || cert.dim != d)
    throw ParameterError("build_global_cover: dimension mismatch");
  const double gamma = cert.gamma;
  const double R = family.radius();
  GlobalCover g;

  // constant-chain inequalities of the asymptotic argument
  {
    auto side = [&](std::string name, double lhs, double rhs, bool strict = false) {
      std::ostringstream os;
      os << lhs << (strict ? " < " : " <= ") << rhs;
      g.side_conditions.push_back({std::move(name), strict ? lhs < rhs : lhs <= rhs, os.str()});
    };
    for (const SideCondition& sc : s.side_conditions) {
      std::ostringstream os;
      os << sc.lhs << " <= " << sc.rhs;
      g.side_conditions.push_back({sc.name + " at level " + std::to_string(sc.level), sc.holds, os.str()});
    }
    const double slope = 1024 * gamma * std::pow(static_cast<double>(s.delta(1)), 1 - s.beta);
    side("2^10 gamma Delta_1^(1-beta) <= 1/2", slope, 0.5);
    side("2^10 gamma Delta_1^(1-beta) <= sin(eps)/2", slope,
         std::sin(std::min(cert.epsilon, std::numbers::pi / 2)) / 2);
    for (int k = 1; k <= s.k_max; ++k) {
      const double dk = static_cast<double>(s.delta(k));
      const std::string lv = " at level " + std::to_string(k);
      side("(2^4+4) gamma Delta_k <= Delta_{k+1}" + lv, 20 * gamma * dk, static_cast<double>(s.delta(k + 1)));
      side("(3 gamma + 2 sqrt d) Delta_k <= g_k" + lv, (3 * gamma + 2 * std::sqrt(static_cast<double>(d))) * dk,
           s.gap(k));
      side("2R < g_k/2 - 2 gamma Delta_k" + lv, 2 * R, s.gap(k) / 2 - 2 * gamma * dk, true);
      if (k >= 2)
        side("2^5 gamma Delta_{k-1} < d Delta_k" + lv, 32 * gamma * static_cast<double>(s.delta(k - 1)), d * dk,
             true);
    }
  }

  const CubeHierarchy h = classify(a, s, outside);
  for (int k = 1; k <= s.k_max; ++k) {
    int idx = 0;
    for (const BadCluster& q : extract_clusters(h, k)) {
      try {
        g.covers.push_back(build_cover(q, a, h, cert));
      } catch (const BarrierError& e) {
        g.failed_covers.push_back("level " + std::to_string(k) + " cluster " + std::to_string(idx) + " at " +
                                  describe(q.anchor) + ": " + e.what());
      }
      ++idx;
    }
  }
  g.checks.push_back({"construction", g.failed_covers.empty(),
                      g.failed_covers.empty() ? std::to_string(g.covers.size()) + " covers built"
                                              : std::to_string(g.failed_covers.size()) + " failed; first: " +
                                                    g.failed_covers.front()});

  // per-cover checks, aggregated by name
  {
    std::map<std::string, std::pair<int, std::string>> agg;  // failures, first failure
    std::vector<std::string> order;
    for (std::size_t ci = 0; ci < g.covers.size(); ++ci)
      for (const Check& c : g.covers[ci].checks) {
        if (!agg.count(c.name)) order.push_back(c.name);
        auto& [fails, first] = agg[c.name];
        if (!c.passed && fails++ == 0)
          first = "cover " + std::to_string(ci) + " (level " + std::to_string(g.covers[ci].level) + "): " + c.detail;
      }
    for (const std::string& name : {std::string("nesting"), std::string("containment"), std::string("clearance")})
      if (!agg.count(name)) {
        order.push_back(name);
        agg[name] = {0, ""};
      }
    for (const std::string& name : order) {
      const auto& [fails, first] = agg[name];
      g.checks.push_back({name, fails == 0,
                          fails == 0 ? "all " + std::to_string(g.covers.size()) + " covers"
                                     : std::to_string(fails) + " covers fail; first: " + first});
    }
  }

  {
    int bad = 0;
    std::string first;
    for (std::size_t i = 0; i < g.covers.size(); ++i)
      for (std::size_t j = i + 1; j < g.covers.size(); ++j) {
        const PairCheck pc = check_pairwise(g.covers[i], g.covers[j], R);
        if (pc.relation == PairRelation::violation && bad++ == 0)
          first = "covers " + std::to_string(i) + " and " + std::to_string(j) + " neither nested nor 2R apart, e.g. " +
                  describe(pc.witness_a) + " and " + describe(pc.witness_b);
      }
    g.checks.push_back({"pairwise", bad == 0, bad == 0 ? "nested or strongly disjoint" : std::to_string(bad) +
                                                                                            " pairs fail; first: " +
                                                                                            first});
  }

  // rasterised union over the widened window
  const std::int64_t margin = static_cast<std::int64_t>(std::ceil(gamma * static_cast<double>(s.delta(s.k_max)))) +
                              family.radius_ceil() + 1;
  IVec lo = a.window().lower(), hi = a.window().upper();
  for (int i = 0; i < d; ++i) {
    lo[i] -= margin;
    hi[i] += margin;
  }
  g.verify_window = LatticeWindow(lo, hi);
  g.region = Configuration(g.verify_window);
  for (const Cover& c : g.covers)
    for_each_raster_site(c, [&](const IVec& x) {
      if (g.verify_window.contains(x)) g.region.infect(x);
    });

  {
    const Configuration next = step(g.region, family);
    Check c{"closedness", next == g.region, ""};
    if (c.passed) {
      c.detail = std::to_string(g.region.count()) + " sites, no exterior site fires";
    } else {
      std::int64_t n = 0;
      IVec first;
      for (std::uint64_t i = 0; i < g.verify_window.volume(); ++i)
        if (next.infected(i) && !g.region.infected(i) && n++ == 0) first = g.verify_window.site(i);
      c.detail = std::to_string(n) + " exterior sites fire, first " + describe(first);
    }
    g.checks.push_back(c);
  }

  {
    Configuration seed(g.verify_window), covered(g.verify_window);
    for (const IVec& x : a.sites()) {
      seed.infect(x);
      if (g.region.infected(x)) {
        covered.infect(x);
      } else {
        ++g.uncovered_count;
        g.uncovered.push_back(x);
      }
    }
    const bool inner = closure(covered, family).subset_of(g.region);
    const bool full = closure(seed, family).subset_of(g.region);
    g.checks.push_back({"closure-oracle", inner,
                        std::string("[A in T] ") + (inner ? "inside" : "escapes") + " T; [A] " +
                            (full ? "inside" : "not inside") + " T; " + std::to_string(g.uncovered_count) +
                            " sites of A uncovered"});
  }

  {
    const IVec origin(d, 0);
    g.origin_in_region = g.verify_window.contains(origin) && g.region.infected(origin);
    bool applies = true;
    for (int k = 1; k <= s.k_max && applies; ++k) {
      const double reach = 2 * gamma * static_cast<double>(s.delta(k));
      for (CubeState st : {CubeState::bad, CubeState::indeterminate})
        for (const IVec& c : h.cubes(k, st)) {
          const auto [clo, chi] = cube_box(s.delta(k), c);
          if (point_box_distance(Vec(d, 0.0), clo, chi) <= reach) applies = false;
        }
    }
    if (applies)
      g.checks.push_back({"origin", !g.origin_in_region, g.origin_in_region ? "origin inside T" : "origin outside T"});
    else
      g.checks.push_back({"origin", true, std::string("not asserted, a non-good cube lies near the origin; origin ") +
                                              (g.origin_in_region ? "inside" : "outside") + " T"});
  }
  return g;
}

}  // namespace bootperc
