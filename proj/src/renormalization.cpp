#include "bootperc/renormalization.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "bootperc/rng.hpp"

namespace bootperc {

using nlohmann::json;

std::int64_t ScaleSchedule::delta(int k) const {
  if (k < 1 || k > levels()) throw ParameterError("schedule level " + std::to_string(k) + " out of range");
  return deltas[k - 1];
}

double ScaleSchedule::gap(int k) const {
  if (k < 1 || k > levels()) throw ParameterError("schedule level " + std::to_string(k) + " out of range");
  return gaps[k - 1];
}

std::string ScaleSchedule::to_json() const {
  json j;
  j["d"] = d;
  j["beta"] = beta;
  j["k_max"] = k_max;
  j["delta"] = deltas;
  j["g"] = gaps;
  return j.dump();
}

std::uint64_t ScaleSchedule::hash() const { return fnv1a(to_json()); }

ScaleSchedule build_schedule(int d, double p, double beta, int k_max, std::optional<std::int64_t> delta1_override) {
  if (d < 1) throw ParameterError("schedule: d must be positive");
  if (!(beta > 1.0 && beta < 1.5)) throw ParameterError("schedule: beta must lie in (1, 3/2)");
  if (k_max < 1) throw ParameterError("schedule: k_max must be at least 1");
  ScaleSchedule s;
  s.d = d;
  s.p = p;
  s.beta = beta;
  s.k_max = k_max;
  std::int64_t delta1 = 0;
  if (delta1_override) {
    delta1 = *delta1_override;
  } else {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("schedule: p must lie in (0, 1)");
    const double v = std::pow(p, -1.0 / (3.0 * d + 2.0));
    const double r = std::round(v);
    // pow rounds 10 to 9.999999999; snap values that are integers up to noise
    delta1 = static_cast<std::int64_t>(std::abs(v - r) <= 1e-9 * v ? r : std::floor(v));
  }
  if (delta1 < 2) throw ParameterError("schedule: Delta_1 must be at least 2, got " + std::to_string(delta1));
  s.deltas.push_back(delta1);
  for (int k = 1; k <= k_max; ++k) {
    const std::int64_t prev = s.deltas.back();
    const std::int64_t root = isqrt(prev);
    if (prev > std::numeric_limits<std::int64_t>::max() / root) throw ParameterError("schedule: scales overflow");
    s.deltas.push_back(root * prev);
  }
  for (auto delta : s.deltas) s.gaps.push_back(std::pow(static_cast<double>(delta), beta));
  for (int k = 2; k <= s.levels(); ++k) {
    SideCondition c;
    c.name = "3 g_{k-1} < Delta_k / 3";
    c.level = k;
    c.lhs = 3 * s.gaps[k - 2];
    c.rhs = static_cast<double>(s.deltas[k - 1]) / 3.0;
    c.holds = c.lhs < c.rhs;
    s.side_conditions.push_back(c);
  }
  return s;
}

double influence_radius(const ScaleSchedule& s, int k) {
  if (k < 1) throw ParameterError("influence_radius: k must be at least 1");
  double r = 0.0;
  for (int i = 1; i < k; ++i) r += s.gap(i) + std::sqrt(static_cast<double>(s.d)) * static_cast<double>(s.delta(i));
  return r;
}

const char* to_string(CubeState s) {
  switch (s) {
    case CubeState::good: return "good";
    case CubeState::bad: return "bad";
    case CubeState::indeterminate: return "indeterminate";
  }
  return "?";
}

std::pair<Vec, Vec> cube_box(std::int64_t side, const IVec& c) {
  Vec lo(c.size()), hi(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    lo[i] = static_cast<double>(c[i] * side);
    hi[i] = static_cast<double>((c[i] + 1) * side);
  }
  return {lo, hi};
}

bool cubes_adjacent(const IVec& a, const IVec& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] > 1 || b[i] - a[i] > 1) return false;
  return true;
}

std::int64_t cube_distance2(std::int64_t sa, const IVec& a, std::int64_t sb, const IVec& b) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int64_t gap = std::max({std::int64_t{0}, b[i] * sb - (a[i] + 1) * sa, a[i] * sa - (b[i] + 1) * sb});
    s += gap * gap;
  }
  return s;
}

bool CubeLevel::in_range(const IVec& c) const {
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] < lo[i] || c[i] >= hi[i]) return false;
  return true;
}

std::uint64_t CubeLevel::flat(const IVec& c) const {
  std::uint64_t f = 0;
  for (std::size_t i = 0; i < c.size(); ++i) f = f * static_cast<std::uint64_t>(hi[i] - lo[i]) + (c[i] - lo[i]);
  return f;
}

IVec CubeLevel::cube_at(std::uint64_t f) const {
  IVec c(lo.size());
  for (std::size_t i = lo.size(); i-- > 0;) {
    const auto e = static_cast<std::uint64_t>(hi[i] - lo[i]);
    c[i] = lo[i] + static_cast<std::int64_t>(f % e);
    f /= e;
  }
  return c;
}

const CubeLevel& CubeHierarchy::level(int k) const {
  if (k < 1 || k > levels()) throw ParameterError("hierarchy level " + std::to_string(k) + " out of range");
  return levels_[k - 1];
}

CubeState CubeHierarchy::state(int k, const IVec& c) const {
  const CubeLevel& l = level(k);
  if (!l.in_range(c)) return outside_ == Outside::empty ? CubeState::good : CubeState::indeterminate;
  return l.states[l.flat(c)];
}

std::optional<std::pair<IVec, IVec>> CubeHierarchy::witness(int k, const IVec& c) const {
  const CubeLevel& l = level(k);
  if (!l.in_range(c)) return std::nullopt;
  auto it = l.witnesses.find(l.flat(c));
  if (it == l.witnesses.end()) return std::nullopt;
  return it->second;
}

IVec CubeHierarchy::cube_of(int k, const IVec& x) const {
  const std::int64_t side = schedule_.delta(k);
  IVec c(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c[i] = floor_div(x[i], side);
  return c;
}

std::vector<IVec> CubeHierarchy::cubes(int k, CubeState s) const {
  const CubeLevel& l = level(k);
  std::vector<IVec> out;
  for (std::uint64_t f = 0; f < l.states.size(); ++f)
    if (l.states[f] == s) out.push_back(l.cube_at(f));
  return out;
}

std::int64_t CubeHierarchy::count(int k, CubeState s) const {
  const CubeLevel& l = level(k);
  return std::count(l.states.begin(), l.states.end(), s);
}

namespace {

// Index range of (lower-side) cubes whose closed box lies within `reach` of
// the closed cube c of side `side`, padded by one.
std::pair<IVec, IVec> candidate_range(const IVec& c, std::int64_t side, std::int64_t lower_side, double reach) {
  const auto r = static_cast<std::int64_t>(std::ceil(reach));
  IVec lo(c.size()), hi(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    lo[i] = floor_div(c[i] * side - r, lower_side) - 1;
    hi[i] = floor_div((c[i] + 1) * side + r, lower_side) + 2;
  }
  return {lo, hi};
}

bool within(std::int64_t dist2, double g) { return static_cast<double>(dist2) <= g * g * (1 + 1e-12); }

}  // namespace

CubeHierarchy classify(const Configuration& a, const ScaleSchedule& s, Outside outside) {
  const LatticeWindow& w = a.window();
  const int d = w.dim();
  if (s.d != d) throw ParameterError("classify: schedule and configuration dimensions differ");
  std::vector<CubeLevel> levels;
  const std::vector<IVec> sites = a.sites();

  for (int k = 1; k <= s.levels(); ++k) {
    CubeLevel L;
    L.k = k;
    L.side = s.delta(k);
    const std::int64_t margin =
        outside == Outside::empty ? static_cast<std::int64_t>(std::ceil(influence_radius(s, k))) + 1 : 0;
    L.lo.resize(d);
    L.hi.resize(d);
    std::uint64_t volume = 1;
    for (int i = 0; i < d; ++i) {
      L.lo[i] = floor_div(w.lower()[i] - margin, L.side);
      L.hi[i] = floor_div(w.upper()[i] - 1 + margin, L.side) + 1;
      volume *= static_cast<std::uint64_t>(L.hi[i] - L.lo[i]);
      if (volume > (std::uint64_t{1} << 32)) throw ParameterError("classify: too many cubes at level " + std::to_string(k));
    }
    L.states.assign(volume, CubeState::good);

    if (k == 1) {
      if (outside == Outside::unknown) {
        for (std::uint64_t f = 0; f < volume; ++f) {
          const IVec c = L.cube_at(f);
          for (int i = 0; i < d; ++i)
            if (c[i] * L.side < w.lower()[i] || (c[i] + 1) * L.side > w.upper()[i]) {
              L.states[f] = CubeState::indeterminate;
              break;
            }
        }
      }
      for (const IVec& x : sites) {
        IVec c(d);
        for (int i = 0; i < d; ++i) c[i] = floor_div(x[i], L.side);
        L.states[L.flat(c)] = CubeState::bad;
      }
    } else {
      const CubeLevel& P = levels.back();
      const double g = s.gap(k - 1);
      auto lower_state = [&](const IVec& c) {
        if (!P.in_range(c)) return outside == Outside::empty ? CubeState::good : CubeState::indeterminate;
        return P.states[P.flat(c)];
      };
      std::vector<IVec> bad;
      for (std::uint64_t f = 0; f < volume; ++f) {
        const IVec c = L.cube_at(f);
        auto [lo, hi] = candidate_range(c, L.side, P.side, g);
        bad.clear();
        bool unknown = false;
        for_each_index(lo, hi, [&](const IVec& q) {
          if (!within(cube_distance2(L.side, c, P.side, q), g)) return;
          const CubeState st = lower_state(q);
          if (st == CubeState::bad) bad.push_back(q);
          if (st == CubeState::indeterminate) unknown = true;
        });
        bool found = false;
        for (std::size_t x = 0; x < bad.size() && !found; ++x)
          for (std::size_t y = x + 1; y < bad.size(); ++y)
            if (!cubes_adjacent(bad[x], bad[y])) {
              L.states[f] = CubeState::bad;
              L.witnesses.emplace(f, std::make_pair(bad[x], bad[y]));
              found = true;
              break;
            }
        if (!found && unknown) L.states[f] = CubeState::indeterminate;
      }
    }
    levels.push_back(std::move(L));
  }
  return CubeHierarchy(s, outside, std::move(levels));
}

std::vector<BadCluster> all_clusters(const CubeHierarchy& h, int k) {
  if (k >= h.levels()) throw ParameterError("clusters at level k need level k+1 classified");
  const int d = h.schedule().d;
  const std::vector<IVec> bad = h.cubes(k, CubeState::bad);
  const IVec zero(d, 0), two(d, 2), minus1(d, -1), plus2(d, 2);

  std::set<std::vector<IVec>> blocks;
  for (const IVec& c : bad)
    for_each_index(zero, two, [&](const IVec& shift) {
      std::vector<IVec> members;
      for_each_index(zero, two, [&](const IVec& t) {
        IVec q(d);
        for (int i = 0; i < d; ++i) q[i] = c[i] - shift[i] + t[i];
        if (h.state(k, q) == CubeState::bad) members.push_back(q);
      });
      blocks.insert(members);
    });

  std::map<IVec, std::vector<const std::vector<IVec>*>> by_member;
  for (const auto& b : blocks)
    for (const IVec& m : b) by_member[m].push_back(&b);

  const std::int64_t side = h.schedule().delta(k);
  const std::int64_t parent_side = h.schedule().delta(k + 1);
  std::vector<BadCluster> out;
  for (const auto& b : blocks) {
    bool dominated = false;
    for (const auto* other : by_member[b.front()])
      if (other->size() > b.size() && std::includes(other->begin(), other->end(), b.begin(), b.end())) {
        dominated = true;
        break;
      }
    if (dominated) continue;
    BadCluster q;
    q.level = k;
    q.members = b;
    q.anchor = b.front();
    for (auto& x : q.anchor) x *= side;
    for (const IVec& m : b) {
      IVec lo(d), hi(d);
      for (int i = 0; i < d; ++i) {
        lo[i] = m[i] - 1;
        hi[i] = m[i] + 2;
      }
      for_each_index(lo, hi, [&](const IVec& n) {
        if (h.state(k, n) == CubeState::indeterminate) q.touches_indeterminate = true;
      });
      for (int i = 0; i < d; ++i) {
        lo[i] = floor_div(m[i] * side + parent_side - 1, parent_side) - 1;
        hi[i] = floor_div((m[i] + 1) * side, parent_side) + 1;
      }
      for_each_index(lo, hi, [&](const IVec& parent) {
        if (h.state(k + 1, parent) == CubeState::good) q.meets_good_parent = true;
      });
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<BadCluster> extract_clusters(const CubeHierarchy& h, int k) {
  std::vector<BadCluster> out;
  for (auto& q : all_clusters(h, k))
    if (q.meets_good_parent && !q.touches_indeterminate) out.push_back(std::move(q));
  return out;
}

Configuration sample_bernoulli(const LatticeWindow& w, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("p must lie in [0, 1]");
  Configuration c(w);
  const std::uint64_t n = w.volume();
  if (p == 0.0) return c;
  if (p == 1.0) {
    for (std::uint64_t i = 0; i < n; ++i) c.infect(i);
    return c;
  }
  Xoshiro256 rng(seed);
  const double log_q = std::log1p(-p);
  std::uint64_t i = 0;
  for (;;) {
    const double skip = std::floor(std::log(1.0 - rng.uniform()) / log_q);
    if (skip >= static_cast<double>(n - i)) break;
    i += static_cast<std::uint64_t>(skip);
    c.infect(i);
    if (++i >= n) break;
  }
  return c;
}

namespace {

// Lattice box holding every site that can influence the (k)-cube c.
std::pair<IVec, IVec> influence_box(const ScaleSchedule& s, int k, const IVec& c) {
  const auto r = static_cast<std::int64_t>(std::ceil(influence_radius(s, k)));
  const std::int64_t side = s.delta(k);
  IVec lo(c.size()), hi(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    lo[i] = c[i] * side - r - 1;
    hi[i] = (c[i] + 1) * side + r + 1;
  }
  return {lo, hi};
}

}  // namespace

LatticeWindow mc_window(const ScaleSchedule& s, int k) {
  auto [lo, hi] = influence_box(s, k, IVec(s.d, 0));
  return LatticeWindow(lo, hi);
}

BadProbability mc_bad_probability(const ScaleSchedule& s, int k, double p, std::int64_t trials, std::uint64_t seed,
                                  int workers) {
  if (trials < 1) throw ParameterError("trials must be at least 1");
  if (k < 1 || k > s.levels()) throw ParameterError("level out of range");
  const LatticeWindow w = mc_window(s, k);
  const IVec origin(s.d, 0);
  const auto outcomes = run_indexed<int>(trials, workers, [&](std::int64_t t) {
    const Configuration a = sample_bernoulli(w, p, stream_seed(seed, static_cast<std::uint64_t>(t)));
    const CubeState st = classify(a, s, Outside::unknown).state(k, origin);
    if (st == CubeState::indeterminate) throw std::logic_error("mc window too small for the probed cube");
    return st == CubeState::bad ? 1 : 0;
  });
  BadProbability r;
  r.trials = trials;
  for (int o : outcomes) r.bad += o;
  r.estimate = static_cast<double>(r.bad) / static_cast<double>(trials);
  r.interval = wilson_interval(r.bad, trials);
  r.decay_bound = std::pow(static_cast<double>(s.delta(k)), -(2.0 * s.d + 2.0));
  r.exact_level1 = -std::expm1(std::pow(static_cast<double>(s.delta(1)), s.d) * std::log1p(-p));
  return r;
}

IndependenceReport independence_check(const ScaleSchedule& s, int k, const IVec& first, const IVec& second, double p,
                                       std::int64_t trials, std::uint64_t seed, int workers) {
  if (trials < 2) throw ParameterError("independence_check needs at least 2 trials");
  auto [alo, ahi] = influence_box(s, k, first);
  auto [blo, bhi] = influence_box(s, k, second);
  IVec lo(s.d), hi(s.d);
  bool disjoint = false;
  for (int i = 0; i < s.d; ++i) {
    lo[i] = std::min(alo[i], blo[i]);
    hi[i] = std::max(ahi[i], bhi[i]);
    if (ahi[i] <= blo[i] || bhi[i] <= alo[i]) disjoint = true;
  }
  const LatticeWindow w(lo, hi);
  const auto outcomes = run_indexed<std::pair<int, int>>(trials, workers, [&](std::int64_t t) {
    const Configuration a = sample_bernoulli(w, p, stream_seed(seed, static_cast<std::uint64_t>(t)));
    const CubeHierarchy h = classify(a, s, Outside::unknown);
    const CubeState x = h.state(k, first), y = h.state(k, second);
    if (x == CubeState::indeterminate || y == CubeState::indeterminate)
      throw std::logic_error("independence window too small");
    return std::make_pair(x == CubeState::bad ? 1 : 0, y == CubeState::bad ? 1 : 0);
  });
  IndependenceReport r;
  r.trials = trials;
  r.regions_disjoint = disjoint;
  const double n = static_cast<double>(trials);
  double sx = 0, sy = 0, sxy = 0;
  for (auto [x, y] : outcomes) {
    sx += x;
    sy += y;
    sxy += x * y;
  }
  r.p_first = sx / n;
  r.p_second = sy / n;
  r.p_both = sxy / n;
  r.discrepancy = r.p_both - r.p_first * r.p_second;
  // influence function of the plug-in covariance
  double mean = 0, m2 = 0;
  std::int64_t i = 0;
  for (auto [x, y] : outcomes) {
    const double phi = (x - r.p_first) * (y - r.p_second);
    ++i;
    const double delta = phi - mean;
    mean += delta / static_cast<double>(i);
    m2 += delta * (phi - mean);
  }
  r.sigma = std::sqrt(m2 / (n - 1) / n);
  r.z = r.sigma > 0 ? r.discrepancy / r.sigma : (r.discrepancy == 0 ? 0.0 : std::numeric_limits<double>::infinity());
  return r;
}

}  // namespace bootperc
