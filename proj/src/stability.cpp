#include "bootperc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "bootperc/rng.hpp"

namespace bootperc {

using nlohmann::json;

namespace {

constexpr double kBand = 1e-9;
constexpr double kThinCoverage = 1e-6;

// Gaussian elimination with partial pivoting; false if (numerically) singular.
bool solve(std::vector<Vec> a, Vec b, Vec& x) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-12) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c][k] * x[k];
    x[c] = s / a[c][c];
  }
  return true;
}

// Unit vector orthogonal to d-1 vectors in R^d, via cofactor expansion.
std::optional<Vec> normal_of(const std::vector<Vec>& rows, int d) {
  Vec n(d, 0.0);
  for (int j = 0; j < d; ++j) {
    std::vector<Vec> minor;
    for (const Vec& r : rows) {
      Vec m;
      for (int c = 0; c < d; ++c)
        if (c != j) m.push_back(r[c]);
      minor.push_back(m);
    }
    // determinant by elimination
    double det = 1.0;
    const std::size_t m = minor.size();
    for (std::size_t c = 0; c < m; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < m; ++r)
        if (std::abs(minor[r][c]) > std::abs(minor[piv][c])) piv = r;
      if (std::abs(minor[piv][c]) < 1e-300) {
        det = 0.0;
        break;
      }
      if (piv != c) {
        std::swap(minor[c], minor[piv]);
        det = -det;
      }
      det *= minor[c][c];
      for (std::size_t r = c + 1; r < m; ++r) {
        const double f = minor[r][c] / minor[c][c];
        for (std::size_t k = c; k < m; ++k) minor[r][k] -= f * minor[c][k];
      }
    }
    n[j] = ((j % 2) ? -1.0 : 1.0) * det;
  }
  const double len = norm(n);
  if (len < 1e-10) return std::nullopt;
  return (1.0 / len) * n;
}

int rank_of(std::vector<Vec> rows, int d) {
  int rank = 0;
  for (int c = 0; c < d && rank < static_cast<int>(rows.size()); ++c) {
    std::size_t piv = rank;
    for (std::size_t r = rank; r < rows.size(); ++r)
      if (std::abs(rows[r][c]) > std::abs(rows[piv][c])) piv = r;
    if (std::abs(rows[piv][c]) < 1e-10) continue;
    std::swap(rows[rank], rows[piv]);
    for (std::size_t r = rank + 1; r < rows.size(); ++r) {
      const double f = rows[r][c] / rows[rank][c];
      for (int k = c; k < d; ++k) rows[r][k] -= f * rows[rank][k];
    }
    ++rank;
  }
  return rank;
}

// Calls fn(indices) for every m-subset of [0, n).
template <class F>
void for_subsets(std::size_t n, std::size_t m, F&& fn) {
  if (m > n) return;
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    if (!fn(idx)) return;
    std::size_t i = m;
    while (i > 0 && idx[i - 1] == n - m + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < m; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::vector<Vec> unit_vectors(const std::vector<Direction>& dirs) {
  std::vector<Vec> out;
  for (const auto& d : dirs) out.push_back(d.u);
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

}  // namespace

Direction Direction::from_rational(const IVec& v) {
  if (std::all_of(v.begin(), v.end(), [](std::int64_t x) { return x == 0; }))
    throw ParameterError("direction must be non-zero");
  Direction d;
  const double n = norm(v);
  for (auto x : v) d.u.push_back(static_cast<double>(x) / n);
  d.rational = v;
  return d;
}

Direction Direction::from_real(const Vec& v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw ParameterError("direction must be a finite non-zero vector");
  Direction d;
  d.u = (1.0 / n) * v;
  return d;
}

const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::uncertain: return "uncertain";
  }
  return "?";
}

Stability is_stable(const UpdateFamily& family, const Direction& u) {
  if (u.dim() != family.dim()) throw ParameterError("direction dimension does not match the family");
  bool uncertain = false;
  for (const Rule& rule : family.rules()) {
    if (u.rational) {
      if (std::all_of(rule.begin(), rule.end(), [&](const IVec& x) { return dot(x, *u.rational) < 0; }))
        return Stability::unstable;
      continue;
    }
    bool all_below = true, all_clear = true;
    for (const IVec& x : rule) {
      const double v = dot(to_real(x), u.u);
      if (v >= kBand) all_below = false;
      if (v > -kBand) all_clear = false;
    }
    if (all_clear) return Stability::unstable;
    if (all_below) uncertain = true;
  }
  return uncertain ? Stability::uncertain : Stability::stable;
}

bool is_stable_simulated(const UpdateFamily& family, const Direction& u, const LatticeWindow& window) {
  if (!u.rational) throw ParameterError("is_stable_simulated needs a rational direction");
  if (u.dim() != family.dim() || window.dim() != family.dim()) throw ParameterError("dimension mismatch");
  const std::int64_t r = family.radius_ceil();
  if (!window.contains(IVec(window.dim(), 0))) throw ParameterError("window must contain the origin");
  for (int i = 0; i < window.dim(); ++i)
    if (-window.lower()[i] < 2 * r || window.upper()[i] - 1 < 2 * r)
      throw ParameterError("window too small relative to the rule radius");

  const LatticeWindow w = window.with_policy(HalfSpaceBoundary{*u.rational, 0});
  Configuration c(w);
  for (std::uint64_t i = 0; i < w.volume(); ++i)
    if (dot(w.site(i), *u.rational) < 0) c.infect(i);
  const Configuration after = closure(c, family);
  return after == c;
}

double stability_margin(const UpdateFamily& family, const Direction& u) {
  double best = kInf;
  for (const Rule& rule : family.rules()) {
    double m = -kInf;
    for (const IVec& x : rule) m = std::max(m, dot(to_real(x), u.u) / norm(x));
    best = std::min(best, m);
  }
  return best;
}

double f_margin(const UpdateFamily& family, const Direction& u) {
  double best = kInf;
  for (const Rule& rule : family.rules())
    for (std::size_t a = 0; a < rule.size(); ++a)
      for (std::size_t b = a + 1; b < rule.size(); ++b) {
        const Vec diff = to_real(rule[a]) - to_real(rule[b]);
        best = std::min(best, std::abs(dot(diff, u.u)) / norm(diff));
      }
  return best;
}

double coverage_radius(const std::vector<Vec>& dirs) {
  if (dirs.empty()) return 0.0;
  const int d = static_cast<int>(dirs[0].size());
  if (d == 1) {
    bool pos = false, neg = false;
    double r = kInf;
    for (const Vec& v : dirs) {
      if (v[0] > 0) pos = true;
      if (v[0] < 0) neg = true;
      r = std::min(r, std::abs(v[0]));
    }
    return (pos && neg) ? r : 0.0;
  }
  if (d == 2) {
    std::vector<double> ang;
    for (const Vec& v : dirs) ang.push_back(std::atan2(v[1], v[0]));
    std::sort(ang.begin(), ang.end());
    double gap = ang.front() + 2 * std::numbers::pi - ang.back();
    for (std::size_t i = 1; i < ang.size(); ++i) gap = std::max(gap, ang[i] - ang[i - 1]);
    if (gap >= std::numbers::pi - 1e-12) return 0.0;
    return std::cos(gap / 2);
  }
  if (rank_of(dirs, d) < d) return 0.0;
  // A supporting hyperplane through the origin means the origin is on the
  // hull boundary or outside it.
  bool origin_exposed = false;
  for_subsets(dirs.size(), d - 1, [&](const std::vector<std::size_t>& idx) {
    std::vector<Vec> rows;
    for (auto i : idx) rows.push_back(dirs[i]);
    auto n = normal_of(rows, d);
    if (!n) return true;
    bool all_pos = true, all_neg = true;
    for (const Vec& v : dirs) {
      const double s = dot(*n, v);
      if (s < -1e-12) all_pos = false;
      if (s > 1e-12) all_neg = false;
    }
    if (all_pos || all_neg) {
      origin_exposed = true;
      return false;
    }
    return true;
  });
  if (origin_exposed) return 0.0;
  double r = kInf;
  for_subsets(dirs.size(), d, [&](const std::vector<std::size_t>& idx) {
    std::vector<Vec> rows;
    for (auto i : idx) rows.push_back(dirs[i]);
    Vec n;
    if (!solve(rows, Vec(d, 1.0), n)) return true;
    for (const Vec& v : dirs)
      if (dot(n, v) > 1.0 + 1e-9) return true;
    r = std::min(r, 1.0 / norm(n));
    return true;
  });
  return std::isfinite(r) ? r : 0.0;
}

double compute_gamma(const StabilityCertificate& cert) {
  if (cert.directions.empty() || !(cert.r_cov > 0.0)) throw ParameterError("compute_gamma: invalid certificate");
  if (cert.r_cov < kThinCoverage) throw ParameterError("coverage too thin");
  const int d = cert.dim;
  const double floor_value = 2 * std::sqrt(static_cast<double>(d)) + 2;
  const double level = 4.0 * d;
  const std::vector<Vec> dirs = unit_vectors(cert.directions);
  double radius = 0.0;
  if (d == 1) {
    radius = level / cert.r_cov;
  } else if (d <= 3) {
    for_subsets(dirs.size(), d, [&](const std::vector<std::size_t>& idx) {
      std::vector<Vec> rows;
      for (auto i : idx) rows.push_back(dirs[i]);
      Vec x;
      if (!solve(rows, Vec(d, level), x)) return true;
      for (const Vec& v : dirs)
        if (dot(x, v) > level * (1 + 1e-9)) return true;
      radius = std::max(radius, norm(x));
      return true;
    });
    // guard against rounding: never report below the containment bound of
    // the farthest vertex
    radius *= 1 + 1e-9;
  } else {
    radius = level / cert.r_cov;
  }
  return std::max(floor_value, radius);
}

CertifyResult certify_strongly_stable_set(const UpdateFamily& family, const std::vector<Direction>& candidates) {
  CertifyResult res;
  res.candidates_examined = static_cast<std::int64_t>(candidates.size());
  StabilityCertificate cert;
  cert.dim = family.dim();
  cert.family_hash = family.hash();
  if (family.empty()) {
    for (int i = 0; i < family.dim(); ++i)
      for (int s : {1, -1}) {
        IVec e(family.dim(), 0);
        e[i] = s;
        cert.directions.push_back(Direction::from_rational(e));
        cert.stability_margins.push_back(kInf);
        cert.f_margins.push_back(kInf);
      }
  } else {
    if (candidates.empty()) {
      res.reason = "no candidate strongly stable";
      return res;
    }
    for (const Direction& c : candidates) {
      if (c.dim() != family.dim()) throw ParameterError("candidate dimension does not match the family");
      if (!c.rational && is_stable(family, c) == Stability::uncertain) continue;
      const double ms = stability_margin(family, c);
      const double mf = f_margin(family, c);
      if (ms > 0 && mf > 0) {
        cert.directions.push_back(c);
        cert.stability_margins.push_back(ms);
        cert.f_margins.push_back(mf);
      }
    }
    if (cert.directions.empty()) {
      res.reason = "no candidate strongly stable";
      return res;
    }
  }
  cert.r_cov = coverage_radius(unit_vectors(cert.directions));
  if (!(cert.r_cov > 0.0)) {
    res.reason = "origin not interior to convex hull";
    return res;
  }
  if (cert.r_cov < kThinCoverage) {
    res.reason = "coverage too thin";
    return res;
  }
  cert.epsilon = kInf;
  for (std::size_t i = 0; i < cert.directions.size(); ++i)
    cert.epsilon = std::min({cert.epsilon, cert.stability_margins[i], cert.f_margins[i]});
  cert.gamma = compute_gamma(cert);
  res.certificate = std::move(cert);
  return res;
}

namespace {

struct Scored {
  Direction dir;
  double margin;
};

// Largest threshold whose survivors still surround the origin.
CertifyResult best_threshold(const UpdateFamily& family, const std::vector<Scored>& pool) {
  std::vector<double> levels;
  for (const auto& s : pool) levels.push_back(s.margin);
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end(),
                           [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }),
               levels.end());
  CertifyResult last;
  last.reason = "no candidate strongly stable";
  for (double t : levels) {
    std::vector<Direction> keep;
    for (const auto& s : pool)
      if (s.margin >= t - 1e-12 * std::max(1.0, std::abs(t))) keep.push_back(s.dir);
    if (coverage_radius(unit_vectors(keep)) < kThinCoverage) {
      last.reason = "origin not interior to convex hull";
      continue;
    }
    return certify_strongly_stable_set(family, keep);
  }
  return last;
}

bool primitive(const IVec& v) {
  std::int64_t g = 0;
  for (auto x : v) g = std::gcd(g, x < 0 ? -x : x);
  return g == 1;
}

}  // namespace

CertifyResult search_strongly_stable_set(const UpdateFamily& family, std::int64_t budget, std::uint64_t seed) {
  if (budget <= 0) throw ParameterError("search budget must be positive");
  if (family.empty()) return certify_strongly_stable_set(family, {});
  const int d = family.dim();
  std::int64_t spent = 0;
  std::vector<Scored> pool;
  CertifyResult last;
  last.reason = "no candidate strongly stable";

  auto consider = [&](const Direction& dir) {
    ++spent;
    if (!dir.rational && is_stable(family, dir) == Stability::uncertain) return;
    const double m = std::min(stability_margin(family, dir), f_margin(family, dir));
    if (m > 0) pool.push_back({dir, m});
  };
  auto attempt = [&]() -> bool {
    if (pool.empty()) return false;
    last = best_threshold(family, pool);
    last.candidates_examined = spent;
    return static_cast<bool>(last);
  };

  // Shells of primitive integer vectors with sup-norm h. Stop enumerating
  // once a shell would overrun the budget.
  for (std::int64_t h = 1; spent < budget; ++h) {
    const std::size_t before = pool.size();
    IVec v(d, -h);
    bool overran = false;
    for (;;) {
      const bool on_shell = std::any_of(v.begin(), v.end(), [&](std::int64_t x) { return x == h || x == -h; });
      if (on_shell && primitive(v)) {
        if (spent >= budget) {
          overran = true;
          break;
        }
        consider(Direction::from_rational(v));
      }
      int i = d - 1;
      while (i >= 0 && v[i] == h) v[i--] = -h;
      if (i < 0) break;
      ++v[i];
    }
    if (pool.size() != before && attempt()) return last;
    if (overran) break;
    // random directions take over once shells get large relative to budget
    if (std::pow(2.0 * static_cast<double>(h) + 3.0, d) > static_cast<double>(budget)) break;
  }

  Xoshiro256 rng(seed);
  std::size_t since_attempt = 0;
  while (spent < budget) {
    Vec g(d);
    double n2 = 0.0;
    do {
      for (auto& x : g) {
        // Box-Muller from two uniforms
        const double a = rng.uniform(), b = rng.uniform();
        x = std::sqrt(-2.0 * std::log(1.0 - a)) * std::cos(2 * std::numbers::pi * b);
      }
      n2 = dot(g, g);
    } while (n2 < 1e-12);
    consider(Direction::from_real(g));
    if (++since_attempt == 64 || spent == budget) {
      since_attempt = 0;
      if (attempt()) return last;
    }
  }
  last.candidates_examined = spent;
  if (last.reason.empty()) last.reason = "no candidate strongly stable";
  return last;
}

std::string StabilityCertificate::to_json() const {
  json j;
  j["dimension"] = dim;
  j["family_hash"] = hex64(family_hash);
  j["directions"] = json::array();
  for (std::size_t i = 0; i < directions.size(); ++i) {
    json dj;
    dj["rational"] = directions[i].rational ? json(*directions[i].rational) : json(nullptr);
    dj["float"] = directions[i].u;
    dj["stability_margin"] = number_or_null(stability_margins[i]);
    dj["f_margin"] = number_or_null(f_margins[i]);
    j["directions"].push_back(dj);
  }
  j["epsilon"] = number_or_null(epsilon);
  j["r_cov"] = r_cov;
  j["gamma"] = gamma;
  return j.dump(2);
}

StabilityCertificate StabilityCertificate::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
    StabilityCertificate c;
    c.dim = j.at("dimension").get<int>();
    c.family_hash = std::stoull(j.at("family_hash").get<std::string>(), nullptr, 16);
    for (const json& dj : j.at("directions")) {
      Direction dir = dj.at("rational").is_null() ? Direction::from_real(dj.at("float").get<Vec>())
                                                  : Direction::from_rational(dj.at("rational").get<IVec>());
      if (dir.dim() != c.dim) throw ParseError("certificate: direction has the wrong dimension");
      c.directions.push_back(dir);
      c.stability_margins.push_back(number_from(dj.at("stability_margin")));
      c.f_margins.push_back(number_from(dj.at("f_margin")));
    }
    c.epsilon = number_from(j.at("epsilon"));
    c.r_cov = j.at("r_cov").get<double>();
    c.gamma = j.at("gamma").get<double>();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("certificate document: ") + e.what());
  }
}

}  // namespace bootperc
