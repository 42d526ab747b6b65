#include "bootperc/pinch.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "bootperc/rng.hpp"

namespace bootperc {

using nlohmann::json;

double bump(double x) {
  if (std::abs(x) > std::numbers::pi / 2) return 0.0;
  const double c = std::cos(x);
  return c * c;
}

Pinch::Pinch(Direction u, double lambda, double gamma, ScaleSchedule schedule, int k, std::vector<std::vector<Vec>> z)
    : u_(std::move(u)), lambda_(lambda), gamma_(gamma), schedule_(std::move(schedule)), k_(k), z_(std::move(z)) {
  if (k_ < 0 || k_ > schedule_.levels()) throw ParameterError("pinch level outside the schedule");
  if (u_.dim() != schedule_.d) throw ParameterError("pinch direction and schedule dimensions differ");
  z_.resize(static_cast<std::size_t>(k_));
  for (int i = 1; i <= k_; ++i)
    for (const Vec& p : z_[i - 1])
      if (std::abs(dot(p, u_.u)) > 1e-9 * std::max(1.0, norm(p)))
        throw ParameterError("augmentation point off the base hyperplane");
}

const std::vector<Vec>& Pinch::z(int i) const {
  if (i < 1 || i > k_) throw ParameterError("augmentation level out of range");
  return z_[i - 1];
}

void Pinch::set_z(int i, std::vector<Vec> points) {
  if (i < 1 || i > k_) throw ParameterError("augmentation level out of range");
  z_[i - 1] = std::move(points);
}

std::size_t Pinch::bump_count() const {
  std::size_t n = 0;
  for (const auto& level : z_) n += level.size();
  return n;
}

Vec Pinch::project(const Vec& y) const { return y - dot(y, u_.u) * u_.u; }

double Pinch::amplitude(int i) const { return 16.0 * gamma_ * static_cast<double>(schedule_.delta(i)); }
double Pinch::support(int i) const { return std::numbers::pi / 64.0 * schedule_.gap(i); }

double Pinch::lipschitz(int j) const {
  return 1024.0 * gamma_ * std::pow(static_cast<double>(schedule_.delta(j)), 1.0 - schedule_.beta);
}

double Pinch::slope_bound_near(const Vec& centre, double radius) const {
  const Vec p = project(centre);
  double slope = 0.0;
  for (int i = 1; i <= k_; ++i) {
    // each bump is A c(32 t / g) with |c'| <= 1
    const double steepest = amplitude(i) * 32.0 / schedule_.gap(i);
    for (const Vec& z : z_[i - 1])
      if (distance(p, z) < support(i) + radius) slope += steepest;
  }
  return slope;
}

double Pinch::height(const Vec& x, int j) const {
  if (j < 1 || j > k_ + 1) throw ParameterError("height level out of range");
  const Vec p = project(x);
  double h = lambda_;
  for (int i = j; i <= k_; ++i) {
    const double scale = 32.0 / schedule_.gap(i);
    const double reach = support(i);
    double level = 0.0;
    for (const Vec& z : z_[i - 1]) {
      const double dist = distance(p, z);
      if (dist < reach) level += bump(scale * dist);
    }
    h += amplitude(i) * level;
  }
  return h;
}

double Pinch::gap(const Vec& y) const { return height(y) - dot(y, u_.u); }
bool Pinch::in_range(const Vec& y) const { return gap(y) > 0.0; }

bool Pinch::in_slab(const Vec& y, double c, int i) const {
  return std::abs(gap(y)) <= c * static_cast<double>(schedule_.delta(i));
}

std::optional<std::string> Pinch::separation_violation() const {
  for (int i = 1; i <= k_; ++i) {
    const auto& zs = z_[i - 1];
    const double need = schedule_.gap(i) / 2 - 1e-9;
    for (std::size_t a = 0; a < zs.size(); ++a)
      for (std::size_t b = a + 1; b < zs.size(); ++b)
        if (!(distance(zs[a], zs[b]) > need)) {
          std::ostringstream os;
          os << "Z_" << i << " points " << a << " and " << b << " are " << distance(zs[a], zs[b])
             << " apart, need more than g_" << i << "/2 = " << schedule_.gap(i) / 2;
          return os.str();
        }
  }
  return std::nullopt;
}

std::string Pinch::to_json() const {
  json j;
  j["u"] = {{"rational", u_.rational ? json(*u_.rational) : json(nullptr)}, {"float", u_.u}};
  j["lambda"] = lambda_;
  j["gamma"] = gamma_;
  j["k"] = k_;
  j["schedule"] = json::parse(schedule_.to_json());
  j["schedule_hash"] = hex64(schedule_.hash());
  j["Z"] = z_;
  return j.dump(2);
}

Pinch Pinch::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    const json& ju = j.at("u");
    Direction u = ju.at("rational").is_null() ? Direction::from_real(ju.at("float").get<Vec>())
                                              : Direction::from_rational(ju.at("rational").get<IVec>());
    const json& js = j.at("schedule");
    ScaleSchedule s;
    s.d = js.at("d").get<int>();
    s.beta = js.at("beta").get<double>();
    s.k_max = js.at("k_max").get<int>();
    s.deltas = js.at("delta").get<std::vector<std::int64_t>>();
    s.gaps = js.at("g").get<std::vector<double>>();
    if (j.contains("schedule_hash") && j.at("schedule_hash").get<std::string>() != hex64(s.hash()))
      throw ParseError("pinch document: schedule hash mismatch");
    return Pinch(u, j.at("lambda").get<double>(), j.at("gamma").get<double>(), s, j.at("k").get<int>(),
                 j.at("Z").get<std::vector<std::vector<Vec>>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("pinch document: ") + e.what());
  }
}

bool closedness_slope_condition(const ScaleSchedule& s, double gamma, double epsilon) {
  const double eps = std::min(epsilon, std::numbers::pi / 2);
  return 1024.0 * gamma * std::pow(static_cast<double>(s.delta(1)), 1.0 - s.beta) <= std::sin(eps) / 2;
}

std::int64_t min_delta1_for_closedness(double gamma, double epsilon, double beta) {
  const double eps = std::min(epsilon, std::numbers::pi / 2);
  const double v = std::pow(2048.0 * gamma / std::sin(eps), 1.0 / (beta - 1.0));
  if (!(v < 9e18)) throw ParameterError("no representable Delta_1 meets the slope condition");
  return static_cast<std::int64_t>(std::ceil(v));
}

std::vector<Vec> hyperplane_basis(const Vec& u) {
  const std::size_t d = u.size();
  std::vector<Vec> basis;
  for (std::size_t i = 0; i < d && basis.size() + 1 < d; ++i) {
    Vec v(d, 0.0);
    v[i] = 1.0;
    v = v - dot(v, u) * u;
    for (const Vec& b : basis) v = v - dot(v, b) * b;
    const double n = norm(v);
    if (n > 1e-6) basis.push_back((1.0 / n) * v);
  }
  return basis;
}

HeightBoundsReport verify_height_bounds(const Pinch& pinch, std::int64_t samples, std::uint64_t seed) {
  if (samples < 1) throw ParameterError("samples must be at least 1");
  HeightBoundsReport rep;
  rep.samples = samples;
  if (auto bad = pinch.separation_violation()) {
    rep.violations.push_back("separation: " + *bad);
    return rep;
  }
  const int k = pinch.k();
  if (k == 0) return rep;
  const int d = pinch.schedule().d;
  const std::vector<Vec> basis = hyperplane_basis(pinch.u());
  Xoshiro256 rng(seed);

  std::vector<const Vec*> centres;
  std::vector<int> centre_level;
  for (int i = 1; i <= k; ++i)
    for (const Vec& z : pinch.z(i)) {
      centres.push_back(&z);
      centre_level.push_back(i);
    }
  double extent = pinch.support(k) * 2;
  for (const Vec* z : centres) extent = std::max(extent, norm(*z) + 2 * pinch.support(k));

  auto in_plane = [&](double radius) {
    Vec v(d, 0.0);
    for (const Vec& b : basis) v = v + ((2 * rng.uniform() - 1) * radius) * b;
    return v;
  };
  auto sample_point = [&]() {
    if (!centres.empty() && rng.uniform() < 0.75) {
      const std::size_t c = static_cast<std::size_t>(rng.uniform() * static_cast<double>(centres.size()));
      return *centres[c] + in_plane(1.2 * pinch.support(centre_level[c]));
    }
    return in_plane(extent);
  };
  auto record = [&](double& worst, double value, double bound, const std::string& what) {
    const double ratio = value / bound;
    worst = std::max(worst, ratio);
    if (value > bound && rep.violations.size() < 20) rep.violations.push_back(what);
  };
  auto describe = [](const Vec& v) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ")";
    return os.str();
  };

  const double lam = pinch.lambda();
  const double total_bound = 32.0 * pinch.gamma() * static_cast<double>(pinch.schedule().delta(k));
  const double h_step = 1e-4;
  for (std::int64_t s = 0; s < samples; ++s) {
    const Vec x = sample_point();
    std::vector<double> hs(static_cast<std::size_t>(k) + 2);
    for (int j = 1; j <= k + 1; ++j) hs[j] = pinch.height(x, j);
    for (int j = 1; j <= k; ++j) {
      record(rep.level_step_ratio, std::abs(hs[j] - hs[j + 1]), pinch.amplitude(j),
             "|h_" + std::to_string(j) + " - h_" + std::to_string(j + 1) + "| at " + describe(x));
      record(rep.total_ratio, std::abs(hs[j] - lam), total_bound,
             "|h_" + std::to_string(j) + " - lambda| at " + describe(x));
    }
    // pair at a random scale, from sub-unit to the coarsest support
    const double scale = std::exp(std::log(1e-3) + rng.uniform() * (std::log(2 * pinch.support(k)) - std::log(1e-3)));
    const Vec y = x + in_plane(scale);
    const double dxy = distance(x, y);
    for (int j = 1; j <= k; ++j) {
      if (dxy <= 0) continue;
      record(rep.lipschitz_ratio, std::abs(pinch.height(x, j) - pinch.height(y, j)), pinch.lipschitz(j) * dxy,
             "Lipschitz h_" + std::to_string(j) + " between " + describe(x) + " and " + describe(y));
      double g2 = 0.0;
      for (const Vec& b : basis) {
        auto h = [&](double t) { return pinch.height(x + t * b, j); };
        const double deriv = (-h(2 * h_step) + 8 * h(h_step) - 8 * h(-h_step) + h(-2 * h_step)) / (12 * h_step);
        g2 += deriv * deriv;
      }
      record(rep.gradient_ratio, std::sqrt(g2), pinch.lipschitz(j) + 1e-6,
             "gradient of h_" + std::to_string(j) + " at " + describe(x));
    }
  }
  return rep;
}

std::vector<ClosureViolation> verify_range_closed(const Pinch& pinch, const LatticeWindow& window,
                                                  const UpdateFamily& family) {
  if (family.dim() != window.dim() || pinch.schedule().d != window.dim())
    throw ParameterError("verify_range_closed: dimension mismatch");
  const std::int64_t r = family.radius_ceil();
  IVec lo = window.lower(), hi = window.upper();
  for (auto& v : lo) v -= r;
  for (auto& v : hi) v += r;
  const LatticeWindow big(lo, hi);
  Configuration inside(big);
  for (std::uint64_t i = 0; i < big.volume(); ++i)
    if (pinch.in_range(big.site(i))) inside.infect(i);

  std::vector<ClosureViolation> out;
  IVec y(window.dim());
  for (std::uint64_t i = 0; i < window.volume(); ++i) {
    const IVec x = window.site(i);
    if (inside.infected(big.index(x))) continue;
    for (std::size_t ri = 0; ri < family.rules().size(); ++ri) {
      bool all = true;
      for (const IVec& s : family.rules()[ri]) {
        for (int a = 0; a < window.dim(); ++a) y[a] = x[a] + s[a];
        if (!inside.infected(big.index(y))) {
          all = false;
          break;
        }
      }
      if (all) out.push_back({x, ri});
    }
  }
  return out;
}

}  // namespace bootperc
