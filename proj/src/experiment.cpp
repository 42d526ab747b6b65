#include "bootperc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bootperc/barrier.hpp"
#include "bootperc/renormalization.hpp"
#include "bootperc/rng.hpp"
#include "bootperc/stability.hpp"

namespace bootperc {

using nlohmann::json;

namespace {

std::string real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json row_json(const ResultRow& r) {
  json j;
  j["mode"] = r.mode;
  j["family_hash"] = hex64(r.family_hash);
  j["n"] = r.n;
  // NaN has no JSON form; a missing estimate is written as null
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  j["p"] = num(r.p);
  j["estimate"] = num(r.estimate);
  j["lo"] = num(r.interval.lo);
  j["hi"] = num(r.interval.hi);
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["ms"] = r.ms;
  return j;
}

ResultRow proportion(std::string mode, const UpdateFamily& family, std::int64_t n, double p, std::int64_t hits,
                     std::int64_t trials, std::uint64_t seed) {
  ResultRow r;
  r.mode = std::move(mode);
  r.family_hash = family.hash();
  r.n = n;
  r.p = p;
  r.estimate = static_cast<double>(hits) / static_cast<double>(trials);
  r.interval = wilson_interval(hits, trials);
  r.trials = trials;
  r.seed = seed;
  return r;
}

void check_trials(std::int64_t trials) {
  if (trials < 1) throw ParameterError("trials must be at least 1");
}

void check_side(const UpdateFamily& family, std::int64_t n) {
  const double need = 4.0 * family.radius();
  if (static_cast<double>(n) < need)
    throw ParameterError("window side " + std::to_string(n) + " is below 4R = " + real(need));
}

void check_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("p must lie in (0, 1), got " + real(p));
}

}  // namespace

std::string csv_header() { return "mode,family_hash,n,p,estimate,lo,hi,trials,seed,ms"; }

std::string csv_line(const ResultRow& r) {
  std::ostringstream os;
  os << r.mode << ',' << hex64(r.family_hash) << ',' << r.n << ',' << real(r.p) << ',' << real(r.estimate) << ','
     << real(r.interval.lo) << ',' << real(r.interval.hi) << ',' << r.trials << ',' << r.seed << ',' << real(r.ms);
  return os.str();
}

std::vector<double> uniform_field(std::uint64_t volume, std::uint64_t seed, std::int64_t trial) {
  Xoshiro256 g(stream_seed(seed, static_cast<std::uint64_t>(trial)));
  std::vector<double> u(volume);
  for (double& x : u) x = g.uniform();
  return u;
}

Configuration threshold(const LatticeWindow& w, const std::vector<double>& field, double p) {
  if (field.size() != w.volume()) throw ParameterError("threshold: field size does not match the window");
  Configuration a(w);
  for (std::uint64_t i = 0; i < field.size(); ++i)
    if (field[i] < p) a.infect(i);
  return a;
}

ResultRow perc_probability(const UpdateFamily& family, std::int64_t n, double p, std::int64_t trials,
                           std::uint64_t seed, int workers) {
  check_trials(trials);
  if (n < 1) throw ParameterError("torus side must be positive");
  const LatticeWindow w = LatticeWindow::cube(family.dim(), n, TorusBoundary{});
  const auto hits = run_indexed<int>(trials, workers, [&](std::int64_t t) {
    return percolates(threshold(w, uniform_field(w.volume(), seed, t), p), family) ? 1 : 0;
  });
  return proportion("perc-prob", family, n, p, std::accumulate(hits.begin(), hits.end(), std::int64_t{0}), trials,
                    seed);
}

BisectResult pc_bisect(const UpdateFamily& family, std::int64_t n, std::int64_t trials, double lo, double hi,
                       double tol, std::uint64_t seed, int workers) {
  check_trials(trials);
  if (n < 1) throw ParameterError("torus side must be positive");
  if (!(0.0 <= lo && lo < hi && hi <= 1.0)) throw ParameterError("bracket must satisfy 0 <= lo < hi <= 1");
  if (!(tol > 0.0)) throw ParameterError("tol must be positive");
  const LatticeWindow w = LatticeWindow::cube(family.dim(), n, TorusBoundary{});

  BisectResult r;
  r.thresholds = run_indexed<double>(trials, workers, [&](std::int64_t t) {
    const std::vector<double> u = uniform_field(w.volume(), seed, t);
    std::vector<std::uint64_t> order(u.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) { return u[a] < u[b]; });
    auto first = [&](std::uint64_t m) {
      Configuration a(w);
      for (std::uint64_t i = 0; i < m; ++i) a.infect(order[i]);
      return a;
    };
    // smallest m such that the m lowest sites percolate; m = volume always does
    std::uint64_t a = 0, b = u.size();
    while (b - a > 1) {
      const std::uint64_t m = a + (b - a) / 2;
      if (percolates(first(m), family))
        b = m;
      else
        a = m;
    }
    if (b == 1 && percolates(first(0), family)) return -1.0;  // only the empty family
    return u[order[b - 1]];
  });

  std::vector<double> sorted = r.thresholds;
  std::sort(sorted.begin(), sorted.end());
  auto prob = [&](double p) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), p) - sorted.begin();
    return static_cast<double>(below) / static_cast<double>(trials);
  };
  r.lo = lo;
  r.hi = hi;
  const double plo = prob(lo), phi = prob(hi);
  if (plo >= 0.5 || phi < 0.5) {
    r.straddles = false;
    r.estimate = std::numeric_limits<double>::quiet_NaN();
    r.message = "bracket does not straddle 1/2: P(" + real(lo) + ") = " + real(plo) + ", P(" + real(hi) +
                ") = " + real(phi);
    return r;
  }
  r.straddles = true;
  while (r.hi - r.lo > tol) {
    const double mid = 0.5 * (r.lo + r.hi);
    if (prob(mid) >= 0.5)
      r.hi = mid;
    else
      r.lo = mid;
    ++r.steps;
  }
  r.estimate = 0.5 * (r.lo + r.hi);
  return r;
}

OneArmCurve one_arm(const UpdateFamily& family, std::vector<double> pgrid, std::int64_t half, std::int64_t trials,
                    std::uint64_t seed, int workers) {
  check_trials(trials);
  if (half < 1) throw ParameterError("one_arm: window half-width must be positive");
  if (pgrid.empty()) throw ParameterError("one_arm: empty p grid");
  if (pgrid.size() > 63) throw ParameterError("one_arm: at most 63 grid points");
  std::sort(pgrid.begin(), pgrid.end());
  const int d = family.dim();
  const LatticeWindow w = LatticeWindow::centered(d, half);
  const std::uint64_t origin = w.index(IVec(d, 0));
  const std::size_t m = pgrid.size();

  // bit j of a trial's mask: origin in the closure at pgrid[j]
  const auto masks = run_indexed<std::uint64_t>(trials, workers, [&](std::int64_t t) {
    const std::vector<double> u = uniform_field(w.volume(), seed, t);
    std::uint64_t mask = 0;
    for (std::size_t j = 0; j < m; ++j)
      if (closure(threshold(w, u, pgrid[j]), family).infected(origin)) mask |= std::uint64_t{1} << j;
    return mask;
  });

  OneArmCurve curve;
  std::vector<std::int64_t> hits(m, 0);
  for (std::uint64_t mask : masks) {
    for (std::size_t j = 0; j < m; ++j)
      if ((mask >> j) & 1U) ++hits[j];
    // monotone masks are of the form 1...10...0 read from the top bit down
    const std::uint64_t low = mask & (~mask + 1);
    if (mask != 0 && ((mask + low) & ((std::uint64_t{1} << m) - 1)) != 0) ++curve.inversions;
  }
  const double d_exp = (2.0 * d + 2.0) / (3.0 * d + 2.0);
  for (std::size_t j = 0; j < m; ++j) {
    OneArmPoint pt;
    pt.row = proportion("one-arm", family, 2 * half, pgrid[j], hits[j], trials, seed);
    pt.ratio_two_thirds = pt.row.estimate / std::pow(pgrid[j], 2.0 / 3.0);
    pt.ratio_d_exponent = pt.row.estimate / std::pow(pgrid[j], d_exp);
    curve.points.push_back(pt);
  }
  return curve;
}

UpdateFamily resolve_family(const std::string& spec) {
  const std::string prefix = "neighbourhood:";
  if (spec.rfind(prefix, 0) == 0) {
    int d = 0, r = 0;
    char tail = 0;
    if (std::sscanf(spec.c_str() + prefix.size(), "%d:%d%c", &d, &r, &tail) != 2)
      throw ParameterError("expected neighbourhood:d:r, got " + spec);
    return neighbourhood_family(d, r);
  }
  return load_family(spec);
}

namespace {

void validate(const ExperimentSpec& s, const UpdateFamily& family) {
  static const std::vector<std::string> modes = {"perc-prob", "pc-bisect", "one-arm", "renorm-mc", "barrier-run"};
  if (std::find(modes.begin(), modes.end(), s.mode) == modes.end())
    throw ParameterError("unknown mode '" + s.mode + "'");
  check_trials(s.trials);
  if (s.workers < 1) throw ParameterError("workers must be at least 1");
  for (double p : s.pgrid) check_probability(p);
  if (s.mode == "perc-prob" || s.mode == "pc-bisect" || s.mode == "one-arm" || s.mode == "barrier-run")
    check_side(family, s.n);
  if ((s.mode == "perc-prob" || s.mode == "one-arm" || s.mode == "renorm-mc") && s.pgrid.empty())
    throw ParameterError(s.mode + " needs --p or --pgrid");
  if (s.mode == "barrier-run" && s.config.empty() && s.pgrid.size() != 1)
    throw ParameterError("barrier-run needs --config or a single --p");
}

json seed_chain(std::uint64_t master, std::int64_t trials) {
  json j;
  j["master"] = master;
  j["stream"] = "stream_seed(master, i) = splitmix64(splitmix64(master) ^ (i * 0xD1B54A32D192ED03)); "
                "generator xoshiro256** seeded from successive splitmix64 outputs; uniform = top 53 bits";
  json first = json::array();
  for (std::int64_t i = 0; i < std::min<std::int64_t>(trials, 4); ++i)
    first.push_back(hex64(stream_seed(master, static_cast<std::uint64_t>(i))));
  j["first_streams"] = first;
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunOutcome run_experiment(const ExperimentSpec& spec) {
  const UpdateFamily family = resolve_family(spec.family);
  validate(spec, family);
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();

  RunOutcome out;
  json doc;
  doc["mode"] = spec.mode;
  doc["family"] = json::parse(family.to_json());
  doc["family_hash"] = hex64(family.hash());
  doc["seed_chain"] = seed_chain(spec.seed, spec.trials);
  std::ostringstream report;

  if (spec.mode == "perc-prob") {
    for (double p : spec.pgrid) {
      const auto t0 = clock::now();
      ResultRow r = perc_probability(family, spec.n, p, spec.trials, spec.seed, spec.workers);
      if (spec.timings) r.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      report << "P(percolates on the " << spec.n << "-torus at p = " << p << ") = " << r.estimate << " ["
             << r.interval.lo << ", " << r.interval.hi << "]\n";
      out.rows.push_back(r);
    }
  } else if (spec.mode == "pc-bisect") {
    const BisectResult b =
        pc_bisect(family, spec.n, spec.trials, spec.bracket_lo, spec.bracket_hi, spec.tol, spec.seed, spec.workers);
    ResultRow r;
    r.mode = spec.mode;
    r.family_hash = family.hash();
    r.n = spec.n;
    r.p = b.estimate;
    r.estimate = b.estimate;
    r.interval = {b.lo, b.hi};
    r.trials = spec.trials;
    r.seed = spec.seed;
    out.rows.push_back(r);
    json jb;
    jb["note"] = "finite-torus crossing of the estimated percolation probability through 1/2";
    jb["straddles"] = b.straddles;
    jb["steps"] = b.steps;
    jb["bracket"] = {spec.bracket_lo, spec.bracket_hi};
    jb["tol"] = spec.tol;
    if (!b.straddles) jb["message"] = b.message;
    doc["bisection"] = jb;
    if (b.straddles)
      report << "p_hat(n = " << spec.n << ") = " << b.estimate << " (bracket [" << b.lo << ", " << b.hi << "])\n";
    else
      report << b.message << "\n";
  } else if (spec.mode == "one-arm") {
    const OneArmCurve c = one_arm(family, spec.pgrid, spec.n / 2, spec.trials, spec.seed, spec.workers);
    json pts = json::array();
    for (const OneArmPoint& pt : c.points) {
      out.rows.push_back(pt.row);
      pts.push_back({{"p", pt.row.p},
                     {"estimate", pt.row.estimate},
                     {"ratio_p_2_3", pt.ratio_two_thirds},
                     {"ratio_p_(2d+2)/(3d+2)", pt.ratio_d_exponent}});
      report << "p = " << pt.row.p << ": P(0 in closure) >= " << pt.row.estimate << ", /p^(2/3) = "
             << pt.ratio_two_thirds << "\n";
    }
    doc["curve"] = {{"note", "finite free-boundary window: estimates are lower bounds"},
                    {"points", pts},
                    {"inversions", c.inversions}};
  } else if (spec.mode == "renorm-mc") {
    json lv = json::array();
    for (double p : spec.pgrid) {
      const auto t0 = clock::now();
      const ScaleSchedule s = build_schedule(family.dim(), p, spec.beta, spec.kmax, spec.delta1);
      const BadProbability b = mc_bad_probability(s, spec.level, p, spec.trials, spec.seed, spec.workers);
      ResultRow r = proportion(spec.mode, family, s.delta(spec.level), p, b.bad, spec.trials, spec.seed);
      if (spec.timings) r.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      out.rows.push_back(r);
      lv.push_back({{"p", p},
                    {"level", spec.level},
                    {"schedule", json::parse(s.to_json())},
                    {"bound", b.decay_bound},
                    {"exact_level1", b.exact_level1}});
      report << "P(bad (" << spec.level << ")-cube, p = " << p << ") = " << r.estimate << " [" << r.interval.lo
             << ", " << r.interval.hi << "], bound " << b.decay_bound << "\n";
    }
    doc["levels"] = lv;
  } else {  // barrier-run
    const int d = family.dim();
    const StabilityCertificate cert = spec.cert.empty()
                                          ? [&] {
                                              const CertifyResult c = search_strongly_stable_set(family, 10000, 1);
                                              if (!c) throw ValidationError("no certificate: " + c.reason);
                                              return *c.certificate;
                                            }()
                                          : StabilityCertificate::from_json(read_file(spec.cert));
    const double p = spec.pgrid.empty() ? 0.0 : spec.pgrid.front();
    Configuration a = spec.config.empty()
                          ? sample_bernoulli(LatticeWindow::centered(d, spec.n / 2), p, stream_seed(spec.seed, 0))
                          : read_snapshot(read_file(spec.config));
    if (!spec.config.empty() && !spec.delta1 && p == 0.0)
      throw ParameterError("barrier-run on a planted set needs --delta1 or --p");
    const ScaleSchedule s = build_schedule(d, p == 0.0 ? 0.5 : p, spec.beta, spec.kmax, spec.delta1);
    const GlobalCover g = build_global_cover(a, s, cert, family);
    out.assertions_passed = g.ok();
    ResultRow r;
    r.mode = spec.mode;
    r.family_hash = family.hash();
    r.n = a.window().extent(0);
    r.p = p;
    r.estimate = g.ok() ? 1.0 : 0.0;
    r.interval = {r.estimate, r.estimate};
    r.trials = 1;
    r.seed = spec.seed;
    out.rows.push_back(r);
    doc["schedule"] = json::parse(s.to_json());
    doc["certificate"] = json::parse(cert.to_json());
    doc["cover"] = json::parse(g.to_json());
    doc["report"] = g.report();
    report << g.report();
  }

  if (spec.timings) {
    doc["ms_total"] = std::chrono::duration<double, std::milli>(clock::now() - started).count();
    report << "total " << doc["ms_total"].get<double>() << " ms\n";
  }
  json rows = json::array();
  for (const ResultRow& r : out.rows) rows.push_back(row_json(r));
  doc["rows"] = rows;
  out.json = doc.dump(2) + "\n";
  out.report = report.str();
  return out;
}

RunOutcome run_spec(const ExperimentSpec& spec) {
  RunOutcome out = run_experiment(spec);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(spec.out, ec);
  if (ec) throw std::runtime_error("cannot create " + spec.out + ": " + ec.message());
  std::string csv = csv_header() + "\n";
  for (const ResultRow& r : out.rows) csv += csv_line(r) + "\n";
  for (const auto& [name, text] : {std::pair{"results.csv", &csv}, std::pair{"results.json", &out.json}}) {
    std::ofstream f(fs::path(spec.out) / name, std::ios::binary);
    f << *text;
    if (!f) throw std::runtime_error("cannot write " + (fs::path(spec.out) / name).string());
  }
  return out;
}

}  // namespace bootperc
