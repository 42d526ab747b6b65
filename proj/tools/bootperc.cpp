// bootperc: command-line driver. Exit codes: 0 success, 1 a runtime
// assertion failed, 2 usage, validation or I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bootperc/barrier.hpp"
#include "bootperc/experiment.hpp"
#include "bootperc/pinch.hpp"
#include "bootperc/renormalization.hpp"
#include "bootperc/rng.hpp"
#include "bootperc/stability.hpp"

using namespace bootperc;
using nlohmann::json;

namespace {

constexpr int kAssertionFailed = 1;
constexpr int kUsage = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + name + " in " + dir);
}

void add_experiment_options(CLI::App* cmd, ExperimentSpec& s, std::vector<double>& bracket) {
  cmd->add_option("--family", s.family, "family JSON file or neighbourhood:d:r")->required();
  cmd->add_option("--cert", s.cert, "certificate JSON (barrier-run; searched when absent)");
  cmd->add_option("--config", s.config, "snapshot of planted sites (barrier-run)");
  cmd->add_option("--n,--window", s.n, "torus or window side");
  cmd->add_option("--p,--pgrid", s.pgrid, "p value(s), comma separated")->delimiter(',');
  cmd->add_option("--bracket", bracket, "bisection bracket lo,hi")->delimiter(',')->expected(2);
  cmd->add_option("--tol", s.tol, "bisection tolerance");
  cmd->add_option("--trials", s.trials);
  cmd->add_option("--seed", s.seed, "master seed");
  cmd->add_option("--beta", s.beta);
  cmd->add_option("--kmax", s.kmax);
  cmd->add_option("--delta1", s.delta1);
  cmd->add_option("--level", s.level, "cube level (renorm-mc)");
  cmd->add_option("--out", s.out, "output directory");
  cmd->add_option("--workers", s.workers);
  cmd->add_flag("--timings", s.timings, "record wall times (outputs stop being byte-reproducible)");
}

int run_stability(const std::string& family_spec, std::int64_t budget, std::uint64_t seed, const std::string& out) {
  const UpdateFamily family = resolve_family(family_spec);
  const CertifyResult r = search_strongly_stable_set(family, budget, seed);
  std::cout << "family " << hex64(family.hash()) << ", " << family.rules().size() << " rules, radius "
            << family.radius() << "\n";
  if (!r) {
    std::cout << "no strongly stable covering set found after " << r.candidates_examined
              << " candidates: " << r.reason << "\n";
    json j = {{"family_hash", hex64(family.hash())}, {"certified", false}, {"reason", r.reason}};
    if (!out.empty()) write_file(out, "certificate.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  const StabilityCertificate& c = *r.certificate;
  std::cout << c.directions.size() << " directions, epsilon " << c.epsilon << ", r_cov " << c.r_cov << ", gamma "
            << c.gamma << "\n";
  for (std::size_t i = 0; i < c.directions.size(); ++i) {
    std::cout << "  u = (";
    for (std::size_t a = 0; a < c.directions[i].u.size(); ++a) std::cout << (a ? ", " : "") << c.directions[i].u[a];
    std::cout << ")  margin " << c.stability_margins[i] << "  f-margin " << c.f_margins[i] << "\n";
  }
  const std::string text = c.to_json();
  if (!out.empty()) write_file(out, "certificate.json", json::parse(text).dump(2) + "\n");
  std::cout << json::parse(text).dump(2) << "\n";
  return 0;
}

struct RenormArgs {
  std::string family, config;
  double p = 1e-3, beta = 1.25;
  int kmax = 2;
  std::optional<std::int64_t> delta1;
  std::int64_t window = 256, trials = 1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_renorm(const RenormArgs& a) {
  const UpdateFamily family = resolve_family(a.family);
  const int d = family.dim();
  if (a.trials < 1) throw ParameterError("trials must be at least 1");
  const ScaleSchedule s = build_schedule(d, a.p, a.beta, a.kmax, a.delta1);
  std::vector<std::array<std::int64_t, 3>> counts(static_cast<std::size_t>(s.levels()), {0, 0, 0});
  json clusters = json::array();
  const std::int64_t trials = a.config.empty() ? a.trials : 1;
  for (std::int64_t t = 0; t < trials; ++t) {
    const Configuration conf = a.config.empty()
                                   ? sample_bernoulli(LatticeWindow::centered(d, a.window / 2), a.p,
                                                      stream_seed(a.seed, static_cast<std::uint64_t>(t)))
                                   : read_snapshot(slurp(a.config));
    const CubeHierarchy h = classify(conf, s, a.config.empty() ? Outside::unknown : Outside::empty);
    for (int k = 1; k <= s.levels(); ++k) {
      auto& c = counts[static_cast<std::size_t>(k - 1)];
      c[0] += h.count(k, CubeState::good);
      c[1] += h.count(k, CubeState::bad);
      c[2] += h.count(k, CubeState::indeterminate);
      if (t != 0 || k > s.k_max) continue;
      for (const BadCluster& q : all_clusters(h, k))
        clusters.push_back({{"level", q.level},
                            {"members", q.members},
                            {"anchor", q.anchor},
                            {"meets_good_parent", q.meets_good_parent},
                            {"touches_indeterminate", q.touches_indeterminate}});
    }
  }
  std::ostringstream csv;
  csv << "level,good,bad,indeterminate\n";
  for (int k = 1; k <= s.levels(); ++k) {
    const auto& c = counts[static_cast<std::size_t>(k - 1)];
    csv << k << ',' << c[0] << ',' << c[1] << ',' << c[2] << "\n";
  }
  json doc = {{"schedule", json::parse(s.to_json())}, {"seed", a.seed}, {"trials", trials}, {"clusters", clusters}};
  std::cout << csv.str();
  if (!a.out.empty()) {
    write_file(a.out, "levels.csv", csv.str());
    write_file(a.out, "clusters.json", doc.dump(2) + "\n");
  }
  return 0;
}

int run_pinch_verify(const std::string& pinch_path, const std::string& family_spec, std::int64_t window,
                     std::int64_t samples, std::uint64_t seed) {
  const Pinch pinch = Pinch::from_json(slurp(pinch_path));
  const HeightBoundsReport hb = verify_height_bounds(pinch, samples, seed);
  std::cout << (hb.ok() ? "PASS" : "FAIL") << " height bounds over " << hb.samples
            << " samples; worst value/bound: step " << hb.level_step_ratio << ", total " << hb.total_ratio
            << ", lipschitz " << hb.lipschitz_ratio << ", gradient " << hb.gradient_ratio << "\n";
  for (const std::string& v : hb.violations) std::cout << "  " << v << "\n";
  bool ok = hb.ok();
  if (!family_spec.empty()) {
    const UpdateFamily family = resolve_family(family_spec);
    const auto viol = verify_range_closed(pinch, LatticeWindow::centered(family.dim(), window / 2), family);
    ok = ok && viol.empty();
    std::cout << (viol.empty() ? "PASS" : "FAIL") << " range closed on a " << window << "-window: " << viol.size()
              << " violations\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(viol.size(), 10); ++i) {
      std::cout << "  site (";
      for (std::size_t a = 0; a < viol[i].site.size(); ++a) std::cout << (a ? "," : "") << viol[i].site[a];
      std::cout << ") rule " << viol[i].rule << "\n";
    }
  }
  return ok ? 0 : kAssertionFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-bootstrap percolation: closure, stability, renormalization and barrier covers"};
  app.require_subcommand(1);

  ExperimentSpec spec;
  std::vector<double> bracket;
  for (const char* mode : {"perc-prob", "pc-bisect", "one-arm", "renorm-mc", "barrier-run"}) {
    CLI::App* cmd = app.add_subcommand(mode, std::string("experiment mode ") + mode);
    add_experiment_options(cmd, spec, bracket);
  }
  CLI::App* barrier = app.add_subcommand("barrier", "same as barrier-run");
  add_experiment_options(barrier, spec, bracket);

  std::string st_family, st_out;
  std::int64_t st_budget = 10000;
  std::uint64_t st_seed = 1;
  CLI::App* stability = app.add_subcommand("stability", "search for a strongly stable covering set");
  stability->add_option("--family", st_family)->required();
  stability->add_option("--budget", st_budget);
  stability->add_option("--seed", st_seed);
  stability->add_option("--out", st_out, "directory for certificate.json");

  RenormArgs rn;
  CLI::App* renorm = app.add_subcommand("renorm", "classify cubes of a sampled or planted set");
  renorm->add_option("--family", rn.family)->required();
  renorm->add_option("--config", rn.config);
  renorm->add_option("--p", rn.p);
  renorm->add_option("--beta", rn.beta);
  renorm->add_option("--kmax", rn.kmax);
  renorm->add_option("--delta1", rn.delta1);
  renorm->add_option("--window", rn.window);
  renorm->add_option("--trials", rn.trials);
  renorm->add_option("--seed", rn.seed);
  renorm->add_option("--out", rn.out);

  std::string pv_pinch, pv_family;
  std::int64_t pv_window = 300, pv_samples = 10000;
  std::uint64_t pv_seed = 1;
  CLI::App* pinch = app.add_subcommand("pinch", "pinch utilities");
  pinch->require_subcommand(1);
  CLI::App* verify = pinch->add_subcommand("verify", "height bounds and range closedness");
  verify->add_option("--pinch", pv_pinch)->required();
  verify->add_option("--family", pv_family, "family for the closedness check");
  verify->add_option("--window", pv_window);
  verify->add_option("--samples", pv_samples);
  verify->add_option("--seed", pv_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (stability->parsed()) return run_stability(st_family, st_budget, st_seed, st_out);
    if (renorm->parsed()) return run_renorm(rn);
    if (verify->parsed()) return run_pinch_verify(pv_pinch, pv_family, pv_window, pv_samples, pv_seed);

    for (CLI::App* cmd : app.get_subcommands()) spec.mode = cmd == barrier ? "barrier-run" : cmd->get_name();
    if (bracket.size() == 2) {
      spec.bracket_lo = bracket[0];
      spec.bracket_hi = bracket[1];
    }
    const RunOutcome out = run_spec(spec);
    std::cout << out.report;
    return out.assertions_passed ? 0 : kAssertionFailed;
  } catch (const BarrierError& e) {
    std::cerr << "assertion failed: " << e.what() << "\n";
    return kAssertionFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
