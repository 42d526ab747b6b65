#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bootperc/lattice.hpp"
#include "bootperc/stats.hpp"

namespace bootperc {

/// One CSV line: mode,family_hash,n,p,estimate,lo,hi,trials,seed,ms
struct ResultRow {
  std::string mode;
  std::uint64_t family_hash = 0;
  std::int64_t n = 0;
  double p = 0.0;
  double estimate = 0.0;
  Interval interval;
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
  double ms = 0.0;
};

std::string csv_header();
/// Fixed formatting (%.17g for reals) so equal rows give equal bytes.
std::string csv_line(const ResultRow& r);

/// Trial i draws one uniform per site, in window index order, from
/// Xoshiro256(stream_seed(seed, i)); A(p) = {x : U_x < p}. Every p uses the
/// same field, so A(p) grows with p within each trial.
std::vector<double> uniform_field(std::uint64_t volume, std::uint64_t seed, std::int64_t trial);
Configuration threshold(const LatticeWindow& w, const std::vector<double>& field, double p);

/// Fraction of trials in which A(p) percolates on the torus Z_n^d.
ResultRow perc_probability(const UpdateFamily& family, std::int64_t n, double p, std::int64_t trials,
                           std::uint64_t seed, int workers = 1);

struct BisectResult {
  bool straddles = false;
  std::string message;
  double estimate = 0.0;  // crossing of the empirical percolation probability through 1/2
  double lo = 0.0, hi = 0.0;
  int steps = 0;
  std::vector<double> thresholds;  // per trial: A(p) percolates iff p > threshold
};

/// Per trial the exact threshold of its uniform field is found by binary
/// search over the sorted field, so P_hat(p) = #{t_i < p} / trials is exact
/// and monotone. Bisection on [lo, hi] stops when hi - lo <= tol.
BisectResult pc_bisect(const UpdateFamily& family, std::int64_t n, std::int64_t trials, double lo, double hi,
                       double tol, std::uint64_t seed, int workers = 1);

struct OneArmPoint {
  ResultRow row;
  double ratio_two_thirds = 0.0;  // estimate / p^(2/3)
  double ratio_d_exponent = 0.0;  // estimate / p^((2d+2)/(3d+2))
};

struct OneArmCurve {
  std::vector<OneArmPoint> points;  // sorted by p
  std::int64_t inversions = 0;      // trials where the origin event is not monotone in p
};

/// P(0 in [A(p) within the window]) on [-half, half)^d with a free boundary:
/// a lower bound for the infinite-volume probability.
OneArmCurve one_arm(const UpdateFamily& family, std::vector<double> pgrid, std::int64_t half, std::int64_t trials,
                    std::uint64_t seed, int workers = 1);

struct ExperimentSpec {
  std::string mode;  // perc-prob, pc-bisect, one-arm, renorm-mc, barrier-run
  std::string family;  // file path or "neighbourhood:d:r"
  std::string cert;    // optional certificate file (barrier-run)
  std::string config;  // optional snapshot of initial sites (barrier-run)
  std::int64_t n = 64;
  std::vector<double> pgrid;
  double bracket_lo = 0.0, bracket_hi = 1.0, tol = 1e-3;
  std::int64_t trials = 100;
  std::uint64_t seed = 1;
  double beta = 1.25;
  int kmax = 2;
  std::optional<std::int64_t> delta1;
  int level = 1;
  std::string out = ".";
  int workers = 1;
  bool timings = false;
};

struct RunOutcome {
  std::vector<ResultRow> rows;
  std::string json;
  std::string report;            // human-readable summary
  bool assertions_passed = true;  // false only for barrier-run failures
};

/// Loads "neighbourhood:d:r" or a family file.
UpdateFamily resolve_family(const std::string& spec);

/// Validates the settings (throws ParameterError), runs the mode, and returns the
/// rows and the JSON document; nothing is written.
RunOutcome run_experiment(const ExperimentSpec& spec);

/// run_experiment, then writes <out>/results.csv and <out>/results.json.
RunOutcome run_spec(const ExperimentSpec& spec);

}  // namespace bootperc
