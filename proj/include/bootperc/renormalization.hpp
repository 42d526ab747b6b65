#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bootperc/common.hpp"
#include "bootperc/lattice.hpp"
#include "bootperc/stats.hpp"

namespace bootperc {

/// An inequality the asymptotic argument needs but desk-scale parameters may
/// violate. Recorded, never fatal.
struct SideCondition {
  std::string name;
  int level = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = true;
};

/// Side lengths Delta_k and gaps g_k = Delta_k^beta. Levels 1..k_max+1 are
/// stored because clusters at k_max are defined against (k_max+1)-cubes.
struct ScaleSchedule {
  int d = 0;
  double p = 0.0;
  double beta = 0.0;
  int k_max = 0;
  std::vector<std::int64_t> deltas;  // deltas[k-1] = Delta_k
  std::vector<double> gaps;          // gaps[k-1] = g_k
  std::vector<SideCondition> side_conditions;

  std::int64_t delta(int k) const;
  double gap(int k) const;
  int levels() const { return static_cast<int>(deltas.size()); }

  std::string to_json() const;
  std::uint64_t hash() const;
};

/// Delta_1 = floor(p^(-1/(3d+2))) unless overridden, Delta_{k+1} =
/// floor(sqrt(Delta_k)) * Delta_k. p is only checked when it sizes Delta_1.
ScaleSchedule build_schedule(int d, double p, double beta, int k_max,
                             std::optional<std::int64_t> delta1_override = std::nullopt);

/// sum_{i<k} (g_i + sqrt(d) Delta_i): sites farther than this from a (k)-cube
/// cannot affect its state.
double influence_radius(const ScaleSchedule& s, int k);

enum class CubeState : std::uint8_t { good, bad, indeterminate };
const char* to_string(CubeState s);

/// How to treat lattice sites outside the configuration's window.
enum class Outside {
  empty,    // the configuration is all of A (planted sets); no cube is indeterminate
  unknown,  // A continues unseen outside; cubes that depend on it are indeterminate
};

/// Closed box [c*side, (c+1)*side]^d of a cube, as reals.
std::pair<Vec, Vec> cube_box(std::int64_t side, const IVec& c);
/// Closed cubes touch (set distance zero).
bool cubes_adjacent(const IVec& a, const IVec& b);
/// Squared set distance between closed cubes of sides sa and sb, exact.
std::int64_t cube_distance2(std::int64_t sa, const IVec& a, std::int64_t sb, const IVec& b);

struct CubeLevel {
  int k = 0;
  std::int64_t side = 0;
  IVec lo, hi;  // index range [lo, hi)
  std::vector<CubeState> states;
  std::map<std::uint64_t, std::pair<IVec, IVec>> witnesses;

  bool in_range(const IVec& c) const;
  std::uint64_t flat(const IVec& c) const;
  IVec cube_at(std::uint64_t flat) const;
};

class CubeHierarchy {
 public:
  CubeHierarchy(ScaleSchedule schedule, Outside outside, std::vector<CubeLevel> levels)
      : schedule_(std::move(schedule)), outside_(outside), levels_(std::move(levels)) {}

  const ScaleSchedule& schedule() const { return schedule_; }
  Outside outside() const { return outside_; }
  int levels() const { return static_cast<int>(levels_.size()); }
  const CubeLevel& level(int k) const;

  /// Out-of-range cubes are good when outside is empty, else indeterminate.
  CubeState state(int k, const IVec& c) const;
  std::optional<std::pair<IVec, IVec>> witness(int k, const IVec& c) const;
  /// The (k)-cube containing lattice site x.
  IVec cube_of(int k, const IVec& x) const;

  std::vector<IVec> cubes(int k, CubeState s) const;
  std::int64_t count(int k, CubeState s) const;

 private:
  ScaleSchedule schedule_;
  Outside outside_;
  std::vector<CubeLevel> levels_;
};

/// Good/bad classification of every cube at levels 1..k_max+1 that can be
/// bad. Cubes live on the global lattice Delta_k Z^d, so the window need not
/// be aligned to any level.
CubeHierarchy classify(const Configuration& a, const ScaleSchedule& s, Outside outside = Outside::unknown);

/// A maximal set of pairwise-adjacent bad (k)-cubes.
struct BadCluster {
  int level = 0;
  std::vector<IVec> members;  // lexicographic order
  IVec anchor;                // lower corner of the first member
  bool meets_good_parent = false;
  bool touches_indeterminate = false;
};

/// All maximal cliques of bad (k)-cubes, whether or not they qualify.
std::vector<BadCluster> all_clusters(const CubeHierarchy& h, int k);
/// The clusters that touch a good (k+1)-cube and no indeterminate cube.
std::vector<BadCluster> extract_clusters(const CubeHierarchy& h, int k);

/// A p-random subset of the window, drawn by geometric skipping.
Configuration sample_bernoulli(const LatticeWindow& w, double p, std::uint64_t seed);

/// Smallest window around the (k)-cube with index 0 in which that cube's
/// state is determined.
LatticeWindow mc_window(const ScaleSchedule& s, int k);

struct BadProbability {
  std::int64_t trials = 0;
  std::int64_t bad = 0;
  double estimate = 0.0;
  Interval interval;
  double decay_bound = 0.0;  // Delta_k^-(2d+2)
  double exact_level1 = 0.0;  // 1 - (1-p)^(Delta_1^d)
};

/// Trial i samples A with seed stream_seed(seed, i) on mc_window(s, k) and
/// classifies the (k)-cube at index 0.
BadProbability mc_bad_probability(const ScaleSchedule& s, int k, double p, std::int64_t trials, std::uint64_t seed,
                                  int workers = 1);

struct IndependenceReport {
  std::int64_t trials = 0;
  double p_first = 0.0, p_second = 0.0, p_both = 0.0;
  double discrepancy = 0.0;  // P(both) - P(first) P(second)
  double sigma = 0.0;        // delta-method standard error
  double z = 0.0;
  bool regions_disjoint = false;
};

/// Shared-sample estimate of the covariance of badness of two (k)-cubes.
IndependenceReport independence_check(const ScaleSchedule& s, int k, const IVec& first, const IVec& second, double p,
                                       std::int64_t trials, std::uint64_t seed, int workers = 1);

}  // namespace bootperc
