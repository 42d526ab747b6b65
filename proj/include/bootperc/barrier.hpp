#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bootperc/common.hpp"
#include "bootperc/lattice.hpp"
#include "bootperc/pinch.hpp"
#include "bootperc/renormalization.hpp"
#include "bootperc/stability.hpp"

namespace bootperc {

/// A finite-checkable step of the construction failed. `check` names it
/// ("hypothesis", "separation", "slab-goodness", "precondition", ...).
class BarrierError : public std::runtime_error {
 public:
  BarrierError(std::string check, int level, std::string detail);
  const std::string& check() const { return check_; }
  int level() const { return level_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string check_;
  int level_;
  std::string detail_;
};

/// Outcome of one runtime assertion.
struct Check {
  std::string name;
  bool passed = true;
  std::string detail;
};

enum class Tri { no, yes, unknown };

/// Does the closed box [lo, hi] meet the slab {|gap| <= band} of the pinch?
/// Branch and bound on local slope bounds: `yes` comes with a witness point,
/// `unknown` means the subdivision budget ran out.
Tri box_meets_slab(const Pinch& pinch, const Vec& lo, const Vec& hi, double band, Vec* witness = nullptr);

/// Intersection of ranges, one per direction.
struct RangeSet {
  std::vector<Pinch> ranges;
  bool contains(const Vec& x) const;
  bool contains(const IVec& x) const { return contains(to_real(x)); }
};

/// Whether the closed rho-neighbourhood of the box [lo, hi] meets the
/// region, its complement, or could not be resolved.
struct NeighbourhoodProbe {
  bool meets_inside = false;
  bool meets_outside = false;
  bool unresolved = false;
  Vec inside_witness, outside_witness;
  bool crosses_boundary() const { return meets_inside && meets_outside; }
};
NeighbourhoodProbe probe_neighbourhood(const RangeSet& region, const Vec& lo, const Vec& hi, double rho);

struct ExtendReport {
  int level = 0;
  std::vector<IVec> chosen;   // y_P for lattice choices
  std::vector<Vec> points;    // Z_i
  int fallbacks = 0;          // clusters whose point is not a lattice site
  std::vector<std::string> notes;
};

/// Adds Z_i to `sigma` (levels i+1..k already set, Z_i empty): one point per
/// maximal bad (i)-clique meeting sigma + 4 gamma L^(i), projected onto the
/// base hyperplane. Checks the (i+1)-cube hypothesis first and asserts
/// i-separation and (i)-cube goodness of the new slab afterwards.
ExtendReport extend_pinch(Pinch& sigma, int i, const CubeHierarchy& h);

struct PinchConstruction {
  Pinch pinch;
  std::vector<ExtendReport> steps;  // level k first
};

/// Flat pinch at offset lambda, then extend_pinch at levels k, k-1, ..., 1.
/// Finally asserts that every (i)-cube meeting the 3 gamma L^(i) slab is good.
PinchConstruction construct_pinch(const Direction& u, double lambda, double gamma, const CubeHierarchy& h, int k);

struct Clearance {
  int level = 0;
  IVec cube;
  bool crosses = false;
  bool unresolved = false;
  Vec witness_inside, witness_outside;
};

struct Cover {
  int level = 0;
  BadCluster cluster;
  IVec anchor;  // x_Q
  RangeSet region;
  std::vector<PinchConstruction> constructions;
  std::vector<Clearance> clearance;
  std::vector<Check> checks;
  // lattice raster of the region over [box_lo, box_hi)
  IVec box_lo, box_hi;
  std::vector<std::uint64_t> raster;
  std::uint64_t raster_count = 0;

  bool ok() const;
  bool contains(const IVec& x) const;  // via the raster
  std::string to_json() const;
};

/// The (k)-cover of a qualifying cluster, with containment, nesting and
/// clearance checks recorded in `checks`. Throws BarrierError when a pinch
/// cannot be built or the cluster does not qualify.
Cover build_cover(const BadCluster& q, const Configuration& a, const CubeHierarchy& h,
                  const StabilityCertificate& cert);

/// Exterior lattice points of the window with a rule translate inside the cover.
std::vector<ClosureViolation> verify_cover_closed(const Cover& cover, const LatticeWindow& window,
                                                  const UpdateFamily& family);

enum class PairRelation { nested, strongly_disjoint, violation };
const char* to_string(PairRelation r);

struct PairCheck {
  PairRelation relation = PairRelation::violation;
  double distance = 0.0;  // lattice set distance when not nested
  IVec witness_a, witness_b;
};

/// Nested (either way) or lattice set distance > 2R, from the rasters.
PairCheck check_pairwise(const Cover& a, const Cover& b, double rule_radius);

struct GlobalCover {
  std::vector<Cover> covers;
  std::vector<Check> checks;
  std::vector<Check> side_conditions;  // constant-chain inequalities; reported, never fatal
  std::vector<std::string> failed_covers;
  LatticeWindow verify_window{IVec{0}, IVec{1}};
  Configuration region{LatticeWindow(IVec{0}, IVec{1})};
  std::vector<IVec> uncovered;
  std::int64_t uncovered_count = 0;
  bool origin_in_region = false;

  bool ok() const;
  std::string to_json() const;
  /// One "PASS|FAIL name: detail" line per check.
  std::string report() const;
};

/// Classifies A, builds a cover for every qualifying cluster at levels
/// 1..k_max, checks every pair, rasterises the union T over the window
/// widened by gamma Delta_kmax + R, and checks that T_Z is closed, that
/// [A] is inside T, and that the origin is outside T when no bad (k)-cube
/// lies within 2 gamma Delta_k of it.
GlobalCover build_global_cover(const Configuration& a, const ScaleSchedule& s, const StabilityCertificate& cert,
                               const UpdateFamily& family, Outside outside = Outside::empty);

}  // namespace bootperc
