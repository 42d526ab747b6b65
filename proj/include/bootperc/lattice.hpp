#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bootperc/common.hpp"

namespace bootperc {

/// A rule is a finite set of lattice vectors, none of them the origin.
using Rule = std::vector<IVec>;

/// Finite collection of update rules on Z^d. Immutable once built; the
/// constructor enforces every invariant so downstream code never re-checks.
class UpdateFamily {
 public:
  /// Throws ValidationError on an empty rule, an origin site, a duplicate site
  /// within a rule, a duplicate rule, or a dimension mismatch.
  UpdateFamily(int dim, std::vector<Rule> rules);

  int dim() const { return dim_; }
  const std::vector<Rule>& rules() const { return rules_; }
  bool empty() const { return rules_.empty(); }

  /// max ||x|| over all rule sites; 0 for the empty family.
  double radius() const;
  std::int64_t radius_ceil() const;

  std::string to_json() const;
  std::uint64_t hash() const { return fnv1a(to_json()); }

 private:
  int dim_;
  std::vector<Rule> rules_;
};

/// The r-neighbour family: every r-subset of the 2d unit vectors.
UpdateFamily neighbourhood_family(int d, int r);

/// Parses {"d": int, "rules": [[[int,...],...],...]}.
UpdateFamily parse_family(std::string_view text);
UpdateFamily load_family(const std::string& path);

struct FreeBoundary {
  bool operator==(const FreeBoundary&) const = default;
};
struct TorusBoundary {
  bool operator==(const TorusBoundary&) const = default;
};
/// Off-window sites x with <x, normal> < offset count as infected, all other
/// off-window sites as healthy.
struct HalfSpaceBoundary {
  IVec normal;
  std::int64_t offset = 0;
  bool operator==(const HalfSpaceBoundary&) const = default;
};
using BoundaryPolicy = std::variant<FreeBoundary, TorusBoundary, HalfSpaceBoundary>;

std::string policy_to_string(const BoundaryPolicy& policy);
BoundaryPolicy policy_from_string(std::string_view text);

/// Axis-aligned box [lower, upper) of Z^d with a boundary policy.
class LatticeWindow {
 public:
  LatticeWindow(IVec lower, IVec upper, BoundaryPolicy policy = FreeBoundary{});

  /// [0, n)^d
  static LatticeWindow cube(int d, std::int64_t n, BoundaryPolicy policy = FreeBoundary{});
  /// [-half, half)^d
  static LatticeWindow centered(int d, std::int64_t half, BoundaryPolicy policy = FreeBoundary{});

  int dim() const { return static_cast<int>(lower_.size()); }
  const IVec& lower() const { return lower_; }
  const IVec& upper() const { return upper_; }
  std::int64_t extent(int axis) const { return upper_[axis] - lower_[axis]; }
  std::uint64_t volume() const { return volume_; }
  const BoundaryPolicy& policy() const { return policy_; }
  bool is_torus() const { return std::holds_alternative<TorusBoundary>(policy_); }

  bool contains(const IVec& x) const;
  /// Row-major index from the lower corner; the last axis varies fastest.
  std::uint64_t index(const IVec& x) const;
  IVec site(std::uint64_t index) const;
  std::uint64_t stride(int axis) const { return strides_[axis]; }

  LatticeWindow with_policy(BoundaryPolicy policy) const;
  bool operator==(const LatticeWindow& other) const;

 private:
  IVec lower_, upper_;
  BoundaryPolicy policy_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t volume_ = 0;
};

/// Dense bit-state over a window.
class Configuration {
 public:
  explicit Configuration(LatticeWindow window);

  const LatticeWindow& window() const { return window_; }
  int dim() const { return window_.dim(); }

  bool infected(std::uint64_t index) const { return (words_[index >> 6] >> (index & 63)) & 1U; }
  bool infected(const IVec& x) const { return window_.contains(x) && infected(window_.index(x)); }
  void infect(std::uint64_t index) { words_[index >> 6] |= std::uint64_t{1} << (index & 63); }
  void infect(const IVec& x);
  void clear(std::uint64_t index) { words_[index >> 6] &= ~(std::uint64_t{1} << (index & 63)); }

  std::uint64_t count() const;
  bool full() const { return count() == window_.volume(); }
  /// Infected sites in index order.
  std::vector<IVec> sites() const;
  std::vector<std::uint64_t> infected_indices() const;

  bool subset_of(const Configuration& other) const;
  Configuration& operator|=(const Configuration& other);
  bool operator==(const Configuration& other) const;

  const std::vector<std::uint64_t>& words() const { return words_; }

 private:
  LatticeWindow window_;
  std::vector<std::uint64_t> words_;
};

/// One synchronous update: A_t from A_{t-1}.
Configuration step(const Configuration& c, const UpdateFamily& family);

/// Least fixed point of step containing c, computed with a work queue that
/// re-tests only sites that a newly infected site can help.
Configuration closure(const Configuration& c, const UpdateFamily& family);

/// True iff the closure fills the whole window.
bool percolates(const Configuration& c, const UpdateFamily& family);

/// Snapshot text: a header "# window lower=a,b upper=c,d policy=..." then one
/// "x1 x2 ... xd" line per infected site.
std::string write_snapshot(const Configuration& c);
Configuration read_snapshot(std::string_view text);

}  // namespace bootperc
