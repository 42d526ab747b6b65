#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bootperc/common.hpp"
#include "bootperc/lattice.hpp"
#include "bootperc/renormalization.hpp"
#include "bootperc/stability.hpp"

namespace bootperc {

/// cos(x)^2 on [-pi/2, pi/2], zero outside.
double bump(double x);

/// Hyperplane {<x,u> = lambda} raised by bumps of height 16 gamma Delta_i and
/// support radius (pi/64) g_i around the points of Z_i, i = 1..k.
class Pinch {
 public:
  Pinch(Direction u, double lambda, double gamma, ScaleSchedule schedule, int k,
        std::vector<std::vector<Vec>> z = {});

  const Direction& direction() const { return u_; }
  const Vec& u() const { return u_.u; }
  double lambda() const { return lambda_; }
  double gamma() const { return gamma_; }
  const ScaleSchedule& schedule() const { return schedule_; }
  int k() const { return k_; }
  /// Z_i for 1 <= i <= k.
  const std::vector<Vec>& z(int i) const;
  void set_z(int i, std::vector<Vec> points);
  std::size_t bump_count() const;

  Vec project(const Vec& y) const;
  /// Partial height h_j at proj(x); h_{k+1} is the constant lambda.
  double height(const Vec& x, int j = 1) const;
  /// Bump amplitude 16 gamma Delta_i and support radius (pi/64) g_i.
  double amplitude(int i) const;
  double support(int i) const;
  /// Lipschitz bound 2^10 gamma Delta_j^(1-beta) for h_j.
  double lipschitz(int j) const;
  /// Bound on |grad h| over the ball of the given radius about proj(centre),
  /// counting only bumps whose support reaches it. Zero on flat stretches.
  double slope_bound_near(const Vec& centre, double radius) const;

  /// Strict: <y,u> < h(proj y).
  bool in_range(const Vec& y) const;
  bool in_range(const IVec& y) const { return in_range(to_real(y)); }
  /// h(proj y) - <y,u>: positive inside, its magnitude the distance along u.
  double gap(const Vec& y) const;
  /// |<y,u> - h(proj y)| <= c Delta_i.
  bool in_slab(const Vec& y, double c, int i) const;

  /// First pair of points closer than g_i/2 at some level, if any.
  std::optional<std::string> separation_violation() const;

  std::string to_json() const;
  static Pinch from_json(std::string_view text);

 private:
  Direction u_;
  double lambda_;
  double gamma_;
  ScaleSchedule schedule_;
  int k_;
  std::vector<std::vector<Vec>> z_;
};

/// The slope hypothesis under which every range in a direction with margin
/// epsilon is closed: 2^10 gamma Delta_1^(1-beta) <= sin(epsilon) / 2.
bool closedness_slope_condition(const ScaleSchedule& s, double gamma, double epsilon);
/// Smallest Delta_1 meeting that condition for the given gamma, epsilon, beta.
std::int64_t min_delta1_for_closedness(double gamma, double epsilon, double beta);

/// Orthonormal basis of the hyperplane perpendicular to u.
std::vector<Vec> hyperplane_basis(const Vec& u);

struct HeightBoundsReport {
  std::int64_t samples = 0;
  std::vector<std::string> violations;
  // worst observed value / bound for each inequality
  double level_step_ratio = 0.0;
  double total_ratio = 0.0;
  double lipschitz_ratio = 0.0;
  double gradient_ratio = 0.0;
  bool ok() const { return violations.empty(); }
};

/// Samples points near and away from bumps and checks the step, total
/// displacement and Lipschitz bounds on every partial height, plus
/// finite-difference gradients against the Lipschitz bound (+1e-6).
HeightBoundsReport verify_height_bounds(const Pinch& pinch, std::int64_t samples, std::uint64_t seed);

struct ClosureViolation {
  IVec site;
  std::size_t rule = 0;
};

/// Every lattice x in the window outside the range such that some rule
/// translate x + X lies inside the range. Membership of sites beyond the
/// window is evaluated directly, so no margin is needed.
std::vector<ClosureViolation> verify_range_closed(const Pinch& pinch, const LatticeWindow& window,
                                                  const UpdateFamily& family);

}  // namespace bootperc
