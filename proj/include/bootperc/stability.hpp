#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bootperc/common.hpp"
#include "bootperc/lattice.hpp"

namespace bootperc {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Unit vector, optionally carrying the integer vector it normalizes.
struct Direction {
  Vec u;
  std::optional<IVec> rational;

  static Direction from_rational(const IVec& v);
  static Direction from_real(const Vec& v);
  int dim() const { return static_cast<int>(u.size()); }
};

enum class Stability { stable, unstable, uncertain };
const char* to_string(Stability s);

/// No rule lies in the open half-space {<x,u> < 0}. Exact for rational
/// directions; float directions report `uncertain` when a dot product lands
/// within 1e-9 of zero and could flip the answer.
Stability is_stable(const UpdateFamily& family, const Direction& u);

/// Simulates the half-space {<x,u> < 0} inside `window` (policy replaced by
/// the matching half-space policy) and reports whether it stays closed.
bool is_stable_simulated(const UpdateFamily& family, const Direction& u, const LatticeWindow& window);

/// min over rules of max over sites of <x,u>/|x|. A positive value m certifies
/// that every v with |u - v| <= m is stable.
double stability_margin(const UpdateFamily& family, const Direction& u);

/// min over rules and distinct site pairs of |<x-y,u>|/|x-y|; +inf if no rule
/// has two sites.
double f_margin(const UpdateFamily& family, const Direction& u);

/// Radius of the largest origin-centred ball inside conv(dirs); 0 if the
/// origin is not interior.
double coverage_radius(const std::vector<Vec>& dirs);

struct StabilityCertificate {
  int dim = 0;
  std::uint64_t family_hash = 0;
  std::vector<Direction> directions;
  std::vector<double> stability_margins;
  std::vector<double> f_margins;
  double epsilon = 0.0;
  double r_cov = 0.0;
  double gamma = 0.0;

  std::string to_json() const;
  static StabilityCertificate from_json(std::string_view text);
};

struct CertifyResult {
  std::optional<StabilityCertificate> certificate;
  std::string reason;  // set when certificate is empty
  std::int64_t candidates_examined = 0;
  explicit operator bool() const { return certificate.has_value(); }
};

/// Keeps candidates with both margins positive and certifies them if their
/// hull surrounds the origin. The empty family certifies with the +-e_i.
CertifyResult certify_strongly_stable_set(const UpdateFamily& family, const std::vector<Direction>& candidates);

/// Tries primitive integer directions shell by shell (sup-norm 1, 2, ...),
/// then seeded random unit vectors, until `budget` candidates are spent. At
/// each stage the retained set is the largest margin threshold whose
/// survivors still surround the origin, so epsilon is as large as the
/// candidates allow.
CertifyResult search_strongly_stable_set(const UpdateFamily& family, std::int64_t budget, std::uint64_t seed);

/// Radius of a ball about the origin containing {x : <x,u> <= 4d for u in S*},
/// floored at 2 sqrt(d) + 2. Exact vertex enumeration for d <= 3.
double compute_gamma(const StabilityCertificate& cert);

}  // namespace bootperc
