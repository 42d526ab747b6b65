#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace bootperc {

/// Integer lattice vector in Z^d.
using IVec = std::vector<std::int64_t>;
/// Real vector in R^d.
using Vec = std::vector<double>;

/// A caller supplied an argument outside an operation's domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A structurally valid input violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed document; the message carries the location.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Vec to_real(const IVec& v) { return Vec(v.begin(), v.end()); }

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::int64_t dot(const IVec& a, const IVec& b) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
inline double norm(const IVec& a) { return std::sqrt(static_cast<double>(dot(a, a))); }

inline Vec operator-(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec operator+(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vec operator*(double s, const Vec& a) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

inline double distance(const Vec& a, const Vec& b) { return norm(a - b); }

/// Euclidean set distance between the closed boxes [alo, ahi] and [blo, bhi].
inline double box_distance(const Vec& alo, const Vec& ahi, const Vec& blo, const Vec& bhi) {
  double s = 0.0;
  for (std::size_t i = 0; i < alo.size(); ++i) {
    double gap = std::max({0.0, blo[i] - ahi[i], alo[i] - bhi[i]});
    s += gap * gap;
  }
  return std::sqrt(s);
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t isqrt(std::int64_t n) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

/// 64-bit FNV-1a, used for family and schedule fingerprints.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

/// Visits every integer vector in the box [lo, hi) in lexicographic order.
template <class F>
void for_each_index(const IVec& lo, const IVec& hi, F&& fn) {
  const std::size_t d = lo.size();
  for (std::size_t i = 0; i < d; ++i)
    if (lo[i] >= hi[i]) return;
  IVec v(lo);
  for (;;) {
    fn(static_cast<const IVec&>(v));
    std::size_t i = d;
    while (i > 0) {
      --i;
      if (++v[i] < hi[i]) break;
      v[i] = lo[i];
      if (i == 0) return;
    }
    if (d == 0) return;
  }
}

}  // namespace bootperc
