#include "bootperc/lattice.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bootperc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// UpdateFamily

UpdateFamily::UpdateFamily(int dim, std::vector<Rule> rules) : dim_(dim), rules_(std::move(rules)) {
  if (dim_ < 1) throw ValidationError("family dimension must be positive");
  std::set<Rule> seen_rules;
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    const Rule& rule = rules_[r];
    if (rule.empty()) throw ValidationError("rule " + std::to_string(r) + " is empty");
    std::set<IVec> seen_sites;
    for (const IVec& x : rule) {
      if (static_cast<int>(x.size()) != dim_)
        throw ValidationError("rule " + std::to_string(r) + " has a vector of length " +
                              std::to_string(x.size()) + ", expected " + std::to_string(dim_));
      if (std::all_of(x.begin(), x.end(), [](std::int64_t v) { return v == 0; }))
        throw ValidationError("rule " + std::to_string(r) +
                              ": origin not allowed (rules are subsets of Z^d minus the origin)");
      if (!seen_sites.insert(x).second)
        throw ValidationError("rule " + std::to_string(r) + " repeats a site");
    }
    Rule canonical(seen_sites.begin(), seen_sites.end());
    if (!seen_rules.insert(canonical).second)
      throw ValidationError("rule " + std::to_string(r) + " duplicates an earlier rule");
  }
}

double UpdateFamily::radius() const {
  double r = 0.0;
  for (const Rule& rule : rules_)
    for (const IVec& x : rule) r = std::max(r, norm(x));
  return r;
}

std::int64_t UpdateFamily::radius_ceil() const {
  std::int64_t r = 0;
  for (const Rule& rule : rules_)
    for (const IVec& x : rule) {
      std::int64_t n2 = dot(x, x);
      std::int64_t c = isqrt(n2);
      if (c * c < n2) ++c;
      r = std::max(r, c);
    }
  return r;
}

std::string UpdateFamily::to_json() const {
  json j;
  j["d"] = dim_;
  j["rules"] = json::array();
  for (const Rule& rule : rules_) j["rules"].push_back(rule);
  return j.dump();
}

UpdateFamily neighbourhood_family(int d, int r) {
  if (d < 1) throw ParameterError("neighbourhood_family: d must be positive");
  if (r < 1 || r > 2 * d)
    throw ParameterError("neighbourhood_family: r must lie in [1, 2d], got " + std::to_string(r));
  std::vector<IVec> units;
  for (int i = 0; i < d; ++i)
    for (int sign : {1, -1}) {
      IVec e(d, 0);
      e[i] = sign;
      units.push_back(e);
    }
  std::vector<Rule> rules;
  std::vector<bool> pick(units.size(), false);
  std::fill(pick.begin(), pick.begin() + r, true);
  do {
    Rule rule;
    for (std::size_t i = 0; i < units.size(); ++i)
      if (pick[i]) rule.push_back(units[i]);
    rules.push_back(rule);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return UpdateFamily(d, std::move(rules));
}

UpdateFamily parse_family(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("family document: ") + e.what());
  }
  if (!j.is_object() || !j.contains("d") || !j.contains("rules"))
    throw ParseError("family document: expected an object with keys \"d\" and \"rules\"");
  if (!j["d"].is_number_integer()) throw ParseError("family document: \"d\" must be an integer");
  if (!j["rules"].is_array()) throw ParseError("family document: \"rules\" must be an array");
  const int d = j["d"].get<int>();
  std::vector<Rule> rules;
  for (std::size_t r = 0; r < j["rules"].size(); ++r) {
    const json& jr = j["rules"][r];
    if (!jr.is_array()) throw ParseError("family document: rules[" + std::to_string(r) + "] must be an array");
    Rule rule;
    for (std::size_t s = 0; s < jr.size(); ++s) {
      const json& js = jr[s];
      const std::string where = "rules[" + std::to_string(r) + "][" + std::to_string(s) + "]";
      if (!js.is_array()) throw ParseError("family document: " + where + " must be an integer vector");
      IVec x;
      for (const json& c : js) {
        if (!c.is_number_integer()) throw ParseError("family document: " + where + " has a non-integer entry");
        x.push_back(c.get<std::int64_t>());
      }
      rule.push_back(std::move(x));
    }
    rules.push_back(std::move(rule));
  }
  return UpdateFamily(d, std::move(rules));
}

UpdateFamily load_family(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open family file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_family(ss.str());
}

// ---------------------------------------------------------------------------
// LatticeWindow

namespace {

std::string join(const IVec& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

IVec split_ints(std::string_view text, char sep) {
  IVec out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw ParseError("bad integer '" + item + "'");
    } catch (const std::logic_error&) {
      throw ParseError("bad integer '" + item + "'");
    }
  }
  return out;
}

}  // namespace

std::string policy_to_string(const BoundaryPolicy& policy) {
  if (std::holds_alternative<FreeBoundary>(policy)) return "free";
  if (std::holds_alternative<TorusBoundary>(policy)) return "torus";
  const auto& h = std::get<HalfSpaceBoundary>(policy);
  return "halfspace:" + join(h.normal, ',') + ":" + std::to_string(h.offset);
}

BoundaryPolicy policy_from_string(std::string_view text) {
  if (text == "free") return FreeBoundary{};
  if (text == "torus") return TorusBoundary{};
  if (text.starts_with("halfspace:")) {
    auto rest = text.substr(10);
    auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw ParseError("halfspace policy needs normal and offset");
    HalfSpaceBoundary h;
    h.normal = split_ints(rest.substr(0, colon), ',');
    IVec off = split_ints(rest.substr(colon + 1), ',');
    if (off.size() != 1) throw ParseError("halfspace policy offset must be one integer");
    h.offset = off[0];
    return h;
  }
  throw ParseError("unknown boundary policy '" + std::string(text) + "'");
}

LatticeWindow::LatticeWindow(IVec lower, IVec upper, BoundaryPolicy policy)
    : lower_(std::move(lower)), upper_(std::move(upper)), policy_(std::move(policy)) {
  if (lower_.empty() || lower_.size() != upper_.size())
    throw ParameterError("window corners must be non-empty and of equal dimension");
  const int d = dim();
  strides_.assign(d, 1);
  volume_ = 1;
  for (int i = d - 1; i >= 0; --i) {
    if (lower_[i] >= upper_[i]) throw ParameterError("window lower corner must be below the upper corner");
    strides_[i] = volume_;
    const auto e = static_cast<std::uint64_t>(upper_[i] - lower_[i]);
    if (volume_ > std::numeric_limits<std::uint64_t>::max() / e) throw ParameterError("window volume overflows");
    volume_ *= e;
  }
  if (auto* h = std::get_if<HalfSpaceBoundary>(&policy_)) {
    if (static_cast<int>(h->normal.size()) != d) throw ParameterError("half-space normal has the wrong dimension");
  }
}

LatticeWindow LatticeWindow::cube(int d, std::int64_t n, BoundaryPolicy policy) {
  return LatticeWindow(IVec(d, 0), IVec(d, n), std::move(policy));
}

LatticeWindow LatticeWindow::centered(int d, std::int64_t half, BoundaryPolicy policy) {
  return LatticeWindow(IVec(d, -half), IVec(d, half), std::move(policy));
}

bool LatticeWindow::contains(const IVec& x) const {
  for (int i = 0; i < dim(); ++i)
    if (x[i] < lower_[i] || x[i] >= upper_[i]) return false;
  return true;
}

std::uint64_t LatticeWindow::index(const IVec& x) const {
  std::uint64_t idx = 0;
  for (int i = 0; i < dim(); ++i) idx += static_cast<std::uint64_t>(x[i] - lower_[i]) * strides_[i];
  return idx;
}

IVec LatticeWindow::site(std::uint64_t index) const {
  IVec x(dim());
  for (int i = 0; i < dim(); ++i) {
    x[i] = lower_[i] + static_cast<std::int64_t>(index / strides_[i]);
    index %= strides_[i];
  }
  return x;
}

LatticeWindow LatticeWindow::with_policy(BoundaryPolicy policy) const {
  return LatticeWindow(lower_, upper_, std::move(policy));
}

bool LatticeWindow::operator==(const LatticeWindow& other) const {
  return lower_ == other.lower_ && upper_ == other.upper_ && policy_ == other.policy_;
}

// ---------------------------------------------------------------------------
// Configuration

Configuration::Configuration(LatticeWindow window)
    : window_(std::move(window)), words_((window_.volume() + 63) / 64, 0) {}

void Configuration::infect(const IVec& x) {
  if (!window_.contains(x)) throw ParameterError("site outside the window");
  infect(window_.index(x));
}

std::uint64_t Configuration::count() const {
  std::uint64_t n = 0;
  for (auto w : words_) n += static_cast<std::uint64_t>(__builtin_popcountll(w));
  return n;
}

std::vector<std::uint64_t> Configuration::infected_indices() const {
  std::vector<std::uint64_t> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t bits = words_[w];
    while (bits) {
      const int b = __builtin_ctzll(bits);
      out.push_back(w * 64 + static_cast<std::uint64_t>(b));
      bits &= bits - 1;
    }
  }
  return out;
}

std::vector<IVec> Configuration::sites() const {
  std::vector<IVec> out;
  for (auto idx : infected_indices()) out.push_back(window_.site(idx));
  return out;
}

bool Configuration::subset_of(const Configuration& other) const {
  if (!(window_.lower() == other.window_.lower() && window_.upper() == other.window_.upper()))
    throw ParameterError("subset_of: windows differ");
  for (std::size_t w = 0; w < words_.size(); ++w)
    if (words_[w] & ~other.words_[w]) return false;
  return true;
}

Configuration& Configuration::operator|=(const Configuration& other) {
  if (!(window_.lower() == other.window_.lower() && window_.upper() == other.window_.upper()))
    throw ParameterError("union: windows differ");
  for (std::size_t w = 0; w < words_.size(); ++w) words_[w] |= other.words_[w];
  return *this;
}

bool Configuration::operator==(const Configuration& other) const {
  return window_ == other.window_ && words_ == other.words_;
}

// ---------------------------------------------------------------------------
// Dynamics

namespace {

// Precomputed view of a family against one window. Sites far enough from the
// window faces use flat index offsets; the rest go through coordinates and the
// boundary policy.
class Engine {
 public:
  Engine(const LatticeWindow& w, const UpdateFamily& f) : w_(w), d_(w.dim()) {
    if (f.dim() != w.dim())
      throw ParameterError("dimension mismatch: family is " + std::to_string(f.dim()) + "-dimensional, window " +
                           std::to_string(w.dim()) + "-dimensional");
    lo_reach_.assign(d_, 0);
    hi_reach_.assign(d_, 0);
    std::set<IVec> reverse;
    for (const Rule& rule : f.rules()) {
      std::vector<std::int64_t> offs;
      for (const IVec& s : rule) {
        offs.push_back(linear(s));
        for (int i = 0; i < d_; ++i) {
          lo_reach_[i] = std::min(lo_reach_[i], s[i]);
          hi_reach_[i] = std::max(hi_reach_[i], s[i]);
        }
        IVec neg(s);
        for (auto& v : neg) v = -v;
        reverse.insert(neg);
      }
      rules_.push_back(rule);
      rule_offsets_.push_back(std::move(offs));
    }
    reverse_.assign(reverse.begin(), reverse.end());
    for (const IVec& r : reverse_) reverse_offsets_.push_back(linear(r));
    halfspace_ = std::get_if<HalfSpaceBoundary>(&w.policy());
    torus_ = w.is_torus();
  }

  // Does some rule translate at `idx` lie entirely in the infected set?
  bool fires(const Configuration& c, std::uint64_t idx, IVec& x, IVec& y) const {
    coords(idx, x);
    if (interior(x, lo_reach_, hi_reach_)) {
      for (const auto& offs : rule_offsets_) {
        bool all = true;
        for (auto o : offs)
          if (!c.infected(static_cast<std::uint64_t>(static_cast<std::int64_t>(idx) + o))) {
            all = false;
            break;
          }
        if (all) return true;
      }
      return false;
    }
    for (const Rule& rule : rules_) {
      bool all = true;
      for (const IVec& s : rule) {
        for (int i = 0; i < d_; ++i) y[i] = x[i] + s[i];
        if (!state(c, y)) {
          all = false;
          break;
        }
      }
      if (all) return true;
    }
    return false;
  }

  // Calls visit(j) for each in-window site j that could newly fire because
  // `idx` became infected.
  template <class F>
  void for_dependents(std::uint64_t idx, IVec& x, IVec& y, F&& visit) const {
    coords(idx, x);
    if (interior(x, neg_hi(), neg_lo())) {
      for (auto o : reverse_offsets_) visit(static_cast<std::uint64_t>(static_cast<std::int64_t>(idx) + o));
      return;
    }
    for (const IVec& r : reverse_) {
      for (int i = 0; i < d_; ++i) y[i] = x[i] + r[i];
      if (torus_) wrap(y);
      if (w_.contains(y)) visit(w_.index(y));
    }
  }

  bool is_halfspace() const { return halfspace_ != nullptr; }

 private:
  std::int64_t linear(const IVec& s) const {
    std::int64_t o = 0;
    for (int i = 0; i < d_; ++i) o += s[i] * static_cast<std::int64_t>(w_.stride(i));
    return o;
  }

  void coords(std::uint64_t idx, IVec& x) const {
    for (int i = 0; i < d_; ++i) {
      x[i] = w_.lower()[i] + static_cast<std::int64_t>(idx / w_.stride(i));
      idx %= w_.stride(i);
    }
  }

  bool interior(const IVec& x, const IVec& lo, const IVec& hi) const {
    for (int i = 0; i < d_; ++i)
      if (x[i] + lo[i] < w_.lower()[i] || x[i] + hi[i] >= w_.upper()[i]) return false;
    return true;
  }

  IVec neg_hi() const {
    IVec v(hi_reach_);
    for (auto& e : v) e = -e;
    return v;
  }
  IVec neg_lo() const {
    IVec v(lo_reach_);
    for (auto& e : v) e = -e;
    return v;
  }

  void wrap(IVec& y) const {
    for (int i = 0; i < d_; ++i) {
      const std::int64_t n = w_.extent(i);
      y[i] = w_.lower()[i] + ((y[i] - w_.lower()[i]) % n + n) % n;
    }
  }

  bool state(const Configuration& c, IVec& y) const {
    if (w_.contains(y)) return c.infected(w_.index(y));
    if (torus_) {
      wrap(y);
      return c.infected(w_.index(y));
    }
    if (halfspace_) return dot(y, halfspace_->normal) < halfspace_->offset;
    return false;
  }

  const LatticeWindow& w_;
  int d_;
  std::vector<Rule> rules_;
  std::vector<std::vector<std::int64_t>> rule_offsets_;
  std::vector<IVec> reverse_;
  std::vector<std::int64_t> reverse_offsets_;
  IVec lo_reach_, hi_reach_;
  const HalfSpaceBoundary* halfspace_ = nullptr;
  bool torus_ = false;
};

}  // namespace

Configuration step(const Configuration& c, const UpdateFamily& family) {
  Engine engine(c.window(), family);
  Configuration next = c;
  IVec x(c.dim()), y(c.dim());
  const std::uint64_t n = c.window().volume();
  for (std::uint64_t i = 0; i < n; ++i)
    if (!c.infected(i) && engine.fires(c, i, x, y)) next.infect(i);
  return next;
}

Configuration closure(const Configuration& c, const UpdateFamily& family) {
  Engine engine(c.window(), family);
  Configuration out = c;
  if (family.empty()) return out;

  const std::uint64_t n = c.window().volume();
  std::vector<std::uint64_t> stack;
  std::vector<std::uint8_t> queued(n, 0);
  IVec x(c.dim()), y(c.dim());
  auto push = [&](std::uint64_t j) {
    if (!queued[j] && !out.infected(j)) {
      queued[j] = 1;
      stack.push_back(j);
    }
  };

  if (engine.is_halfspace()) {
    // Off-window infected sites can enable any border site, so start from all.
    for (std::uint64_t i = n; i-- > 0;) push(i);
  } else {
    for (auto idx : c.infected_indices()) engine.for_dependents(idx, x, y, push);
  }

  while (!stack.empty()) {
    const std::uint64_t j = stack.back();
    stack.pop_back();
    queued[j] = 0;
    if (out.infected(j) || !engine.fires(out, j, x, y)) continue;
    out.infect(j);
    engine.for_dependents(j, x, y, push);
  }
  return out;
}

bool percolates(const Configuration& c, const UpdateFamily& family) { return closure(c, family).full(); }

// ---------------------------------------------------------------------------
// Snapshots

std::string write_snapshot(const Configuration& c) {
  std::string out = "# window lower=" + join(c.window().lower(), ',') + " upper=" + join(c.window().upper(), ',') +
                    " policy=" + policy_to_string(c.window().policy()) + "\n";
  for (const IVec& x : c.sites()) out += join(x, ' ') + "\n";
  return out;
}

Configuration read_snapshot(std::string_view text) {
  std::stringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# window "))
    throw ParseError("snapshot line 1: expected '# window lower=... upper=... policy=...'");
  IVec lower, upper;
  BoundaryPolicy policy = FreeBoundary{};
  std::stringstream header(line.substr(9));
  std::string field;
  while (header >> field) {
    if (field.starts_with("lower="))
      lower = split_ints(field.substr(6), ',');
    else if (field.starts_with("upper="))
      upper = split_ints(field.substr(6), ',');
    else if (field.starts_with("policy="))
      policy = policy_from_string(field.substr(7));
    else
      throw ParseError("snapshot line 1: unknown field '" + field + "'");
  }
  Configuration c(LatticeWindow(lower, upper, policy));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    IVec x = split_ints(line, ' ');
    if (static_cast<int>(x.size()) != c.dim())
      throw ParseError("snapshot line " + std::to_string(lineno) + ": expected " + std::to_string(c.dim()) +
                       " coordinates");
    if (!c.window().contains(x))
      throw ParseError("snapshot line " + std::to_string(lineno) + ": site outside the window");
    c.infect(x);
  }
  return c;
}

}  // namespace bootperc
