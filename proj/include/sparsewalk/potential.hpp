#pragma once

// Nonnegative bounded potentials V: finitely many explicit values over a tail rule, with a declared
// essential-value set.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparsewalk/error.hpp"
#include "sparsewalk/lattice.hpp"
#include "sparsewalk/parallel.hpp"

namespace sparsewalk {

enum class TailKind { None, Decaying, SparseSites, Constant };

inline std::string_view to_string(TailKind t) {
  switch (t) {
    case TailKind::None: return "none";
    case TailKind::Decaying: return "decaying";
    case TailKind::SparseSites: return "sparse";
    case TailKind::Constant: return "constant";
  }
  return "unknown";
}

/// V(x) = amplitude * exp(-rate |x|).
struct DecayingTail {
  double amplitude = 0.0;
  double rate = 1.0;
};

/// V = values[k mod n] at the sites +-base^k e_1 (every axis when all_axes), zero elsewhere.
struct SparseTail {
  int base = 2;
  std::vector<double> values;
  bool all_axes = false;
};

struct SiteValue {
  Site site{};
  double value = 0.0;
};

class PotentialSpec {
 public:
  PotentialSpec(int dim, int box_radius) : dim_(dim), box_radius_(box_radius) {
    if (dim < 1 || dim > kMaxDim) fail(Errc::InvalidArgument, "potential", "dimension must be in [1,3]");
    if (box_radius < 1) fail(Errc::InvalidArgument, "potential", "box radius must be positive");
  }

  int dim() const noexcept { return dim_; }
  int box_radius() const noexcept { return box_radius_; }
  LatticeBox box() const { return LatticeBox(dim_, box_radius_); }
  TailKind tail() const noexcept { return tail_; }
  const DecayingTail& decaying() const noexcept { return decaying_; }
  const SparseTail& sparse() const noexcept { return sparse_; }
  double constant_value() const noexcept { return constant_; }
  const std::map<Site, double>& explicit_values() const noexcept { return explicit_; }
  const std::vector<double>& declared_essential_values() const noexcept { return essential_; }
  /// ||V||_inf.
  double bound() const noexcept { return bound_; }
  /// v_0 = max of the declared essential values.
  double v0() const { return essential_.empty() ? 0.0 : *std::max_element(essential_.begin(), essential_.end()); }

  double operator()(const Site& x) const {
    if (auto it = explicit_.find(x); it != explicit_.end()) return it->second;
    return tail_value(x);
  }

  /// Sites of Q(0, radius) with V > 0, ordered by norm then lexicographically.
  std::vector<SiteValue> support(int radius) const {
    std::map<Site, double> found;
    const LatticeBox q(dim_, radius);
    switch (tail_) {
      case TailKind::None: break;
      case TailKind::SparseSites:
        for (const Site& s : sparse_sites(radius)) found[s] = tail_value(s);
        break;
      case TailKind::Decaying:
      case TailKind::Constant:
        for (std::size_t i = 0; i < q.size(); ++i) {
          const Site x = q.site(i);
          if (const double v = tail_value(x); v > 0.0) found[x] = v;
        }
        break;
    }
    for (const auto& [x, v] : explicit_) {
      if (!q.contains(x)) continue;
      if (v > 0.0) found[x] = v; else found.erase(x);
    }
    std::vector<SiteValue> out;
    out.reserve(found.size());
    for (const auto& [x, v] : found) out.push_back({x, v});
    std::sort(out.begin(), out.end(), [](const SiteValue& a, const SiteValue& b) { return norm_then_lex(a.site, b.site); });
    return out;
  }

  /// Values of V on every site of `box`, in the box's linear order.
  std::vector<double> on_box(const LatticeBox& box) const {
    std::vector<double> v(box.size(), 0.0);
    if (tail_ == TailKind::Decaying || tail_ == TailKind::Constant) {
      for (std::size_t i = 0; i < box.size(); ++i) v[i] = (*this)(box.site(i));
      return v;
    }
    const int reach = box.radius() + norm_inf(box.center());
    for (const auto& sv : support(reach)) {
      if (auto idx = box.index(sv.site)) v[*idx] = sv.value;
    }
    return v;
  }

  // builder access
  PotentialSpec& set_explicit(const Site& x, double v) {
    check_value(v);
    explicit_[x] = v;
    refresh_bound();
    return *this;
  }
  PotentialSpec& set_decaying(DecayingTail t) {
    check_value(t.amplitude);
    if (!(t.rate > 0.0)) fail(Errc::InvalidArgument, "potential", "decay rate must be positive");
    tail_ = TailKind::Decaying;
    decaying_ = t;
    essential_ = {0.0};
    refresh_bound();
    return *this;
  }
  PotentialSpec& set_sparse(SparseTail t) {
    if (t.base < 2) fail(Errc::InvalidArgument, "potential", "sparse base must be >= 2");
    if (t.values.empty()) fail(Errc::InvalidArgument, "potential", "sparse tail needs at least one value");
    for (double v : t.values) check_value(v);
    tail_ = TailKind::SparseSites;
    sparse_ = std::move(t);
    essential_ = {0.0};
    for (double v : sparse_.values) essential_.push_back(v);
    normalize_essential();
    refresh_bound();
    return *this;
  }
  PotentialSpec& set_constant(double v) {
    check_value(v);
    tail_ = TailKind::Constant;
    constant_ = v;
    essential_ = {v};
    refresh_bound();
    return *this;
  }

 private:
  static void check_value(double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(Errc::InvalidArgument, "potential", "potential values must be finite and >= 0");
  }

  void normalize_essential() {
    std::sort(essential_.begin(), essential_.end());
    essential_.erase(std::unique(essential_.begin(), essential_.end()), essential_.end());
  }

  void refresh_bound() {
    double b = 0.0;
    for (const auto& [x, v] : explicit_) b = std::max(b, v);
    switch (tail_) {
      case TailKind::None: break;
      case TailKind::Decaying: b = std::max(b, decaying_.amplitude); break;
      case TailKind::SparseSites:
        for (double v : sparse_.values) b = std::max(b, v);
        break;
      case TailKind::Constant: b = std::max(b, constant_); break;
    }
    bound_ = b;
  }

  double tail_value(const Site& x) const {
    switch (tail_) {
      case TailKind::None: return 0.0;
      case TailKind::Decaying: return decaying_.amplitude * std::exp(-decaying_.rate * norm2(x));
      case TailKind::Constant: return constant_;
      case TailKind::SparseSites: {
        int axis = -1;
        for (int a = 0; a < dim_; ++a) {
          if (x[static_cast<std::size_t>(a)] != 0) {
            if (axis >= 0) return 0.0;
            axis = a;
          }
        }
        if (axis < 0 || (axis > 0 && !sparse_.all_axes)) return 0.0;
        long m = std::abs(x[static_cast<std::size_t>(axis)]);
        std::size_t k = 0;
        while (m % sparse_.base == 0) {
          m /= sparse_.base;
          ++k;
        }
        if (m != 1) return 0.0;
        return sparse_.values[k % sparse_.values.size()];
      }
    }
    return 0.0;
  }

  std::vector<Site> sparse_sites(int radius) const {
    std::vector<Site> out;
    const int axes = sparse_.all_axes ? dim_ : 1;
    for (long p = 1, k = 0; p <= radius; p *= sparse_.base, ++k) {
      if (sparse_.values[static_cast<std::size_t>(k) % sparse_.values.size()] <= 0.0) continue;
      for (int a = 0; a < axes; ++a) {
        Site s{};
        s[static_cast<std::size_t>(a)] = static_cast<int>(p);
        out.push_back(s);
        out.push_back(-s);
      }
    }
    return out;
  }

  int dim_;
  int box_radius_;
  TailKind tail_ = TailKind::None;
  DecayingTail decaying_;
  SparseTail sparse_;
  double constant_ = 0.0;
  std::map<Site, double> explicit_;
  std::vector<double> essential_{0.0};
  double bound_ = 0.0;
};

// ---- builders

inline PotentialSpec build_zero(int dim, int box_radius) { return PotentialSpec(dim, box_radius); }

inline PotentialSpec build_single_delta(int dim, double v, int box_radius, Site at = kOrigin) {
  PotentialSpec s(dim, box_radius);
  s.set_explicit(at, v);
  return s;
}

/// V = v on +-base^k e_1 (optionally every axis), with an optional anchor site of value >= v.
inline PotentialSpec build_geometric_sparse(int dim, double v, int base, int box_radius,
                                            std::optional<SiteValue> anchor = std::nullopt, bool all_axes = false) {
  if (!(v > 0.0)) fail(Errc::InvalidArgument, "potential", "sparse value must be positive");
  PotentialSpec s(dim, box_radius);
  s.set_sparse({base, {v}, all_axes});
  if (anchor) {
    if (anchor->value < v) {
      fail(Errc::AnchorBelowV0, "potential",
           "anchor value " + std::to_string(anchor->value) + " is below v0=" + std::to_string(v));
    }
    s.set_explicit(anchor->site, anchor->value);
  }
  return s;
}

/// Sparse sites carrying a repeating value sequence, e.g. {1, 0.5} alternating.
inline PotentialSpec build_sparse_values(int dim, int base, std::vector<double> values, int box_radius,
                                         bool all_axes = false) {
  PotentialSpec s(dim, box_radius);
  s.set_sparse({base, std::move(values), all_axes});
  return s;
}

inline PotentialSpec build_decaying(int dim, double amplitude, double rate, int box_radius) {
  PotentialSpec s(dim, box_radius);
  s.set_decaying({amplitude, rate});
  return s;
}

inline PotentialSpec build_constant(int dim, double v, int box_radius) {
  PotentialSpec s(dim, box_radius);
  s.set_constant(v);
  return s;
}

inline PotentialSpec build_explicit(int dim, const std::vector<SiteValue>& values, int box_radius) {
  PotentialSpec s(dim, box_radius);
  for (const auto& sv : values) s.set_explicit(sv.site, sv.value);
  return s;
}

// ---- queries

struct V0Report {
  double declared = 0.0;
  std::vector<double> empirical;
  bool consistent = true;  // empirical >= declared - 1e-12 at every radius (sparse tails only)
};

/// empirical(n) = sup of V over box sites with |x| >= radii[n].
inline V0Report v0_of(const PotentialSpec& spec, const std::vector<double>& radii) {
  V0Report rep;
  rep.declared = spec.v0();
  const auto sup_beyond = [&](double r) {
    double m = 0.0;
    if (spec.tail() == TailKind::Decaying || spec.tail() == TailKind::Constant) {
      const LatticeBox box = spec.box();
      for (std::size_t i = 0; i < box.size(); ++i) {
        const Site x = box.site(i);
        if (norm2(x) >= r) m = std::max(m, spec(x));
      }
    } else {
      for (const auto& sv : spec.support(spec.box_radius())) {
        if (norm2(sv.site) >= r) m = std::max(m, sv.value);
      }
    }
    return m;
  };
  for (double r : radii) {
    if (r > spec.box_radius()) fail(Errc::InvalidArgument, "potential", "radius exceeds the working box");
    rep.empirical.push_back(sup_beyond(r));
    if (spec.tail() == TailKind::SparseSites && rep.empirical.back() < rep.declared - 1e-12) rep.consistent = false;
  }
  return rep;
}

struct SparsenessProfile {
  double epsilon = 0.0;
  std::vector<std::pair<Site, double>> samples;  // (x, a_eps(x)) over the support
  std::vector<double> radii;                      // R = box/8, box/4, box/2
  std::vector<double> sup_tail;                   // sup_{|x| >= R} a_eps(x)

  bool strictly_decreasing() const {
    for (std::size_t i = 1; i < sup_tail.size(); ++i) {
      if (!(sup_tail[i] < sup_tail[i - 1])) return false;
    }
    return true;
  }
};

/// a_eps(x) = sum_{y != x} sqrt(V(x) V(y)) exp(-eps |x - y|) over the box.
inline SparsenessProfile sparseness_profile(const PotentialSpec& spec, double eps, int box_radius) {
  if (!(eps > 0.0)) fail(Errc::InvalidArgument, "potential", "epsilon must be positive");
  SparsenessProfile prof;
  prof.epsilon = eps;
  const auto sup = spec.support(box_radius);
  prof.samples.resize(sup.size());
  parallel_tasks(sup.size(), [&](std::size_t i) {
    std::vector<double> terms;
    terms.reserve(sup.size());
    for (std::size_t j = 0; j < sup.size(); ++j) {
      if (j == i) continue;
      terms.push_back(std::sqrt(sup[i].value * sup[j].value) * std::exp(-eps * norm2(sup[i].site - sup[j].site)));
    }
    prof.samples[i] = {sup[i].site, pairwise_sum(terms)};
  });
  for (int div : {8, 4, 2}) {
    const double R = static_cast<double>(box_radius) / div;
    double m = 0.0;
    for (const auto& [x, a] : prof.samples) {
      if (norm2(x) >= R) m = std::max(m, a);
    }
    prof.radii.push_back(R);
    prof.sup_tail.push_back(m);
  }
  return prof;
}

/// min |x - y| over distinct support points with |x|, |y| >= r in the working box.
inline double pair_separation(const PotentialSpec& spec, double r) {
  std::vector<Site> far;
  for (const auto& sv : spec.support(spec.box_radius())) {
    if (norm2(sv.site) >= r) far.push_back(sv.site);
  }
  if (far.size() < 2) fail(Errc::InsufficientSupport, "potential", "fewer than two support points beyond r");
  double best = INFINITY;
  for (std::size_t i = 0; i < far.size(); ++i) {
    for (std::size_t j = i + 1; j < far.size(); ++j) best = std::min(best, norm2(far[i] - far[j]));
  }
  return best;
}

/// Re-checks the three cube conditions for c directly on the lattice.
inline bool check_concentration_cube(const PotentialSpec& spec, int L, int ell, double eps, const Site& c) {
  const int d = spec.dim();
  const LatticeBox cube(d, ell, c);
  const LatticeBox inner(d, L);
  double mass = 0.0;
  for (std::size_t i = 0; i < cube.size(); ++i) {
    const Site x = cube.site(i);
    if (inner.contains(x)) return false;
    if (x != c) mass += spec(x);
  }
  return spec(c) > (1.0 - eps) * spec.v0() && mass < eps;
}

/// Nearest support site c (ties: larger coordinates first) with Q(0,L) and Q(c,ell) disjoint,
/// V(c) > (1-eps) v0 and the rest of Q(c,ell) carrying mass < eps.
inline Site find_concentration_cube(const PotentialSpec& spec, int L, int ell, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) fail(Errc::InvalidArgument, "potential", "epsilon must lie in (0,1)");
  if (!(spec.v0() > 0.0)) fail(Errc::ZeroV0, "potential", "the potential has v0 = 0");
  auto sup = spec.support(spec.box_radius());
  std::stable_sort(sup.begin(), sup.end(), [](const SiteValue& a, const SiteValue& b) {
    const double na = norm2(a.site), nb = norm2(b.site);
    if (na != nb) return na < nb;
    return b.site < a.site;
  });
  const int d = spec.dim();
  for (const auto& sv : sup) {
    if (norm_inf(sv.site) <= L + ell) continue;
    if (!(sv.value > (1.0 - eps) * spec.v0())) continue;
    if (norm_inf(sv.site) + ell > spec.box_radius()) continue;
    double mass = 0.0;
    const LatticeBox cube(d, ell, sv.site);
    for (const auto& other : sup) {
      if (other.site != sv.site && cube.contains(other.site)) mass += other.value;
    }
    if (mass < eps) return sv.site;
  }
  fail(Errc::NotFoundInBox, "potential", "no concentration cube inside the working box");
}

/// #{x in Q(0, radius) : |V(x) - v| < eps}.
inline std::size_t count_near_value(const PotentialSpec& spec, double v, double eps, int radius) {
  const LatticeBox q(spec.dim(), radius);
  if (spec.tail() == TailKind::Decaying || spec.tail() == TailKind::Constant) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.size(); ++i) n += std::abs(spec(q.site(i)) - v) < eps;
    return n;
  }
  const auto sup = spec.support(radius);
  std::size_t n = 0;
  for (const auto& sv : sup) n += std::abs(sv.value - v) < eps;
  if (std::abs(v) < eps) n += q.size() - sup.size();  // zero sites off the support
  return n;
}

}  // namespace sparsewalk
