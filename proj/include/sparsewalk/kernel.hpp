#pragma once

// Symmetric finite-range random walks on Z^d and the transition operator P.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <deque>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sparsewalk/error.hpp"
#include "sparsewalk/lattice.hpp"

namespace sparsewalk {

struct KernelEntry {
  Site offset{};
  double prob = 0.0;
};

/// Unvalidated offset -> probability table, as read from a config.
struct RawKernel {
  int dim = 1;
  std::vector<KernelEntry> entries;
};

/// The spectrum [lower, 1] of P on l^2(Z^d).
struct SpectrumInterval {
  double lower = -1.0;
  double upper = 1.0;
};

class WalkKernel;
WalkKernel validate_kernel(const RawKernel& raw);
SpectrumInterval spectrum_bounds(const WalkKernel& k, int grid_density);

/// A validated symmetric, normalized, finite-range, irreducible transition probability.
/// Immutable once built; safe to share across threads.
class WalkKernel {
 public:
  int dim() const noexcept { return dim_; }
  /// Max norm of the farthest support offset.
  int range() const noexcept { return range_; }
  std::span<const KernelEntry> entries() const noexcept { return entries_; }
  double p0() const noexcept { return at(kOrigin); }
  double normalization_defect() const noexcept { return normalization_defect_; }
  const SpectrumInterval& spectrum() const noexcept { return spectrum_; }
  /// Radius of the cube Q(0, 2r) on which reachability was certified.
  int irreducibility_radius() const noexcept { return 2 * range_; }

  double at(const Site& x) const noexcept {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), x,
                               [](const KernelEntry& e, const Site& s) { return e.offset < s; });
    return (it != entries_.end() && it->offset == x) ? it->prob : 0.0;
  }

 private:
  friend WalkKernel validate_kernel(const RawKernel& raw);
  WalkKernel() = default;

  int dim_ = 1;
  int range_ = 0;
  std::vector<KernelEntry> entries_;  // sorted by offset, zero entries dropped
  double normalization_defect_ = 0.0;
  SpectrumInterval spectrum_;
};

namespace detail {

/// Evaluates the characteristic function on a tensor grid with per-axis phase tables.
class CharFunctionGrid {
 public:
  CharFunctionGrid(std::span<const KernelEntry> entries, int dim, int range)
      : entries_(entries), dim_(dim), range_(range) {}

  double operator()(const double* theta) const {
    // e^{i theta_a k} for k in [-r, r], per axis
    thread_local std::vector<std::complex<double>> phases;
    const int width = 2 * range_ + 1;
    phases.resize(static_cast<std::size_t>(dim_ * width));
    for (int a = 0; a < dim_; ++a) {
      for (int k = -range_; k <= range_; ++k) {
        phases[static_cast<std::size_t>(a * width + k + range_)] = std::polar(1.0, theta[a] * k);
      }
    }
    double s = 0.0;
    for (const auto& e : entries_) {
      std::complex<double> z = 1.0;
      for (int a = 0; a < dim_; ++a) {
        z *= phases[static_cast<std::size_t>(a * width + e.offset[static_cast<std::size_t>(a)] + range_)];
      }
      s += e.prob * z.real();
    }
    return s;
  }

 private:
  std::span<const KernelEntry> entries_;
  int dim_;
  int range_;
};

inline int default_grid_density(int dim) { return dim >= 3 ? 64 : 256; }

}  // namespace detail

/// p^(theta) = sum_x p(x) cos(theta . x); real by symmetry.
inline double char_function(const WalkKernel& k, std::span<const double> theta) {
  double s = 0.0;
  for (const auto& e : k.entries()) s += e.prob * std::cos(dot(theta.data(), e.offset, k.dim()));
  return s;
}

/// min p^ over the torus: tensor-grid scan, then golden-section refinement along each axis
/// around the best grid points.
inline SpectrumInterval spectrum_bounds(const WalkKernel& k, int grid_density) {
  if (grid_density < 8) fail(Errc::InvalidArgument, "lattice_kernel", "grid_density must be >= 8");
  const int d = k.dim();
  detail::CharFunctionGrid phat(k.entries(), d, k.range());
  const double h = 2.0 * std::numbers::pi / grid_density;
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(grid_density);

  // keep a handful of the lowest grid points as refinement seeds
  constexpr std::size_t kSeeds = 4;
  std::vector<std::pair<double, std::array<double, kMaxDim>>> best;
  std::array<double, kMaxDim> theta{};
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (int a = d - 1; a >= 0; --a) {
      theta[static_cast<std::size_t>(a)] =
          -std::numbers::pi + h * static_cast<double>(rem % static_cast<std::size_t>(grid_density));
      rem /= static_cast<std::size_t>(grid_density);
    }
    const double v = phat(theta.data());
    if (best.size() < kSeeds || v < best.back().first) {
      best.emplace_back(v, theta);
      std::sort(best.begin(), best.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      if (best.size() > kSeeds) best.pop_back();
    }
  }

  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  double lower = best.front().first;
  for (auto [value, t] : best) {
    for (int sweep = 0; sweep < 4; ++sweep) {
      for (int a = 0; a < d; ++a) {
        const auto ia = static_cast<std::size_t>(a);
        double lo = t[ia] - h, hi = t[ia] + h;
        auto eval = [&](double x) {
          auto tt = t;
          tt[ia] = x;
          return phat(tt.data());
        };
        double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
        double f1 = eval(x1), f2 = eval(x2);
        for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
          if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = eval(x1);
          } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = eval(x2);
          }
        }
        const double xm = 0.5 * (lo + hi);
        const double fm = eval(xm);
        if (fm < value) {
          value = fm;
          t[ia] = xm;
        }
      }
    }
    lower = std::min(lower, value);
  }
  return {lower, 1.0};
}

inline WalkKernel validate_kernel(const RawKernel& raw) {
  constexpr std::string_view mod = "lattice_kernel";
  if (raw.dim < 1 || raw.dim > kMaxDim) fail(Errc::InvalidArgument, mod, "dimension must be in [1,3]");

  std::vector<KernelEntry> entries;
  for (const auto& e : raw.entries) {
    for (int a = raw.dim; a < kMaxDim; ++a) {
      if (e.offset[static_cast<std::size_t>(a)] != 0)
        fail(Errc::InvalidArgument, mod, "offset has coordinates beyond the kernel dimension");
    }
    if (!(e.prob >= 0.0)) fail(Errc::InvalidArgument, mod, "negative or NaN probability");
    if (e.prob > 0.0) entries.push_back(e);
  }
  if (entries.empty()) fail(Errc::EmptySupport, mod, "kernel has no positive entries");
  std::sort(entries.begin(), entries.end(),
            [](const KernelEntry& a, const KernelEntry& b) { return a.offset < b.offset; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].offset == entries[i - 1].offset)
      fail(Errc::InvalidArgument, mod, "duplicate offset " + to_string(entries[i].offset, raw.dim));
  }

  WalkKernel k;
  k.dim_ = raw.dim;
  k.entries_ = std::move(entries);

  for (const auto& e : k.entries_) {
    const double mirror = k.at(-e.offset);
    if (std::abs(mirror - e.prob) > 1e-12) {
      fail(Errc::NotSymmetric, mod,
           "p" + to_string(e.offset, raw.dim) + "=" + std::to_string(e.prob) + " but p" +
               to_string(-e.offset, raw.dim) + "=" + std::to_string(mirror));
    }
  }

  double total = 0.0;
  for (const auto& e : k.entries_) total += e.prob;
  k.normalization_defect_ = std::abs(total - 1.0);
  if (k.normalization_defect_ > 1e-12)
    fail(Errc::NotNormalized, mod, "probabilities sum to " + std::to_string(total));

  int r = 0;
  for (const auto& e : k.entries_) r = std::max(r, norm_inf(e.offset));
  k.range_ = r;
  if (r == 0) fail(Errc::NotIrreducible, mod, "kernel is supported on the origin only");

  // Reachability proxy: BFS over offset sums inside Q(0, 4r) must cover Q(0, 2r).
  const LatticeBox work(raw.dim, 4 * r);
  const LatticeBox target(raw.dim, 2 * r);
  std::vector<char> seen(work.size(), 0);
  std::deque<Site> queue{kOrigin};
  seen[work.index_unchecked(kOrigin)] = 1;
  while (!queue.empty()) {
    const Site x = queue.front();
    queue.pop_front();
    for (const auto& e : k.entries_) {
      const Site y = x + e.offset;
      if (auto idx = work.index(y); idx && !seen[*idx]) {
        seen[*idx] = 1;
        queue.push_back(y);
      }
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Site x = target.site(i);
    if (!seen[work.index_unchecked(x)])
      fail(Errc::NotIrreducible, mod, "site " + to_string(x, raw.dim) + " not reached from the origin");
  }

  k.spectrum_ = spectrum_bounds(k, detail::default_grid_density(raw.dim));
  return k;
}

namespace presets {

inline RawKernel simple1d() { return {1, {{make_site({-1}), 0.5}, {make_site({1}), 0.5}}}; }

/// p(0) = q, p(+-1) = (1 - q)/2.
inline RawKernel lazy1d(double q) {
  if (!(q >= 0.0 && q < 1.0)) fail(Errc::InvalidArgument, "lattice_kernel", "lazy1d needs q in [0,1)");
  RawKernel raw{1, {{make_site({-1}), 0.5 * (1.0 - q)}, {make_site({1}), 0.5 * (1.0 - q)}}};
  if (q > 0.0) raw.entries.push_back({kOrigin, q});
  return raw;
}

inline RawKernel simple2d() {
  return {2,
          {{make_site({1, 0}), 0.25},
           {make_site({-1, 0}), 0.25},
           {make_site({0, 1}), 0.25},
           {make_site({0, -1}), 0.25}}};
}

inline RawKernel simple3d() {
  RawKernel raw{3, {}};
  for (int a = 0; a < 3; ++a) {
    Site e{};
    e[static_cast<std::size_t>(a)] = 1;
    raw.entries.push_back({e, 1.0 / 6.0});
    raw.entries.push_back({-e, 1.0 / 6.0});
  }
  return raw;
}

}  // namespace presets

/// (Pf)(x) = sum_y p(x - y) f(y) with f extended by zero outside the box.
inline std::vector<double> apply_P(const WalkKernel& k, const LatticeBox& box, std::span<const double> f) {
  if (box.dim() != k.dim()) fail(Errc::InvalidArgument, "lattice_kernel", "box/kernel dimension mismatch");
  if (box.radius() <= k.range())
    fail(Errc::BoxTooSmall, "lattice_kernel", "box radius must exceed the kernel range");
  if (f.size() != box.size()) fail(Errc::InvalidArgument, "lattice_kernel", "function size does not match box");
  std::vector<double> out(box.size(), 0.0);
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Site x = box.site(i);
    double s = 0.0;
    for (const auto& e : k.entries()) {
      if (auto j = box.index(x + e.offset)) s += e.prob * f[*j];
    }
    out[i] = s;
  }
  return out;
}

/// p_n(0) for n = 0..n_max. The distribution lives on Q(0, (n_max/2 + 1) r): mass beyond that
/// radius can no longer return to the origin within n_max steps.
inline std::vector<double> return_probabilities(const WalkKernel& k, int n_max) {
  if (n_max < 0) fail(Errc::InvalidArgument, "lattice_kernel", "n must be >= 0");
  const LatticeBox box(k.dim(), (n_max / 2 + 1) * k.range());
  std::vector<double> cur(box.size(), 0.0), next(box.size(), 0.0);
  const std::size_t origin = box.index_unchecked(kOrigin);
  cur[origin] = 1.0;
  std::vector<double> out{1.0};
  out.reserve(static_cast<std::size_t>(n_max) + 1);
  for (int n = 1; n <= n_max; ++n) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < box.size(); ++i) {
      if (cur[i] == 0.0) continue;
      const Site x = box.site(i);
      for (const auto& e : k.entries()) {
        if (auto j = box.index(x + e.offset)) next[*j] += cur[i] * e.prob;
      }
    }
    std::swap(cur, next);
    out.push_back(cur[origin]);
  }
  return out;
}

/// Exact n-step return probability p_n(0) by repeated convolution.
inline double convolution_power_at_zero(const WalkKernel& k, int n) { return return_probabilities(k, n).back(); }

/// ||(lambda - P) u_n|| for the normalized plane wave e^{i theta . x} cut to Q(0, n + r).
inline double weyl_sequence_residual(const WalkKernel& k, std::span<const double> theta, double lambda, int n) {
  constexpr std::string_view mod = "lattice_kernel";
  if (static_cast<int>(theta.size()) != k.dim()) fail(Errc::InvalidArgument, mod, "theta dimension mismatch");
  if (n < 1) fail(Errc::InvalidArgument, mod, "n must be >= 1");
  if (std::abs(char_function(k, theta) - lambda) >= 1e-10)
    fail(Errc::ThetaNotOnSpectrum, mod, "p^(theta) differs from lambda");
  const int r = k.range();
  const LatticeBox box(k.dim(), n + 2 * r);
  std::vector<double> re(box.size(), 0.0), im(box.size(), 0.0);
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Site x = box.site(i);
    if (norm_inf(x) <= n + r) {
      const double phase = dot(theta.data(), x, k.dim());
      re[i] = std::cos(phase);
      im[i] = std::sin(phase);
      norm_sq += 1.0;
    }
  }
  const auto pre = apply_P(k, box, re);
  const auto pim = apply_P(k, box, im);
  std::vector<double> terms(box.size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    const double a = lambda * re[i] - pre[i];
    const double b = lambda * im[i] - pim[i];
    terms[i] = a * a + b * b;
  }
  return std::sqrt(pairwise_sum(terms) / norm_sq);
}

}  // namespace sparsewalk
