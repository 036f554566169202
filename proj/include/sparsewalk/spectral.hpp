#pragma once

// Spectral analysis of P_V on finite boxes: the excess essential spectrum predicted from g_lambda(0),
// spectral and absolute gaps, bipartite structure, eigenfunction decay, and the gap projection.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sparsewalk/error.hpp"
#include "sparsewalk/kernel.hpp"
#include "sparsewalk/lanczos.hpp"
#include "sparsewalk/parallel.hpp"
#include "sparsewalk/potential.hpp"
#include "sparsewalk/resolvent.hpp"
#include "sparsewalk/truncation.hpp"

namespace sparsewalk {

namespace detail {
inline constexpr std::string_view kSpectral = "spectral_lab";
}

// ---- one-dimensional closed forms

/// (lambda_-, lambda_+) for the lazy nearest-neighbour walk with holding q and a single value v.
template <class T = double>
std::pair<T, T> lambda_pm_1d(T q, T v) {
  using std::sqrt;
  if (!(v > 0)) fail(Errc::InvalidArgument, detail::kSpectral, "v must be positive");
  if (q < 0 || !(q < 1)) fail(Errc::InvalidArgument, detail::kSpectral, "q must lie in [0, 1)");
  const T c = (v + 1) * (v + 1) / (2 * v + 1);
  const T root = sqrt(q * q - (2 * q - 1) / c);
  return {c * (q - root), c * (q + root)};
}

// ---- kernel structure

/// Site parity J(x) = (-1)^(sum of x_a over the axes in mask).
struct ParitySign {
  unsigned mask = 0;
  int operator()(const Site& x) const {
    int s = 0;
    for (int a = 0; a < kMaxDim; ++a) {
      if (mask & (1u << a)) s += x[static_cast<std::size_t>(a)];
    }
    return (s % 2 == 0) ? 1 : -1;
  }
};

/// First axis subset I (by bitmask) such that p vanishes on {I-sum even}.
inline std::optional<ParitySign> bipartite_detect(const WalkKernel& k) {
  for (unsigned mask = 1; mask < (1u << k.dim()); ++mask) {
    const ParitySign J{mask};
    bool ok = true;
    for (const auto& e : k.entries()) ok = ok && J(e.offset) == -1;
    if (!ok) continue;
    // P(x, y) = 0 whenever J(x)J(y) = 1, on a sample box
    const LatticeBox box(k.dim(), 2 * k.range());
    for (std::size_t i = 0; i < box.size() && ok; ++i) {
      const Site x = box.site(i);
      for (const auto& e : k.entries()) {
        if (J(x) * J(x + e.offset) == 1) ok = false;
      }
    }
    if (ok) return J;
  }
  return std::nullopt;
}

struct DominanceCheck {
  bool holds = false;
  double margin = -INFINITY;  // best over the candidate subsets
  std::vector<std::pair<unsigned, double>> per_subset;
};

/// margin(I) = p(0) - sum of p over {I-sum even} minus the origin.
inline DominanceCheck diag_dominance_check(const WalkKernel& k) {
  DominanceCheck out;
  for (unsigned mask = 1; mask < (1u << k.dim()); ++mask) {
    const ParitySign J{mask};
    double m = k.p0();
    for (const auto& e : k.entries()) {
      if (e.offset != kOrigin && J(e.offset) == 1) m -= e.prob;
    }
    out.per_subset.emplace_back(mask, m);
    out.margin = std::max(out.margin, m);
  }
  out.holds = out.margin > 0.0;
  return out;
}

// ---- essential spectrum prediction

struct EssentialRoot {
  double v = 0.0;       // essential value of V
  double lambda = 0.0;  // solution of g_lambda(0) = 1 + 1/v
  bool above = true;    // lambda > 1 (else lambda < ell(P))
};

struct EssentialPrediction {
  std::vector<EssentialRoot> roots;  // sorted by lambda
  double lambda0 = 0.0;              // largest root above 1, for v = v0
  std::vector<double> values() const {
    std::vector<double> out;
    for (const auto& r : roots) out.push_back(r.lambda);
    return out;
  }
};

namespace detail {

inline double g0_of(const WalkKernel& k, double lambda) { return g_lambda_quadrature(k, lambda).value; }

inline double bisect_g0(const WalkKernel& k, double target, double lo, double hi) {
  // g(lo) - target and g(hi) - target have opposite signs
  double flo = g0_of(k, lo) - target;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = g0_of(k, mid) - target;
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Root above 1. g is strictly decreasing there, tends to 1 at infinity and every root obeys
/// |lambda| <= 1 + v since |g - 1| <= 1/(|lambda| - 1).
inline std::optional<double> root_above_one(const WalkKernel& k, double v) {
  const double target = 1.0 + 1.0 / v;
  const double hi = 1.0 + v + 1.0;
  double lo = 0.0;
  double prev = NAN;
  for (double t = 1e-1; t >= 1e-7; t *= 0.1) {
    try {
      const double g = g0_of(k, 1.0 + t);
      if (g > target) {
        lo = 1.0 + t;
        break;
      }
      // d >= 3: g(1) is finite and g(1) - g(1+t) ~ c sqrt(t), so g(1) ~ g + (g - prev)/(sqrt(10) - 1);
      // give up once the target clears twice that gap
      if (k.dim() >= 3 && !std::isnan(prev) && target > g + 2.0 * (g - prev) / (std::sqrt(10.0) - 1.0)) break;
      prev = g;
    } catch (const Error& e) {
      if (e.code() != Errc::QuadratureNotConverged) throw;
      break;
    }
  }
  if (lo == 0.0) return std::nullopt;
  return bisect_g0(k, target, lo, hi);
}

/// Roots below ell(P) from sign changes on a grid that is log-spaced toward ell. The grid stops
/// short of the edge (1e-5 in d=1, 1e-3 otherwise) where the quadrature cost explodes.
inline std::vector<double> roots_below(const WalkKernel& k, double v) {
  const double target = 1.0 + 1.0 / v;
  const double ell = k.spectrum().lower;
  const double span = ell + 1.0 + v + 1.0;  // distance from ell down to -(2 + v)
  const double gap = k.dim() == 1 ? 1e-5 : 1e-3;
  std::vector<double> grid;
  const int n = 160;
  for (int i = 0; i <= n; ++i) grid.push_back(ell - gap * std::pow(span / gap, static_cast<double>(i) / n));
  std::vector<double> vals(grid.size(), NAN);
  parallel_tasks(grid.size(), [&](std::size_t i) {
    try {
      vals[i] = g0_of(k, grid[i]) - target;
    } catch (const Error& e) {
      if (e.code() != Errc::QuadratureNotConverged) throw;
    }
  });
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (std::isnan(vals[i]) || std::isnan(vals[i + 1])) continue;
    if ((vals[i] < 0) != (vals[i + 1] < 0)) out.push_back(bisect_g0(k, target, grid[i + 1], grid[i]));
  }
  return out;
}

}  // namespace detail

/// Lambda_V: solutions of g_lambda(0) = 1 + 1/v over the nonzero declared essential values.
inline EssentialPrediction essential_spectrum_predictor(const WalkKernel& k, const PotentialSpec& spec) {
  EssentialPrediction out;
  const double v0 = spec.v0();
  const bool bipartite = bipartite_detect(k).has_value();
  bool have0 = false;
  for (double v : spec.declared_essential_values()) {
    if (!(v > 0.0)) continue;
    if (auto up = detail::root_above_one(k, v)) {
      out.roots.push_back({v, *up, true});
      if (v == v0) {
        out.lambda0 = *up;
        have0 = true;
      }
    } else if (v == v0) {
      fail(Errc::NoRootAboveOne, detail::kSpectral,
           "g_lambda(0) stays below 1 + 1/v0 on (1, inf) for v0=" + std::to_string(v0));
    }
    if (bipartite) {
      // odd return probabilities vanish, so g_{-lambda}(0) = g_lambda(0)
      if (!out.roots.empty() && out.roots.back().v == v && out.roots.back().above) {
        out.roots.push_back({v, -out.roots.back().lambda, false});
      }
    } else {
      for (double lam : detail::roots_below(k, v)) out.roots.push_back({v, lam, false});
    }
  }
  if (!have0 && v0 > 0.0) fail(Errc::NoRootAboveOne, detail::kSpectral, "no root above 1 for v0");
  std::sort(out.roots.begin(), out.roots.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
  return out;
}

/// min over a theta grid of sum over even-sum offsets of p(x) cos(theta . x).
inline double restricted_symbol_min(const WalkKernel& k) {
  const ParitySign J{(1u << k.dim()) - 1};
  std::vector<KernelEntry> even;
  for (const auto& e : k.entries()) {
    if (J(e.offset) == 1) even.push_back(e);
  }
  if (even.empty()) return 0.0;
  const int d = k.dim();
  const int n = detail::default_grid_density(d);
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(n);
  double best = INFINITY;
  for (std::size_t idx = 0; idx < total; ++idx) {
    double theta[kMaxDim] = {0.0, 0.0, 0.0};
    std::size_t rem = idx;
    for (int a = 0; a < d; ++a) {
      theta[a] = 2.0 * std::numbers::pi * static_cast<double>(rem % static_cast<std::size_t>(n)) / n;
      rem /= static_cast<std::size_t>(n);
    }
    double s = 0.0;
    for (const auto& e : even) s += e.prob * std::cos(dot(theta, e.offset, d));
    best = std::min(best, s);
  }
  return best;
}

// ---- extreme eigenvalues of a truncation

struct ExtremeSpectrum {
  Eigen::VectorXd values;  // ascending; full list when dense, otherwise top and bottom blocks
  bool complete = false;
  double r = 0.0;
  double ell = 0.0;
  Eigen::VectorXd top_psi;
};

inline ExtremeSpectrum extreme_spectrum(const TruncatedOperator& op, int block = 10) {
  ExtremeSpectrum out;
  if (op.size() <= kDenseVolumeCap) {
    const auto fs = full_spectrum(op);
    out.values = fs.values;
    out.complete = true;
    out.top_psi = fs.vectors.col(fs.vectors.cols() - 1);
  } else {
    const auto top = eigensolve_top(op, block);
    TruncatedOperator neg = op;
    neg.sym = -op.sym;
    neg.matrix = -op.matrix;
    const auto bottom = eigensolve_top(neg, block);
    std::vector<double> v;
    for (const auto& p : top.by_value) v.push_back(p.value);
    for (const auto& p : bottom.by_value) v.push_back(-p.value);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end(), [](double a, double b) { return std::abs(a - b) < 1e-13; }), v.end());
    out.values = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    out.top_psi = top.by_value.front().psi;
  }
  out.r = out.values[out.values.size() - 1];
  out.ell = out.values[0];
  return out;
}

struct EdgeCheck {
  double ell = 0.0;
  double r = 0.0;
  double ell_restricted = 0.0;
  double slack = 0.0;  // ell - (-r + 2 ell_restricted)
};

inline EdgeCheck edge_inequality_check(const WalkKernel& k, const PotentialSpec& spec, int L) {
  const auto op = truncated_operator(k, spec, L);
  const auto ex = extreme_spectrum(op);
  EdgeCheck out;
  out.ell = ex.ell;
  out.r = ex.r;
  out.ell_restricted = restricted_symbol_min(k);
  out.slack = out.ell - (-out.r + 2.0 * out.ell_restricted);
  return out;
}

// ---- eigenfunction decay

/// Log-linear fit of |f(x)| against |x| over sites with |x| <= L/2 and |f| above 1e-12 of its max.
inline DecayFit eigenfunction_decay(const LatticeBox& box, const Eigen::VectorXd& f) {
  const double fmax = f.cwiseAbs().maxCoeff();
  std::vector<std::pair<double, double>> pts;
  const double reach = box.radius() / 2.0;
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Site x = box.site(i);
    const double d = norm2(x);
    const double v = std::abs(f[static_cast<Eigen::Index>(i)]);
    if (d <= reach && v > 1e-12 * fmax) pts.emplace_back(d, v);
  }
  return decay_rate_estimate(pts);
}

// ---- reports

struct DiscreteEigen {
  double value = 0.0;
  DecayFit decay;
};

struct SpectralReport {
  int L = 0;
  double r = 0.0;
  double ell = 0.0;
  double second_abs = 0.0;  // largest |mu| over mu != r (and mu != -r when bipartite)
  double gap = 0.0;         // r - next eigenvalue below r
  double abs_gap = 0.0;     // r - second_abs
  std::vector<double> lambda_V;
  double lambda0 = NAN;
  PerronPair perron;       // phi normalized in l2_V
  bool phi_positive = false;
  DecayFit decay;
  std::optional<ParitySign> bipartite;
  Eigen::VectorXd eigenvalues;  // ascending
  bool complete = false;
  std::vector<DiscreteEigen> discrete;  // outside [lowest predicted edge, highest] by 1e-4
};

struct SpectralSeries {
  std::vector<SpectralReport> reports;  // in L order
  EssentialPrediction prediction;
  std::vector<double> stable_discrete;  // eigenvalues above the predicted edge that are Cauchy
};

namespace detail {

inline SpectralReport report_for(const WalkKernel& k, const PotentialSpec& spec, int L, const EssentialPrediction& pred,
                                 const std::optional<ParitySign>& J) {
  const auto op = truncated_operator(k, spec, L);
  SpectralReport rep;
  rep.L = L;
  rep.bipartite = J;
  rep.lambda_V = pred.values();
  rep.lambda0 = pred.roots.empty() ? NAN : pred.lambda0;

  Eigen::MatrixXd vectors;
  if (op.size() <= kDenseVolumeCap) {
    const auto fs = full_spectrum(op);
    rep.eigenvalues = fs.values;
    vectors = fs.vectors;
    rep.complete = true;
  } else {
    const auto ex = extreme_spectrum(op);
    rep.eigenvalues = ex.values;
    vectors = ex.top_psi;
  }
  const auto& ev = rep.eigenvalues;
  const Eigen::Index n = ev.size();
  rep.r = ev[n - 1];
  rep.ell = ev[0];
  rep.gap = n > 1 ? rep.r - ev[n - 2] : INFINITY;
  const bool pair_bottom = J.has_value() && std::abs(rep.ell + rep.r) < 1e-10 * std::max(1.0, rep.r);
  rep.second_abs = 0.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    if (i == 0 && pair_bottom) continue;
    rep.second_abs = std::max(rep.second_abs, std::abs(ev[i]));
  }
  rep.abs_gap = rep.r - rep.second_abs;

  rep.perron = refine_perron(op, rep.r, vectors.col(vectors.cols() - 1));
  const double nv = std::sqrt(op.inner_v(rep.perron.phi, rep.perron.phi));
  rep.perron.phi /= nv;
  rep.phi_positive = rep.perron.phi.minCoeff() > 0.0;
  rep.decay = eigenfunction_decay(op.box, rep.perron.phi);

  // discrete candidates: outside the hull of the predicted set and sigma(P), with a 1e-4 margin
  double hi_edge = 1.0, lo_edge = k.spectrum().lower;
  for (double lam : rep.lambda_V) {
    hi_edge = std::max(hi_edge, lam);
    lo_edge = std::min(lo_edge, lam);
  }
  if (rep.complete) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (ev[i] > hi_edge + 1e-4 || ev[i] < lo_edge - 1e-4) {
        DiscreteEigen de;
        de.value = ev[i];
        try {
          de.decay = eigenfunction_decay(op.box, op.to_phi(vectors.col(i)));
        } catch (const Error&) {
          de.decay.rate = NAN;
        }
        rep.discrete.push_back(de);
      }
    }
  }
  return rep;
}

}  // namespace detail

inline SpectralSeries spectral_report(const WalkKernel& k, const PotentialSpec& spec, const std::vector<int>& Ls) {
  if (Ls.size() < 3) fail(Errc::InvalidArgument, detail::kSpectral, "need at least three box radii");
  for (std::size_t i = 1; i < Ls.size(); ++i) {
    if (Ls[i] <= Ls[i - 1]) fail(Errc::InvalidArgument, detail::kSpectral, "box radii must increase");
  }
  SpectralSeries out;
  if (spec.v0() > 0.0) out.prediction = essential_spectrum_predictor(k, spec);
  const auto J = bipartite_detect(k);
  out.reports.resize(Ls.size());
  parallel_tasks(Ls.size(), [&](std::size_t i) { out.reports[i] = detail::report_for(k, spec, Ls[i], out.prediction, J); });

  // eigenvalues above the predicted edge must be Cauchy across the last two boxes
  const double edge = std::max(1.0, out.prediction.roots.empty() ? 1.0 : out.prediction.lambda0) + 1e-4;
  const auto& a = out.reports[out.reports.size() - 2].eigenvalues;
  const auto& b = out.reports.back().eigenvalues;
  for (Eigen::Index i = b.size() - 1; i >= 0 && b[i] > edge; --i) {
    double best = INFINITY;
    for (Eigen::Index j = 0; j < a.size(); ++j) best = std::min(best, std::abs(a[j] - b[i]));
    if (best > 1e-6) {
      fail(Errc::NotStabilized, detail::kSpectral,
           "eigenvalue " + std::to_string(b[i]) + " above the predicted edge moved by " + std::to_string(best) +
               " between the last two boxes");
    }
    out.stable_discrete.push_back(b[i]);
  }
  return out;
}

// ---- gap projection

struct GapProjection {
  double epsilon = NAN;    // fitted contraction per step
  double predicted = NAN;  // second_abs / r
  bool two_term = false;
  std::vector<double> norms;  // ||r^-n P_V^n (f - Pi f)||_V for n = 0, 1, ...
  int fit_first = 0;
  int fit_last = 0;
};

/// Pi f = <phi, f>_V phi, plus <J phi, f>_V J phi in the bipartite case. The bottom edge counts
/// as separated from -r when ell + r exceeds `margin`; on a finite box only periodic kernels give
/// ell = -r exactly.
inline GapProjection gap_projection_test(const WalkKernel& k, const PotentialSpec& spec, int L,
                                         std::optional<Eigen::VectorXd> f = std::nullopt, int n_max = 400,
                                         double margin = 1e-12) {
  const auto op = truncated_operator(k, spec, L);
  const auto J = bipartite_detect(k);
  const EssentialPrediction none;
  const auto rep = detail::report_for(k, spec, L, none, J);
  const bool dominated = -rep.r < rep.ell - margin;
  if (!dominated && !J) {
    fail(Errc::GapNotCertified, detail::kSpectral, "neither -r < ell nor a bipartite sign is available");
  }
  GapProjection out;
  out.predicted = rep.second_abs / rep.r;
  out.two_term = !dominated && J.has_value();

  Eigen::VectorXd g;
  if (f) {
    g = *f;
  } else {
    g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op.size()));
    g[static_cast<Eigen::Index>(op.box.index_unchecked(kOrigin))] = 1.0;
  }
  const Eigen::VectorXd& phi = rep.perron.phi;
  g -= op.inner_v(phi, g) * phi;
  if (out.two_term) {
    Eigen::VectorXd jphi = phi;
    for (std::size_t i = 0; i < op.size(); ++i) jphi[static_cast<Eigen::Index>(i)] *= (*J)(op.box.site(i));
    jphi /= std::sqrt(op.inner_v(jphi, jphi));
    g -= op.inner_v(jphi, g) * jphi;
  }
  const double start = std::sqrt(std::max(op.inner_v(g, g), 0.0));
  out.norms.push_back(start);
  int stop = n_max;
  for (int n = 1; n <= n_max; ++n) {
    g = (op.matrix * g) / rep.r;
    const double nv = std::sqrt(std::max(op.inner_v(g, g), 0.0));
    out.norms.push_back(nv);
    if (nv < 1e-10 * start) {
      stop = n;
      break;
    }
  }
  out.fit_first = std::min(5, stop);
  out.fit_last = stop;
  if (start == 0.0 || out.norms[static_cast<std::size_t>(out.fit_first)] == 0.0) {
    out.epsilon = 0.0;
    return out;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int n = out.fit_first; n <= out.fit_last; ++n) {
    const double y = std::log(out.norms[static_cast<std::size_t>(n)]);
    sx += n;
    sy += y;
    sxx += static_cast<double>(n) * n;
    sxy += n * y;
    ++cnt;
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  out.epsilon = std::exp(slope);
  return out;
}

}  // namespace sparsewalk
