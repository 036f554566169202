#pragma once

// Resolvent G_lambda = (lambda - P)^{-1} of the free walk: diagonal g_lambda(0) = lambda G_lambda(0,0),
// off-diagonal kernel G_lambda(0,x), and log-linear decay fits.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sparsewalk/error.hpp"
#include "sparsewalk/kernel.hpp"
#include "sparsewalk/lattice.hpp"
#include "sparsewalk/parallel.hpp"
#include "sparsewalk/quadrature.hpp"

namespace sparsewalk {

enum class GreenMethod { closed_1d, quadrature, series };

inline std::string_view to_string(GreenMethod m) {
  switch (m) {
    case GreenMethod::closed_1d: return "closed_1d";
    case GreenMethod::quadrature: return "quadrature";
    case GreenMethod::series: return "series";
  }
  return "unknown";
}

struct GreenEvaluation {
  double lambda = 0.0;
  double value = 0.0;
  GreenMethod method = GreenMethod::quadrature;
  double est_error = 0.0;
};

struct DecayFit {
  double rate = 0.0;
  double prefactor = 0.0;
  double residual = 0.0;  // RMS of log residuals
  std::size_t points = 0;
};

namespace detail {

inline constexpr std::string_view kResolvent = "resolvent";

inline void require_off_spectrum(const WalkKernel& k, double lambda) {
  if (!std::isfinite(lambda)) fail(Errc::InvalidArgument, kResolvent, "lambda is not finite");
  if (lambda >= k.spectrum().lower - 1e-13 && lambda <= 1.0 + 1e-13) {
    fail(Errc::LambdaInSpectrum, kResolvent,
         "lambda=" + std::to_string(lambda) + " lies in [" + std::to_string(k.spectrum().lower) + ", 1]");
  }
}

/// M(eta) = sum_y p(y) cosh(eta u.y) bounds |p^| on the contour shifted by i eta u.
inline double shift_bound(const WalkKernel& k, const double* u, double eta) {
  double s = 0.0;
  for (const auto& e : k.entries()) s += e.prob * std::cosh(eta * dot(u, e.offset, k.dim()));
  return s;
}

/// Largest eta with M(eta) <= |lambda|; 0 when |lambda| <= 1.
inline double max_shift(const WalkKernel& k, const double* u, double lambda) {
  const double target = std::abs(lambda);
  if (target <= 1.0) return 0.0;
  double hi = 1.0;
  while (shift_bound(k, u, hi) < target) {
    hi *= 2.0;
    if (hi > 1e3) break;
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (shift_bound(k, u, mid) < target) lo = mid; else hi = mid;
  }
  return lo;
}

/// In d = 1, G_lambda(0,x) decays exactly like |z|^{|x|} for the root z of z^r (lambda - p^) inside the
/// unit circle closest to it, so the contour may be shifted up to -log|z|.
inline double max_shift_1d(const WalkKernel& k, double lambda) {
  const int r = k.range();
  const int deg = 2 * r;
  // coefficients of z^r (lambda - sum_j p(j) z^j), highest degree first in the companion form
  std::vector<double> c(static_cast<std::size_t>(deg + 1), 0.0);
  for (const auto& e : k.entries()) c[static_cast<std::size_t>(e.offset[0] + r)] -= e.prob;
  c[static_cast<std::size_t>(r)] += lambda;
  const double lead = c[static_cast<std::size_t>(deg)];
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c[static_cast<std::size_t>(i)] / lead;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  double best = INFINITY;
  for (int i = 0; i < deg; ++i) {
    const double m = std::abs(es.eigenvalues()(i));
    if (m > 0.0) best = std::min(best, std::abs(std::log(m)));
  }
  return std::isfinite(best) ? best : 0.0;
}

struct ShiftedTerm {
  Site offset;
  double prob;
  double cosh_part;
  double sinh_part;
};

/// Mean over the torus of Re[e^{i theta.x} / (lambda - p^(theta + i eta u))] with adaptive doubling.
/// Returns {value, est_error, converged}.
struct BracketResult {
  double value = 0.0;
  double est_error = 0.0;
  bool converged = false;
  double ratio = 1.0;
};

inline BracketResult shifted_bracket(const WalkKernel& k, double lambda, const Site& x, const double* u,
                                     double eta, std::size_t start_pts, double rel_tol) {
  const int d = k.dim();
  std::vector<ShiftedTerm> terms;
  for (const auto& e : k.entries()) {
    const double s = eta * dot(u, e.offset, d);
    terms.push_back({e.offset, e.prob, std::cosh(s), std::sinh(s)});
  }
  auto integrand = [&](const double* theta) -> std::pair<double, double> {
    std::complex<double> z = 0.0;
    for (const auto& t : terms) {
      const double a = dot(theta, t.offset, d);
      z += t.prob * std::complex<double>(std::cos(a) * t.cosh_part, -std::sin(a) * t.sinh_part);
    }
    const double ax = dot(theta, x, d);
    const std::complex<double> val = std::polar(1.0, ax) / (lambda - z);
    return {val.real(), std::abs(val)};
  };
  struct Acc {
    double v = 0.0, m = 0.0;
    Acc operator+(const Acc& o) const { return {v + o.v, m + o.m}; }
    Acc& operator+=(const Acc& o) {
      v += o.v;
      m += o.m;
      return *this;
    }
    Acc operator/(double s) const { return {v / s, m / s}; }
  };
  const std::size_t cap = quadrature_cap(d);
  BracketResult res;
  double prev = 0.0, prev_diff = -1.0;
  bool have_prev = false;
  for (std::size_t n = start_pts; n <= cap; n *= 2) {
    const Acc acc = torus_mean<Acc>(d, n, [&](const double* th) {
      auto [v, m] = integrand(th);
      return Acc{v, m};
    });
    if (have_prev) {
      const double diff = std::abs(acc.v - prev);
      res.value = acc.v;
      res.est_error = diff;
      res.ratio = prev_diff > 0.0 ? diff / prev_diff : 0.0;
      if (diff <= rel_tol * std::abs(acc.v) + 1e-15 * acc.m) {
        res.converged = true;
        return res;
      }
      prev_diff = diff;
    }
    prev = acc.v;
    have_prev = true;
    res.value = acc.v;
  }
  return res;
}

}  // namespace detail

/// G_lambda(0, x) by torus quadrature. For x != 0 the contour is shifted by i eta x/|x|, which
/// factors out e^{-eta |x|} and keeps far values accurate relative to their size.
inline GreenEvaluation green_kernel(const WalkKernel& k, double lambda, const Site& x, int pts_per_axis = 64) {
  if (pts_per_axis < 64) fail(Errc::InvalidArgument, detail::kResolvent, "pts_per_axis must be >= 64");
  detail::require_off_spectrum(k, lambda);
  const int d = k.dim();
  double u[kMaxDim] = {0.0, 0.0, 0.0};
  const double len = norm2(x);
  double eta = 0.0;
  if (len > 0.0) {
    for (int a = 0; a < d; ++a) u[a] = x[static_cast<std::size_t>(a)] / len;
    const double eta_max = d == 1 ? detail::max_shift_1d(k, lambda) : detail::max_shift(k, u, lambda);
    eta = std::max(0.0, eta_max - 4.0 / len);
  }
  const double rel_tol = 1e-13;
  detail::BracketResult br;
  for (const double frac : {1.0, 0.5, 0.0}) {
    const double e = eta * frac;
    br = detail::shifted_bracket(k, lambda, x, u, e, static_cast<std::size_t>(pts_per_axis), rel_tol);
    if (br.converged || frac == 0.0) {
      eta = e;
      break;
    }
  }
  if (!br.converged && br.ratio > 0.5) {
    fail(Errc::QuadratureNotConverged, detail::kResolvent,
         "refinement ratio " + std::to_string(br.ratio) + " at the grid cap for lambda=" + std::to_string(lambda));
  }
  const double scale = std::exp(-eta * len);
  return {lambda, scale * br.value, GreenMethod::quadrature, scale * br.est_error};
}

/// g_lambda(0) = lambda (2 pi)^{-d} int dtheta / (lambda - p^(theta)).
inline GreenEvaluation g_lambda_quadrature(const WalkKernel& k, double lambda, int pts_per_axis = 64) {
  GreenEvaluation g = green_kernel(k, lambda, kOrigin, pts_per_axis);
  g.value *= lambda;
  g.est_error *= std::abs(lambda);
  return g;
}

/// g_lambda(0) = sum_n lambda^{-n} p_n(0) for |lambda| > 1.
inline GreenEvaluation g_lambda_series(const WalkKernel& k, double lambda, double tol = 1e-14) {
  if (!(std::abs(lambda) > 1.0)) fail(Errc::SeriesDiverges, detail::kResolvent, "series needs |lambda| > 1");
  if (!(tol > 0.0)) fail(Errc::InvalidArgument, detail::kResolvent, "tol must be positive");
  const double a = std::abs(lambda);
  // p_n(0) <= 1, so the tail after n terms is at most a^{-n} / (1 - 1/a)
  int n_max = 0;
  double bound = 1.0;
  while (bound >= tol * (1.0 - 1.0 / a)) {
    bound /= a;
    ++n_max;
  }
  const auto pn = return_probabilities(k, n_max);
  std::vector<double> terms(pn.size());
  double w = 1.0;
  for (std::size_t n = 0; n < pn.size(); ++n) {
    terms[n] = w * pn[n];
    w /= lambda;
  }
  const double value = pairwise_sum(terms);
  const double tail = std::pow(a, -static_cast<double>(n_max + 1)) / (1.0 - 1.0 / a);
  return {lambda, value, GreenMethod::series, tail};
}

/// g_lambda(x) for the lazy walk p(0)=q, p(+-1)=(1-q)/2.
inline GreenEvaluation g_lambda_closed_1d(double q, double lambda, int x) {
  if (!(q >= 0.0 && q < 1.0)) fail(Errc::InvalidArgument, detail::kResolvent, "q must lie in [0,1)");
  if (lambda >= 2.0 * q - 1.0 && lambda <= 1.0)
    fail(Errc::LambdaInSpectrum, detail::kResolvent, "lambda lies in [2q-1, 1]");
  const double delta = (lambda - 1.0) * (lambda - (2.0 * q - 1.0));
  const double sd = std::sqrt(delta);
  const double phi = (lambda - q - sd) / (1.0 - q);
  const int n = std::abs(x);
  double value = 0.0;
  if (lambda > 1.0) {
    value = lambda / sd * std::pow(phi, n);
  } else {
    value = -lambda / sd * std::pow(phi, -n);
  }
  return {lambda, value, GreenMethod::closed_1d, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(value)};
}

/// Least-squares line through (|x|, log value); rate = -slope.
inline DecayFit decay_rate_estimate(std::span<const std::pair<double, double>> values) {
  if (values.size() < 8) fail(Errc::TooFewPoints, detail::kResolvent, "decay fit needs at least 8 points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [r, v] : values) {
    if (!(v > 0.0)) fail(Errc::NonPositiveValue, detail::kResolvent, "decay fit needs positive values");
    sx += r;
    sy += std::log(v);
  }
  const double n = static_cast<double>(values.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [r, v] : values) {
    sxx += (r - mx) * (r - mx);
    sxy += (r - mx) * (std::log(v) - my);
  }
  if (sxx == 0.0) fail(Errc::TooFewPoints, detail::kResolvent, "decay fit needs distinct distances");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss = 0.0;
  for (const auto& [r, v] : values) {
    const double e = std::log(v) - (intercept + slope * r);
    ss += e * e;
  }
  return {-slope, std::exp(intercept), std::sqrt(ss / n), values.size()};
}

/// Memoized G_lambda(0, z), keyed by the canonical representative of {z, -z}.
class GreenFunction {
 public:
  GreenFunction(const WalkKernel& k, double lambda, int pts_per_axis = 64)
      : kernel_(&k), lambda_(lambda), pts_(pts_per_axis) {
    detail::require_off_spectrum(k, lambda);
  }

  const WalkKernel& kernel() const noexcept { return *kernel_; }
  double lambda() const noexcept { return lambda_; }

  /// Evaluates every missing difference in parallel; later lookups are read-only.
  void prefetch(const std::vector<Site>& diffs) {
    std::vector<Site> todo;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (const auto& z : diffs) {
        const Site c = canonical(z);
        if (!cache_.count(c)) todo.push_back(c);
      }
    }
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    std::vector<double> vals(todo.size());
    parallel_tasks(todo.size(), [&](std::size_t i) { vals[i] = green_kernel(*kernel_, lambda_, todo[i], pts_).value; });
    std::lock_guard<std::mutex> lock(mutex_);
    for (std::size_t i = 0; i < todo.size(); ++i) cache_.emplace(todo[i], vals[i]);
  }

  /// G_lambda(x, y) = G_lambda(0, y - x).
  double operator()(const Site& x, const Site& y) { return at(y - x); }

  double at(const Site& z) {
    const Site c = canonical(z);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (auto it = cache_.find(c); it != cache_.end()) return it->second;
    }
    const double v = green_kernel(*kernel_, lambda_, c, pts_).value;
    std::lock_guard<std::mutex> lock(mutex_);
    cache_.emplace(c, v);
    return v;
  }

  /// g_lambda(0) = lambda G_lambda(0,0).
  double g0() { return lambda_ * at(kOrigin); }

 private:
  static Site canonical(const Site& z) { return std::max(z, -z); }

  const WalkKernel* kernel_;
  double lambda_;
  int pts_;
  std::mutex mutex_;
  std::map<Site, double> cache_;
};

/// Decay rate of |G_lambda(0, n e_1)| fitted over n = 1..count.
inline DecayFit green_decay_along_axis(const WalkKernel& k, double lambda, int count = 16) {
  std::vector<std::pair<double, double>> pts;
  for (int n = 1; n <= count; ++n) {
    Site x{};
    x[0] = n;
    pts.emplace_back(n, std::abs(green_kernel(k, lambda, x).value));
  }
  return decay_rate_estimate(pts);
}

}  // namespace sparsewalk
