#pragma once

// Doob transform of P_V by its Perron pair, the reversible chain it defines, Feynman-Kac
// semigroups (exact and sampled), and the Gibbs path measures mu_N with their partition functions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sparsewalk/error.hpp"
#include "sparsewalk/kernel.hpp"
#include "sparsewalk/lattice.hpp"
#include "sparsewalk/parallel.hpp"
#include "sparsewalk/potential.hpp"
#include "sparsewalk/rng.hpp"
#include "sparsewalk/truncation.hpp"

namespace sparsewalk {

namespace detail {
inline constexpr std::string_view kGibbs = "gibbs_dynamics";
}

using Path = std::vector<Site>;

struct ChainKernel {
  LatticeBox box{1, 1};
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows;  // stochastic after renormalization
  double row_deficit = 0.0;                            // max |row sum - 1| before renormalization
  Eigen::VectorXd stationary;                          // m ∝ phi^2 / (1 + V), sums to 1
  double r = 0.0;

  std::size_t size() const { return box.size(); }
};

/// P_{V,phi}(x, y) = (1 + V(x)) p(y - x) phi(y) / (r phi(x)) on the box.
inline ChainKernel doob_kernel(const TruncatedOperator& op, double r, const Eigen::VectorXd& phi) {
  const double res = eigen_residual(op, r, phi);
  if (!(res < 1e-8)) {
    fail(Errc::EigenResidualTooLarge, detail::kGibbs, "eigen residual " + std::to_string(res) + " exceeds 1e-8");
  }
  if (!(phi.minCoeff() > 0.0)) fail(Errc::NonPositivePhi, detail::kGibbs, "phi is not strictly positive on the box");
  ChainKernel c;
  c.box = op.box;
  c.r = r;
  c.rows = op.matrix;
  double deficit = 0.0;
  for (Eigen::Index i = 0; i < c.rows.outerSize(); ++i) {
    double s = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c.rows, i); it; ++it) {
      it.valueRef() *= phi[it.col()] / (r * phi[i]);
      s += it.value();
    }
    deficit = std::max(deficit, std::abs(s - 1.0));
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c.rows, i); it; ++it) it.valueRef() /= s;
  }
  c.row_deficit = deficit;
  if (deficit > 1e-6) {
    fail(Errc::RowDeficitTooLarge, detail::kGibbs, "row deficit " + std::to_string(deficit) + " exceeds 1e-6");
  }
  c.stationary.resize(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) c.stationary[i] = phi[i] * phi[i] / (1.0 + op.V[static_cast<std::size_t>(i)]);
  c.stationary /= c.stationary.sum();
  return c;
}

/// max |m(x) P(x,y) - m(y) P(y,x)|.
inline double detailed_balance_violation(const ChainKernel& c) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < c.rows.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c.rows, i); it; ++it) {
      const double back = c.rows.coeff(it.col(), i);
      worst = std::max(worst, std::abs(c.stationary[i] * it.value() - c.stationary[it.col()] * back));
    }
  }
  return worst;
}

/// Deterministic path of the chain from x0, one stream per seed.
inline Path simulate_chain(const ChainKernel& c, const Site& x0, long steps, std::uint64_t seed) {
  auto start = c.box.index(x0);
  if (!start) fail(Errc::StartOutsideBox, detail::kGibbs, "start " + to_string(x0, c.box.dim()) + " is outside the box");
  StreamRng rng(seed, 0);
  Path path;
  path.reserve(static_cast<std::size_t>(steps) + 1);
  auto i = static_cast<Eigen::Index>(*start);
  path.push_back(x0);
  for (long s = 0; s < steps; ++s) {
    const double u = rng.uniform();
    double acc = 0.0;
    Eigen::Index next = -1;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c.rows, i); it; ++it) {
      acc += it.value();
      next = it.col();
      if (u < acc) break;
    }
    i = next;
    path.push_back(c.box.site(static_cast<std::size_t>(i)));
  }
  return path;
}

/// Total-variation distance between the occupation measure of a path and m.
inline double occupation_tv(const ChainKernel& c, const Path& path) {
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.size()));
  for (const auto& x : path) occ[static_cast<Eigen::Index>(c.box.index_unchecked(x))] += 1.0;
  occ /= static_cast<double>(path.size());
  return 0.5 * (occ - c.stationary).cwiseAbs().sum();
}

// ---- Feynman-Kac

/// P_V^n f on the truncation.
inline Eigen::VectorXd fk_semigroup(const TruncatedOperator& op, Eigen::VectorXd f, int n) {
  if (n < 0) fail(Errc::InvalidArgument, detail::kGibbs, "n must be nonnegative");
  for (int j = 0; j < n; ++j) f = op.matrix * f;
  return f;
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

/// Mean of f(x + S_n) prod_{j<n} (1 + V(x + S_j)) over walk paths; sample i uses stream (seed, i).
inline MonteCarloEstimate fk_monte_carlo(const WalkKernel& k, const PotentialSpec& spec,
                                         const std::function<double(const Site&)>& f, int n, std::size_t samples,
                                         std::uint64_t seed, const Site& x = kOrigin) {
  if (samples < 1000) fail(Errc::InvalidArgument, detail::kGibbs, "Monte Carlo needs at least 1000 samples");
  if (n < 0) fail(Errc::InvalidArgument, detail::kGibbs, "n must be nonnegative");
  const auto entries = k.entries();
  std::vector<double> cum(entries.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) cum[i] = (acc += entries[i].prob);
  cum.back() = 1.0;
  std::vector<double> vals(samples);
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  parallel_tasks(chunks, [&](std::size_t ch) {
    const std::size_t end = std::min(samples, (ch + 1) * kChunk);
    for (std::size_t s = ch * kChunk; s < end; ++s) {
      StreamRng rng(seed, s);
      Site pos = x;
      double w = 1.0;
      for (int j = 0; j < n; ++j) {
        w *= 1.0 + spec(pos);
        const double u = rng.uniform();
        const auto it = std::upper_bound(cum.begin(), cum.end(), u);
        pos = pos + entries[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(entries.size()) - 1))].offset;
      }
      vals[s] = w * f(pos);
    }
  });
  MonteCarloEstimate out;
  out.samples = samples;
  out.estimate = pairwise_sum(vals) / static_cast<double>(samples);
  std::vector<double> dev(samples);
  for (std::size_t s = 0; s < samples; ++s) dev[s] = (vals[s] - out.estimate) * (vals[s] - out.estimate);
  const double var = pairwise_sum(dev) / static_cast<double>(samples - 1);
  out.stderr_ = std::sqrt(var / static_cast<double>(samples));
  return out;
}

// ---- Gibbs measures

struct GibbsMarginal {
  int N = 0;
  int k = 0;
  std::map<Path, double> law;  // (S_1, ..., S_k) -> probability
  double Z = 0.0;              // Z_N = (P_V^N 1)(0)
  double log_Z = 0.0;
};

namespace detail {

/// Truncated operator whose box absorbs N steps from the origin, so P_V^m 1 is exact where used.
inline TruncatedOperator horizon_operator(const WalkKernel& k, const PotentialSpec& spec, int N, int L) {
  if (L < N * k.range()) {
    fail(Errc::HorizonExceedsBox, kGibbs,
         "horizon " + std::to_string(N) + " needs box radius " + std::to_string(N * k.range()) + ", have " +
             std::to_string(L));
  }
  return truncated_operator(k, spec, std::max(L, 4 * k.range()));
}

/// P_V^m 1 scaled to max 1, with the accumulated log scale.
inline Eigen::VectorXd scaled_power_of_one(const TruncatedOperator& op, int m, double& log_scale) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(op.size()));
  log_scale = 0.0;
  for (int j = 0; j < m; ++j) {
    w = op.matrix * w;
    const double s = w.maxCoeff();
    w /= s;
    log_scale += std::log(s);
  }
  return w;
}

template <class Visit>
void enumerate_paths(const WalkKernel& k, int len, Path& prefix, const Site& from, double weight,
                     const std::function<double(const Site&)>& site_factor, Visit&& visit) {
  if (static_cast<int>(prefix.size()) == len) {
    visit(prefix, weight);
    return;
  }
  const double f = site_factor(from);
  for (const auto& e : k.entries()) {
    const Site to = from + e.offset;
    prefix.push_back(to);
    enumerate_paths(k, len, prefix, to, weight * f * e.prob, site_factor, visit);
    prefix.pop_back();
  }
}

}  // namespace detail

/// Exact law of (S_1..S_k) under mu_N: prod_{j<k} (1 + V(x_j)) p(x_{j+1} - x_j) (P_V^{N-k} 1)(x_k) / Z_N.
inline GibbsMarginal gibbs_marginal(const WalkKernel& k, const PotentialSpec& spec, int N, int kk, int L) {
  if (kk < 0 || N < kk + 1) fail(Errc::InvalidArgument, detail::kGibbs, "need N >= k + 1");
  const auto op = detail::horizon_operator(k, spec, N, L);
  GibbsMarginal g;
  g.N = N;
  g.k = kk;
  double log_tail = 0.0;
  const Eigen::VectorXd tail = detail::scaled_power_of_one(op, N - kk, log_tail);
  double log_full = 0.0;
  const Eigen::VectorXd full = detail::scaled_power_of_one(op, N, log_full);
  const double z_scaled = full[static_cast<Eigen::Index>(op.box.index_unchecked(kOrigin))];
  g.log_Z = log_full + std::log(z_scaled);
  g.Z = std::exp(g.log_Z);
  Path prefix;
  const std::function<double(const Site&)> factor = [&](const Site& x) { return 1.0 + spec(x); };
  std::vector<std::pair<Path, double>> weights;
  detail::enumerate_paths(k, kk, prefix, kOrigin, 1.0, factor, [&](const Path& p, double w) {
    const Site last = p.empty() ? kOrigin : p.back();
    weights.emplace_back(p, w * tail[static_cast<Eigen::Index>(op.box.index_unchecked(last))]);
  });
  // weights carry exp(log_tail); Z_N carries exp(log_full)
  const double scale = std::exp(log_tail - log_full) / z_scaled;
  for (auto& [p, w] : weights) g.law[p] += w * scale;
  return g;
}

/// Law of (S_1..S_k) for the chain started at the origin, as products of chain rows.
inline std::map<Path, double> nu_marginal(const ChainKernel& c, int kk) {
  std::map<Path, double> law;
  std::function<void(Path&, Eigen::Index, double)> rec = [&](Path& prefix, Eigen::Index from, double w) {
    if (static_cast<int>(prefix.size()) == kk) {
      law[prefix] += w;
      return;
    }
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c.rows, from); it; ++it) {
      prefix.push_back(c.box.site(static_cast<std::size_t>(it.col())));
      rec(prefix, it.col(), w * it.value());
      prefix.pop_back();
    }
  };
  Path prefix;
  rec(prefix, static_cast<Eigen::Index>(c.box.index_unchecked(kOrigin)), 1.0);
  return law;
}

/// Law of S_k alone for the chain started at the origin, by powers of the chain matrix.
inline Eigen::VectorXd nu_site_marginal(const ChainKernel& c, int kk) {
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(c.size()));
  mu[static_cast<Eigen::Index>(c.box.index_unchecked(kOrigin))] = 1.0;
  for (int j = 0; j < kk; ++j) mu = mu * c.rows;
  return mu.transpose();
}

using PathFunctional = std::function<double(const Path&)>;

struct ConvergenceFit {
  std::vector<int> n;
  std::vector<double> D;  // |E_mu_n F - E_nu F|
  double epsilon = NAN;   // fitted per-step contraction
  std::size_t fitted_points = 0;
};

/// D(n) for n in n_range with the geometric rate fitted over points with D > 1e-13.
inline ConvergenceFit convergence_rate(const WalkKernel& k, const PotentialSpec& spec, const ChainKernel& chain,
                                       int kk, const std::vector<int>& n_range, const PathFunctional& F) {
  ConvergenceFit out;
  double nu = 0.0;
  for (const auto& [p, w] : nu_marginal(chain, kk)) nu += w * F(p);
  const int n_max = *std::max_element(n_range.begin(), n_range.end());
  out.n = n_range;
  out.D.resize(n_range.size());
  parallel_tasks(n_range.size(), [&](std::size_t i) {
    const auto g = gibbs_marginal(k, spec, n_range[i], kk, n_max * k.range());
    double mu = 0.0;
    for (const auto& [p, w] : g.law) mu += w * F(p);
    out.D[i] = std::abs(mu - nu);
  });
  // both sides are probabilities, so a constant functional leaves only rounding
  if (std::all_of(out.D.begin(), out.D.end(), [](double d) { return d <= 1e-13; })) {
    out.epsilon = 0.0;
    return out;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < out.D.size(); ++i) {
    if (!(out.D[i] > 1e-13)) continue;
    const double x = out.n[i], y = std::log(out.D[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  out.fitted_points = cnt;
  const double c = static_cast<double>(cnt);
  const double slope = cnt >= 3 ? (c * sxy - sx * sy) / (c * sxx - sx * sx) : NAN;
  if (!(slope < 0.0)) {
    fail(Errc::NoDecayDetected, detail::kGibbs,
         "D(n) does not decay over the range (" + std::to_string(cnt) + " usable points)");
  }
  out.epsilon = std::exp(slope);
  return out;
}

struct PartitionGrowth {
  std::vector<double> root;   // Z_N^{1/N}, N = 1..N_max
  std::vector<double> lower;  // (P_V^N delta_0)(0)^{1/N}
  double upper = 0.0;         // max row sum of P_V = 1 + sup V
};

/// Z_N = (P_V^N 1)(0) on a box that absorbs the horizon, kept in log scale.
inline PartitionGrowth partition_growth(const WalkKernel& k, const PotentialSpec& spec, int N_max) {
  if (N_max < 1) fail(Errc::InvalidArgument, detail::kGibbs, "N_max must be positive");
  const auto op = detail::horizon_operator(k, spec, N_max, N_max * k.range());
  const auto origin = static_cast<Eigen::Index>(op.box.index_unchecked(kOrigin));
  PartitionGrowth out;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(op.size()));
  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op.size()));
  d[origin] = 1.0;
  double lw = 0.0, ld = 0.0;
  for (int N = 1; N <= N_max; ++N) {
    w = op.matrix * w;
    d = op.matrix * d;
    const double sw = w.maxCoeff(), sd = d.maxCoeff();
    w /= sw;
    d /= sd;
    lw += std::log(sw);
    ld += std::log(sd);
    out.root.push_back(std::exp((lw + std::log(w[origin])) / N));
    out.lower.push_back(d[origin] > 0.0 ? std::exp((ld + std::log(d[origin])) / N) : 0.0);
  }
  out.upper = 1.0 + spec.bound();
  return out;
}

}  // namespace sparsewalk
