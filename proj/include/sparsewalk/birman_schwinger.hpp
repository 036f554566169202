#pragma once

// Modified Birman-Schwinger operator G_{V,lambda} = V^{1/2}(lambda G_lambda - 1)V^{1/2} on the support
// of V, its split gamma V + H, the resolvent it produces, and Neumann-series invertibility certificates.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sparsewalk/error.hpp"
#include "sparsewalk/kernel.hpp"
#include "sparsewalk/lattice.hpp"
#include "sparsewalk/potential.hpp"
#include "sparsewalk/resolvent.hpp"
#include "sparsewalk/truncation.hpp"

namespace sparsewalk {

namespace detail {
inline constexpr std::string_view kBS = "birman_schwinger";

inline void require_bs_margin(const WalkKernel& k, double lambda) {
  if (lambda >= k.spectrum().lower - 0.02 && lambda <= 1.02) {
    fail(Errc::LambdaInSpectrum, kBS,
         "lambda=" + std::to_string(lambda) + " is within 0.02 of [" + std::to_string(k.spectrum().lower) + ", 1]");
  }
}

inline std::vector<Site> pair_differences(const std::vector<Site>& a, const std::vector<Site>& b) {
  std::set<Site> out;
  for (const auto& x : a) {
    for (const auto& y : b) out.insert(y - x);
  }
  return {out.begin(), out.end()};
}
}  // namespace detail

struct BSAssembly {
  double lambda = 0.0;
  double gamma = 0.0;  // g_lambda(0) - 1
  std::vector<Site> support_sites;
  std::vector<double> values;  // V on support_sites
  Eigen::MatrixXd matrix;      // G_{V,lambda}
  Eigen::MatrixXd off_diag;    // H_{V,lambda}, zero diagonal
};

inline BSAssembly assemble_bs(const WalkKernel& k, const PotentialSpec& spec, double lambda, const LatticeBox& box) {
  detail::require_bs_margin(k, lambda);
  BSAssembly a;
  a.lambda = lambda;
  for (const auto& sv : spec.support(box.radius())) {
    if (box.contains(sv.site)) {
      a.support_sites.push_back(sv.site);
      a.values.push_back(sv.value);
    }
  }
  if (a.support_sites.empty()) fail(Errc::EmptySupport, detail::kBS, "V has no support sites in the box");
  GreenFunction G(k, lambda);
  G.prefetch(detail::pair_differences(a.support_sites, a.support_sites));
  a.gamma = G.g0() - 1.0;
  const auto n = static_cast<Eigen::Index>(a.support_sites.size());
  a.matrix.resize(n, n);
  a.off_diag.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    a.matrix(i, i) = a.gamma * a.values[ui];
    for (Eigen::Index j = 0; j < i; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double h = std::sqrt(a.values[ui] * a.values[uj]) * lambda * G(a.support_sites[ui], a.support_sites[uj]);
      a.matrix(i, j) = a.matrix(j, i) = h;
      a.off_diag(i, j) = a.off_diag(j, i) = h;
    }
  }
  return a;
}

struct BSEigenTest {
  bool is_eigenvalue = false;
  double distance = 0.0;  // min |mu - 1| over eigenvalues mu of G_{V,lambda}
};

inline BSEigenTest bs_eigenvalue_test(const BSAssembly& a, double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.matrix, Eigen::EigenvaluesOnly);
  const double d = (es.eigenvalues().array() - 1.0).abs().minCoeff();
  return {d < tol, d};
}

inline double bs_top_eigenvalue(const BSAssembly& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.matrix, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// lambda in (lo, hi), both above 1, where the top eigenvalue of G_{V,lambda} passes through 1.
inline double bs_crossing(const WalkKernel& k, const PotentialSpec& spec, const LatticeBox& box, double lo, double hi,
                          double tol = 1e-13) {
  auto f = [&](double lam) { return bs_top_eigenvalue(assemble_bs(k, spec, lam, box)) - 1.0; };
  double flo = f(lo);
  const double fhi = f(hi);
  if ((flo < 0) == (fhi < 0)) {
    fail(Errc::InvalidArgument, detail::kBS, "top eigenvalue of G_{V,lambda} does not cross 1 on the interval");
  }
  while (hi - lo > tol * std::max(1.0, std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct BSResolvent {
  LatticeBox box{1, 1};
  Eigen::MatrixXd matrix;     // (lambda - P_V)^{-1} restricted to box x box
  double residual = 0.0;      // ||(lambda - P_V) R - I||_inf over interior columns
  double bs_distance = 0.0;   // min |mu - 1| over sigma(G_{V,lambda})
};

/// Sites of the box within half its radius.
inline std::vector<std::size_t> interior_indices(const LatticeBox& box) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (norm_inf(box.site(i) - box.center()) <= box.radius() / 2) out.push_back(i);
  }
  return out;
}

/// R = G + G V^{1/2} (1 - G_{V,lambda})^{-1} V^{1/2} (lambda G - 1), using P G = lambda G - 1.
inline BSResolvent resolvent_via_bs(const WalkKernel& k, const PotentialSpec& spec, double lambda, int L) {
  BSResolvent out;
  out.box = LatticeBox(k.dim(), L);
  const LatticeBox& box = out.box;
  const std::size_t n = box.size();
  const auto sites = box.sites();
  GreenFunction G(k, lambda);
  G.prefetch(detail::pair_differences({kOrigin}, LatticeBox(k.dim(), 2 * L).sites()));
  Eigen::MatrixXd Gb(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) Gb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = G(sites[i], sites[j]);
  }
  out.matrix = Gb;

  std::vector<std::size_t> supp;
  for (std::size_t i = 0; i < n; ++i) {
    if (spec(sites[i]) > 0.0) supp.push_back(i);
  }
  if (!supp.empty()) {
    const BSAssembly a = assemble_bs(k, spec, lambda, box);
    const auto m = static_cast<Eigen::Index>(a.support_sites.size());
    out.bs_distance = bs_eigenvalue_test(a, 0.0).distance;
    if (out.bs_distance < 1e-8) {
      fail(Errc::BSNotInvertible, detail::kBS,
           "1 is within " + std::to_string(out.bs_distance) + " of the spectrum of G_{V,lambda}");
    }
    const Eigen::MatrixXd M = (Eigen::MatrixXd::Identity(m, m) - a.matrix).inverse();
    Eigen::MatrixXd left(static_cast<Eigen::Index>(n), m), right(m, static_cast<Eigen::Index>(n));
    for (Eigen::Index s = 0; s < m; ++s) {
      const auto us = static_cast<std::size_t>(s);
      const std::size_t si = *box.index(a.support_sites[us]);
      const double sq = std::sqrt(a.values[us]);
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        left(ii, s) = Gb(ii, static_cast<Eigen::Index>(si)) * sq;
        right(s, ii) = sq * (lambda * Gb(static_cast<Eigen::Index>(si), ii) - (i == si ? 1.0 : 0.0));
      }
    }
    out.matrix += left * M * right;
  }

  // residual of the Dirichlet operator against interior columns
  const auto op = truncated_operator(k, spec, L, kDefaultVolumeCap);
  double worst = 0.0;
  for (std::size_t col : interior_indices(box)) {
    const Eigen::VectorXd c = out.matrix.col(static_cast<Eigen::Index>(col));
    Eigen::VectorXd r = lambda * c - op.matrix * c;
    r[static_cast<Eigen::Index>(col)] -= 1.0;
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  out.residual = worst;
  return out;
}

/// Dense (lambda - P_V)^{-1} of the Dirichlet truncation.
inline Eigen::MatrixXd direct_resolvent(const TruncatedOperator& op, double lambda) {
  const auto n = static_cast<Eigen::Index>(op.size());
  const Eigen::MatrixXd A = lambda * Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(op.matrix);
  return A.partialPivLu().inverse();
}

/// |lambda| sqrt(A_N B_N) with A_N = sup_{|x|>=N} sum_{y != x} sqrt(V(x)V(y))|G(x,y)| and
/// B_N = sup_x sum_{|y|>=N, y != x} of the same terms.
inline double off_diag_tail_norm(const BSAssembly& a, double N) {
  const auto n = static_cast<Eigen::Index>(a.support_sites.size());
  double A = 0.0, B = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool far_i = norm2(a.support_sites[static_cast<std::size_t>(i)]) >= N;
    double row = 0.0, row_far = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double h = std::abs(a.off_diag(i, j));  // = |lambda| sqrt(V V) |G|
      row += h;
      if (norm2(a.support_sites[static_cast<std::size_t>(j)]) >= N) row_far += h;
    }
    if (far_i) A = std::max(A, row);
    B = std::max(B, row_far);
  }
  // off_diag already carries |lambda| once: |lambda| sqrt(A B) = sqrt(|lambda| A |lambda| B)
  return std::sqrt(A * B);
}

struct NeumannCertificate {
  std::vector<Site> K;
  double lambda = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double green_rate = 0.0;  // fitted decay rate of G_lambda
  double epsilon0 = 0.0;    // inf |1 - gamma V_K| over the box and the declared essential values
  double h_norm = 0.0;      // max row sum of |H_{V_K,lambda}|
  double h_norm_weighted = 0.0;  // same with weights e^{alpha(|x| - |y|)}
  double contraction = 0.0;      // max(h_norm, h_norm_weighted) / epsilon0
  bool valid = false;
};

inline NeumannCertificate neumann_invertibility(const WalkKernel& k, const PotentialSpec& spec,
                                                const std::vector<Site>& K, double lambda, double alpha,
                                                const LatticeBox& box) {
  detail::require_off_spectrum(k, lambda);
  NeumannCertificate c;
  c.K = K;
  c.lambda = lambda;
  c.alpha = alpha;
  c.green_rate = green_decay_along_axis(k, lambda).rate;
  if (!(alpha > 0.0)) fail(Errc::InvalidArgument, detail::kBS, "alpha must be positive");
  if (alpha >= c.green_rate) {
    fail(Errc::AlphaTooLarge, detail::kBS,
         "alpha=" + std::to_string(alpha) + " is not below the Green decay rate " + std::to_string(c.green_rate));
  }
  const std::set<Site> excluded(K.begin(), K.end());
  std::vector<Site> sites;
  std::vector<double> vals;
  for (const auto& sv : spec.support(box.radius())) {
    if (box.contains(sv.site) && !excluded.count(sv.site)) {
      sites.push_back(sv.site);
      vals.push_back(sv.value);
    }
  }
  GreenFunction G(k, lambda);
  G.prefetch(detail::pair_differences(sites, sites));
  c.gamma = G.g0() - 1.0;

  // off-support sites contribute |1 - 0| = 1; the tail beyond the box contributes its essential values
  c.epsilon0 = 1.0;
  for (double v : vals) c.epsilon0 = std::min(c.epsilon0, std::abs(1.0 - c.gamma * v));
  for (double v : spec.declared_essential_values()) c.epsilon0 = std::min(c.epsilon0, std::abs(1.0 - c.gamma * v));
  if (c.epsilon0 < 1e-12) {
    fail(Errc::Epsilon0Zero, detail::kBS,
         "inf |1 - gamma V_K| = " + std::to_string(c.epsilon0) + " (gamma=" + std::to_string(c.gamma) + "); enlarge K");
  }
  for (std::size_t i = 0; i < sites.size(); ++i) {
    double plain = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < sites.size(); ++j) {
      if (i == j) continue;
      const double h = std::sqrt(vals[i] * vals[j]) * std::abs(lambda * G(sites[i], sites[j]));
      plain += h;
      weighted += h * std::exp(alpha * (norm2(sites[i]) - norm2(sites[j])));
    }
    c.h_norm = std::max(c.h_norm, plain);
    c.h_norm_weighted = std::max(c.h_norm_weighted, weighted);
  }
  c.contraction = std::max(c.h_norm, c.h_norm_weighted) / c.epsilon0;
  c.valid = c.epsilon0 > 0.0 && c.contraction < 1.0;
  return c;
}

/// Grows K greedily, adding the support site with the smallest |1 - gamma V(x)| (nearest the origin
/// among ties), until the certificate is valid or K reaches max_sites.
inline NeumannCertificate neumann_auto(const WalkKernel& k, const PotentialSpec& spec, double lambda, double alpha,
                                       const LatticeBox& box, std::size_t max_sites = 64) {
  std::vector<Site> K;
  const double gamma = GreenFunction(k, lambda).g0() - 1.0;
  auto support = spec.support(box.radius());
  std::stable_sort(support.begin(), support.end(), [&](const SiteValue& a, const SiteValue& b) {
    return std::abs(1.0 - gamma * a.value) < std::abs(1.0 - gamma * b.value);
  });
  std::size_t next = 0;
  for (;;) {
    try {
      auto c = neumann_invertibility(k, spec, K, lambda, alpha, box);
      if (c.valid || K.size() >= max_sites || next >= support.size()) return c;
    } catch (const Error& e) {
      if (e.code() != Errc::Epsilon0Zero || K.size() >= max_sites || next >= support.size()) throw;
    }
    K.push_back(support[next++].site);
  }
}

}  // namespace sparsewalk
