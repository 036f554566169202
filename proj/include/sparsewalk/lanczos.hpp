#pragma once

// Lanczos with full reorthogonalization for the extreme eigenpairs of the symmetrized truncation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sparsewalk/error.hpp"
#include "sparsewalk/rng.hpp"
#include "sparsewalk/truncation.hpp"

namespace sparsewalk {

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd psi;  // unit vector in sym coordinates
  Eigen::VectorXd phi;  // D^{1/2} psi
  double residual = 0.0;  // ||P_V phi - value phi|| / ||phi||
};

struct TopEigenpairs {
  std::vector<EigenPair> by_value;  // descending value
  std::vector<EigenPair> by_abs;    // descending |value|
  int iterations = 0;
};

struct LanczosOptions {
  int max_iterations = 3000;
  double tolerance = 1e-11;  // Ritz residual relative to the spectral radius bound
  std::uint64_t seed = 0x5eed;
};

inline TopEigenpairs eigensolve_top(const TruncatedOperator& op, int count, LanczosOptions opt = {}) {
  constexpr std::string_view mod = "spectral_lab";
  if (count < 1 || count > 10) fail(Errc::InvalidArgument, mod, "count must lie in [1, 10]");
  const auto n = static_cast<Eigen::Index>(op.size());
  const int want = static_cast<int>(std::min<Eigen::Index>(count, n));
  const int m_cap = static_cast<int>(std::min<Eigen::Index>(n, opt.max_iterations));

  // operator norm bound: max absolute row sum
  double anorm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(op.sym, i); it; ++it) s += std::abs(it.value());
    anorm = std::max(anorm, s);
  }

  std::vector<Eigen::VectorXd> Q;
  std::vector<double> alpha, beta;
  StreamRng rng(opt.seed, 0);
  Eigen::VectorXd q(n);
  for (Eigen::Index i = 0; i < n; ++i) q[i] = 2.0 * rng.uniform() - 1.0;
  q.normalize();
  Q.push_back(q);

  auto ritz = [&](int m, Eigen::VectorXd& theta, Eigen::MatrixXd& S) {
    Eigen::VectorXd diag(m), sub(std::max(m - 1, 0));
    for (int i = 0; i < m; ++i) diag[i] = alpha[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < m; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    theta = es.eigenvalues();
    S = es.eigenvectors();
  };

  // candidate indices (ascending theta) for the top-by-value and top-by-abs lists
  auto wanted = [&](const Eigen::VectorXd& theta) {
    const int m = static_cast<int>(theta.size());
    std::vector<int> idx;
    for (int i = 0; i < std::min(want, m); ++i) idx.push_back(m - 1 - i);
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(theta[a]) > std::abs(theta[b]); });
    for (int i = 0; i < std::min(want, m); ++i) idx.push_back(order[static_cast<std::size_t>(i)]);
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
  };

  int m = 0;
  Eigen::VectorXd theta;
  Eigen::MatrixXd S;
  bool done = false;
  while (!done) {
    const auto um = static_cast<std::size_t>(m);
    Eigen::VectorXd w = op.sym * Q[um];
    const double a = Q[um].dot(w);
    alpha.push_back(a);
    w -= a * Q[um];
    if (m > 0) w -= beta.back() * Q[um - 1];
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j <= um; ++j) w -= Q[j].dot(w) * Q[j];
    }
    const double b = w.norm();
    ++m;
    const bool exhausted = b <= 1e-14 * std::max(anorm, 1.0) || m >= m_cap;
    if (m >= 2 * want || exhausted) {
      if (m % 5 == 0 || exhausted) {
        ritz(m, theta, S);
        bool ok = true;
        for (int i : wanted(theta)) {
          if (std::abs(b * S(m - 1, i)) > opt.tolerance * std::max(anorm, 1e-300)) ok = false;
        }
        if (ok || exhausted) {
          if (!ok && m < n) {
            fail(Errc::NoConvergence, mod, "Lanczos reached " + std::to_string(m) + " iterations without converging");
          }
          done = true;
          break;
        }
      }
    }
    beta.push_back(b);
    Q.push_back(w / b);
  }

  auto make_pair = [&](int i) {
    EigenPair p;
    p.value = theta[i];
    p.psi = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < m; ++j) p.psi += S(j, i) * Q[static_cast<std::size_t>(j)];
    p.psi.normalize();
    const Eigen::Index arg = [&] {
      Eigen::Index best = 0;
      p.psi.cwiseAbs().maxCoeff(&best);
      return best;
    }();
    if (p.psi[arg] < 0) p.psi = -p.psi;
    p.phi = op.to_phi(p.psi);
    p.residual = eigen_residual(op, p.value, p.phi);
    return p;
  };

  TopEigenpairs out;
  out.iterations = m;
  for (int i = 0; i < std::min(want, m); ++i) out.by_value.push_back(make_pair(m - 1 - i));
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(theta[a]) > std::abs(theta[b]); });
  for (int i = 0; i < std::min(want, m); ++i) out.by_abs.push_back(make_pair(order[static_cast<std::size_t>(i)]));
  return out;
}

}  // namespace sparsewalk
