#pragma once

// Dirichlet truncation of P_V = (1+V)P to a cube and its symmetrized form D^{1/2} P D^{1/2}.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sparsewalk/error.hpp"
#include "sparsewalk/kernel.hpp"
#include "sparsewalk/lattice.hpp"
#include "sparsewalk/potential.hpp"

namespace sparsewalk {

inline constexpr std::size_t kDefaultVolumeCap = std::size_t{1} << 22;
inline constexpr std::size_t kDenseVolumeCap = 6000;

struct TruncatedOperator {
  LatticeBox box{1, 1};
  std::vector<double> V;                   // V on the box
  std::vector<double> dsqrt;               // sqrt(1 + V)
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // (1+V(x)) p(y-x)
  Eigen::SparseMatrix<double, Eigen::RowMajor> sym;     // sqrt((1+V(x))(1+V(y))) p(y-x)

  std::size_t size() const { return box.size(); }

  /// phi = D^{1/2} psi.
  Eigen::VectorXd to_phi(const Eigen::VectorXd& psi) const {
    Eigen::VectorXd phi(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) phi[i] = dsqrt[static_cast<std::size_t>(i)] * psi[i];
    return phi;
  }

  /// <f, g>_V = sum f g / (1 + V).
  double inner_v(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    std::vector<double> t(static_cast<std::size_t>(f.size()));
    for (Eigen::Index i = 0; i < f.size(); ++i) t[static_cast<std::size_t>(i)] = f[i] * g[i] / (1.0 + V[static_cast<std::size_t>(i)]);
    return pairwise_sum(t);
  }
};

inline TruncatedOperator truncated_operator(const WalkKernel& k, const PotentialSpec& spec, int L,
                                            std::size_t volume_cap = kDefaultVolumeCap) {
  constexpr std::string_view mod = "spectral_lab";
  if (spec.dim() != k.dim()) fail(Errc::InvalidArgument, mod, "kernel and potential dimensions differ");
  if (L < 4 * k.range()) fail(Errc::InvalidArgument, mod, "box radius must be at least 4r");
  TruncatedOperator op;
  op.box = LatticeBox(k.dim(), L);
  if (op.box.size() > volume_cap) {
    fail(Errc::BoxTooLarge, mod, "box volume " + std::to_string(op.box.size()) + " exceeds cap " + std::to_string(volume_cap));
  }
  const std::size_t n = op.box.size();
  op.V = spec.on_box(op.box);
  op.dsqrt.resize(n);
  for (std::size_t i = 0; i < n; ++i) op.dsqrt[i] = std::sqrt(1.0 + op.V[i]);
  std::vector<Eigen::Triplet<double>> tm, ts;
  tm.reserve(n * k.entries().size());
  ts.reserve(n * k.entries().size());
  for (std::size_t i = 0; i < n; ++i) {
    const Site x = op.box.site(i);
    for (const auto& e : k.entries()) {
      if (auto j = op.box.index(x + e.offset)) {
        tm.emplace_back(static_cast<int>(i), static_cast<int>(*j), (1.0 + op.V[i]) * e.prob);
        ts.emplace_back(static_cast<int>(i), static_cast<int>(*j), op.dsqrt[i] * op.dsqrt[*j] * e.prob);
      }
    }
  }
  op.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  op.sym.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  op.matrix.setFromTriplets(tm.begin(), tm.end());
  op.sym.setFromTriplets(ts.begin(), ts.end());
  return op;
}

/// ||P_V phi - lambda phi|| / ||phi||.
inline double eigen_residual(const TruncatedOperator& op, double lambda, const Eigen::VectorXd& phi) {
  const Eigen::VectorXd r = op.matrix * phi - lambda * phi;
  return r.norm() / phi.norm();
}

struct FullSpectrum {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns are psi (orthonormal, sym coordinates); empty if not requested
};

inline FullSpectrum full_spectrum(const TruncatedOperator& op, bool with_vectors = true,
                                  std::size_t dense_cap = kDenseVolumeCap) {
  if (op.size() > dense_cap) {
    fail(Errc::BoxTooLarge, "spectral_lab",
         "dense eigensolve limited to " + std::to_string(dense_cap) + " sites, box has " + std::to_string(op.size()));
  }
  const Eigen::MatrixXd dense = Eigen::MatrixXd(op.sym);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(Errc::NoConvergence, "spectral_lab", "dense eigensolver failed");
  FullSpectrum out;
  out.values = es.eigenvalues();
  if (with_vectors) out.vectors = es.eigenvectors();
  return out;
}

struct PerronPair {
  double r = 0.0;
  Eigen::VectorXd psi;  // unit vector in sym coordinates, strictly positive
  Eigen::VectorXd phi;  // D^{1/2} psi, ||phi||_V = 1
  double residual = 0.0;
};

/// Inverse iteration with (sigma - sym), sigma slightly above r. For sigma > r the matrix is a
/// nonsingular M-matrix, its LDL^T solve involves no cancellation, and every entry of the result
/// (including far tails) is accurate to working precision relative to its own size.
inline PerronPair refine_perron(const TruncatedOperator& op, double r_estimate, const Eigen::VectorXd& start) {
  const auto n = static_cast<Eigen::Index>(op.size());
  double sigma = r_estimate * (1.0 + 1e-9) + 1e-12;
  Eigen::VectorXd psi = start.cwiseAbs();
  if (psi.sum() == 0.0) psi.setOnes();
  psi.normalize();
  Eigen::SparseMatrix<double> shifted(n, n);
  shifted.setIdentity();
  shifted *= sigma;
  shifted -= Eigen::SparseMatrix<double>(op.sym);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> solver(shifted);
  if (solver.info() != Eigen::Success) fail(Errc::NoConvergence, "spectral_lab", "Perron refinement factorization failed");
  // Each step shrinks the non-Perron part by about (sigma - r)/(sigma - mu_2) relative to every entry,
  // so iterate until the entrywise relative change settles; far tails need more steps than the bulk.
  double r = r_estimate;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd next = solver.solve(psi);
    next /= next.norm();
    double change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (next[i] > 0.0) change = std::max(change, std::abs(next[i] - psi[i]) / next[i]);
      else change = INFINITY;
    }
    psi = next;
    r = psi.dot(op.sym * psi);
    if (change < 1e-13) break;
  }
  PerronPair out;
  out.r = r;
  out.psi = psi;
  out.phi = op.to_phi(psi);
  out.residual = eigen_residual(op, r, out.phi);
  return out;
}

}  // namespace sparsewalk
