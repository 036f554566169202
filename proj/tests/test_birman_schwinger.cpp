#include <gtest/gtest.h>

#include <cmath>

#include "sparsewalk/birman_schwinger.hpp"
#include "sparsewalk/spectral.hpp"

using namespace sparsewalk;

namespace {

const double kLp = 2.0 / std::sqrt(3.0);

Errc code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::InvalidArgument;
}

PotentialSpec anchor_spec(int R) { return build_geometric_sparse(1, 1.0, 3, R, SiteValue{kOrigin, 2.0}); }

}  // namespace

TEST(Assemble, SingleSiteReduction) {
  const auto k = validate_kernel(presets::simple1d());
  const LatticeBox box(1, 20);
  const auto a = assemble_bs(k, build_single_delta(1, 0.7, 20), 1.5, box);
  ASSERT_EQ(a.matrix.rows(), 1);
  EXPECT_NEAR(a.matrix(0, 0), 0.7 * (1.5 / std::sqrt(1.25) - 1.0), 1e-12);
  const auto at = assemble_bs(k, build_single_delta(1, 1.0, 20), kLp, box);
  EXPECT_NEAR(at.matrix(0, 0), 1.0, 1e-12);
}

TEST(Assemble, TwoSiteOffDiagonal) {
  const auto k = validate_kernel(presets::simple1d());
  const double v = 2.0;
  const auto spec = build_explicit(1, {{make_site({-1}), v}, {make_site({1}), v}}, 10);
  const auto a = assemble_bs(k, spec, 1.25, LatticeBox(1, 10));
  ASSERT_EQ(a.matrix.rows(), 2);
  EXPECT_NEAR(a.matrix(0, 1), v * 5.0 / 12.0, 1e-12);
  EXPECT_NEAR(a.off_diag(1, 0), v * 5.0 / 12.0, 1e-12);
}

TEST(Assemble, SplitAndSymmetry) {
  for (double q : {0.0, 0.3}) {
    const auto k = validate_kernel(presets::lazy1d(q));
    for (double lam : {2.0, -1.5, 1.3}) {
      const auto a = assemble_bs(k, anchor_spec(300), lam, LatticeBox(1, 300));
      Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(a.matrix.rows(), a.matrix.cols());
      for (Eigen::Index i = 0; i < diag.rows(); ++i) diag(i, i) = a.gamma * a.values[static_cast<std::size_t>(i)];
      EXPECT_LT((a.matrix - diag - a.off_diag).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((a.matrix - a.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_EQ(a.off_diag.diagonal().cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(Assemble, Errors) {
  const auto k = validate_kernel(presets::simple1d());
  EXPECT_EQ(code_of([&] { assemble_bs(k, build_zero(1, 10), 2.0, LatticeBox(1, 10)); }), Errc::EmptySupport);
  EXPECT_EQ(code_of([&] { assemble_bs(k, build_single_delta(1, 1.0, 10), 1.01, LatticeBox(1, 10)); }),
            Errc::LambdaInSpectrum);
  EXPECT_EQ(code_of([&] { assemble_bs(k, build_single_delta(1, 1.0, 10), -1.015, LatticeBox(1, 10)); }),
            Errc::LambdaInSpectrum);
}

TEST(EigenTest, SingleDelta) {
  const auto k = validate_kernel(presets::simple1d());
  const LatticeBox box(1, 20);
  const auto hit = bs_eigenvalue_test(assemble_bs(k, build_single_delta(1, 1.0, 20), kLp, box), 1e-6);
  EXPECT_TRUE(hit.is_eigenvalue);
  EXPECT_LT(hit.distance, 1e-9);
  const auto miss = bs_eigenvalue_test(assemble_bs(k, build_single_delta(1, 1.0, 20), 1.5, box), 1e-6);
  EXPECT_FALSE(miss.is_eigenvalue);
  EXPECT_NEAR(miss.distance, 2.0 - 1.5 / std::sqrt(1.25), 1e-12);
}

TEST(EigenTest, CrossingMatchesTruncatedTopEigenvalue) {
  for (double q : {0.0, 0.25}) {
    const auto k = validate_kernel(presets::lazy1d(q));
    for (double v : {0.5, 1.0, 2.0}) {
      const auto spec = build_single_delta(1, v, 60);
      const double lam = bs_crossing(k, spec, LatticeBox(1, 60), 1.03, 1.0 + v + 1.0);
      const double top = full_spectrum(truncated_operator(k, spec, 60), false).values.maxCoeff();
      EXPECT_NEAR(lam, top, 1e-6) << q << " " << v;
      EXPECT_NEAR(lam, lambda_pm_1d(q, v).second, 1e-10);
    }
  }
}

TEST(EigenTest, CrossingOnAnchorSpec) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = anchor_spec(120);
  const double top = full_spectrum(truncated_operator(k, spec, 120), false).values.maxCoeff();
  const double lam = bs_crossing(k, spec, LatticeBox(1, 120), kLp + 0.05, 4.0);
  EXPECT_NEAR(lam, top, 1e-6);
}

TEST(ResolventViaBS, FreeCaseIsGreenTruncation) {
  const auto k = validate_kernel(presets::lazy1d(0.25));
  const auto R = resolvent_via_bs(k, build_zero(1, 30), 2.0, 30);
  EXPECT_NEAR(R.matrix(30, 31), g_lambda_closed_1d(0.25, 2.0, 1).value / 2.0, 1e-13);
  EXPECT_LT(R.residual, 1e-6);
}

TEST(ResolventViaBS, MatchesDirectInverse) {
  struct Case {
    double q;
    PotentialSpec spec;
    double lambda;
  };
  const std::vector<Case> cases = {
      {0.0, build_single_delta(1, 1.0, 40), 2.0},
      {0.0, anchor_spec(40), 2.5},
      {0.0, anchor_spec(40), -2.2},
      {0.3, anchor_spec(40), 2.5},
      {0.3, build_geometric_sparse(1, 1.0, 2, 40), -1.5},
  };
  for (const auto& c : cases) {
    const auto k = validate_kernel(presets::lazy1d(c.q));
    const auto R = resolvent_via_bs(k, c.spec, c.lambda, 40);
    EXPECT_LT(R.residual, 1e-6);
    const auto D = direct_resolvent(truncated_operator(k, c.spec, 40), c.lambda);
    double worst = 0.0;
    for (auto i : interior_indices(R.box)) {
      for (auto j : interior_indices(R.box)) {
        worst = std::max(worst, std::abs(R.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                         D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      }
    }
    EXPECT_LT(worst, 1e-6) << c.q << " " << c.lambda;
  }
}

TEST(ResolventViaBS, EigenvalueHit) {
  const auto k = validate_kernel(presets::simple1d());
  EXPECT_EQ(code_of([&] { resolvent_via_bs(k, build_single_delta(1, 1.0, 20), kLp, 20); }), Errc::BSNotInvertible);
}

TEST(TailNorm, SparseDecreasesDenseDoesNot) {
  const auto k = validate_kernel(presets::simple1d());
  const auto sparse = assemble_bs(k, build_geometric_sparse(1, 1.0, 3, 1000), 2.0, LatticeBox(1, 1000));
  const auto dense = assemble_bs(k, build_constant(1, 1.0, 200), 2.0, LatticeBox(1, 200));
  double prev = INFINITY;
  for (double N : {8.0, 32.0, 128.0}) {
    const double s = off_diag_tail_norm(sparse, N);
    EXPECT_LT(s, prev);
    prev = s;
    EXPECT_GT(off_diag_tail_norm(dense, N), 0.05);
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(TailNorm, SingleSiteIsZero) {
  const auto k = validate_kernel(presets::simple1d());
  const auto a = assemble_bs(k, build_single_delta(1, 1.0, 20, make_site({3})), 2.0, LatticeBox(1, 20));
  EXPECT_EQ(off_diag_tail_norm(a, 4.0), 0.0);
  EXPECT_EQ(off_diag_tail_norm(a, 1.0), 0.0);
}

TEST(Neumann, SingleDeltaExcluded) {
  const auto k = validate_kernel(presets::simple1d());
  const auto c = neumann_invertibility(k, build_single_delta(1, 1.0, 20), {kOrigin}, 2.0, 0.5, LatticeBox(1, 20));
  EXPECT_EQ(c.epsilon0, 1.0);
  EXPECT_EQ(c.h_norm, 0.0);
  EXPECT_TRUE(c.valid);
}

TEST(Neumann, GeometricSparseAtTwo) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = build_geometric_sparse(1, 1.0, 3, 1000);
  const double alpha = 0.5 * std::log(2.0 + std::sqrt(3.0));
  const auto c = neumann_invertibility(k, spec, {}, 2.0, alpha, LatticeBox(1, 1000));
  EXPECT_NEAR(c.gamma, kLp - 1.0, 1e-12);
  EXPECT_NEAR(c.epsilon0, 2.0 - kLp, 1e-12);
  EXPECT_NEAR(c.green_rate, std::log(2.0 + std::sqrt(3.0)), 1e-6);
  EXPECT_TRUE(c.valid);
  EXPECT_LT(c.contraction, 1.0);
}

TEST(Neumann, Errors) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = build_geometric_sparse(1, 1.0, 3, 200);
  const LatticeBox box(1, 200);
  EXPECT_EQ(code_of([&] { neumann_invertibility(k, spec, {}, kLp, 0.1, box); }), Errc::Epsilon0Zero);
  EXPECT_EQ(code_of([&] { neumann_invertibility(k, spec, {}, 2.0, 1.4, box); }), Errc::AlphaTooLarge);
}

TEST(Neumann, GreedyGrowthFixesLargeAnchor) {
  // a strong anchor makes |1 - gamma V| vanish near lambda = r; excluding it restores the certificate
  const auto k = validate_kernel(presets::simple1d());
  const double lam = 1.6;
  const double gamma = lam / std::sqrt(lam * lam - 1.0) - 1.0;
  const auto spec = build_geometric_sparse(1, 1.0, 3, 200, SiteValue{kOrigin, 1.0 / gamma});
  const LatticeBox box(1, 200);
  EXPECT_EQ(code_of([&] { neumann_invertibility(k, spec, {}, lam, 0.3, box); }), Errc::Epsilon0Zero);
  const auto c = neumann_auto(k, spec, lam, 0.3, box);
  EXPECT_TRUE(c.valid);
  ASSERT_EQ(c.K.size(), 1u);
  EXPECT_EQ(c.K[0], kOrigin);
}
