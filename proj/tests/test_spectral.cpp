#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sparsewalk/inertia.hpp"
#include "sparsewalk/lanczos.hpp"
#include "sparsewalk/truncation.hpp"

using namespace sparsewalk;

TEST(Truncation, FreeWalkTopEigenvalue) {
  const auto k = validate_kernel(presets::simple1d());
  const int L = 40;
  const auto op = truncated_operator(k, build_zero(1, L), L);
  const auto fs = full_spectrum(op, false);
  EXPECT_NEAR(fs.values[fs.values.size() - 1], std::cos(std::numbers::pi / (2 * L + 2)), 1e-13);
}

TEST(Truncation, RejectsSmallAndHugeBoxes) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  EXPECT_THROW(truncated_operator(k, build_zero(1, 10), 3), Error);
  try {
    truncated_operator(k, build_zero(1, 10), 1000, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BoxTooLarge);
  }
}

TEST(Truncation, SingleDeltaBoundState) {
  const auto k = validate_kernel(presets::simple1d());
  const auto op = truncated_operator(k, build_single_delta(1, 1.0, 60), 60);
  const auto fs = full_spectrum(op);
  const double top = fs.values[fs.values.size() - 1];
  EXPECT_NEAR(top, 2.0 / std::sqrt(3.0), 1e-8);
  const auto pp = refine_perron(op, top, fs.vectors.col(fs.vectors.cols() - 1));
  EXPECT_NEAR(pp.r, 2.0 / std::sqrt(3.0), 1e-8);
  EXPECT_LT(pp.residual, 1e-12);
  EXPECT_GT(pp.psi.minCoeff(), 0.0);
  // tail decays like phi^|x| with phi + 1/phi = 2r, so phi = 1/sqrt(3)
  const double ratio = pp.psi[op.box.index_unchecked(make_site({21}))] / pp.psi[op.box.index_unchecked(make_site({20}))];
  EXPECT_NEAR(ratio, 1.0 / std::sqrt(3.0), 1e-8);
}

TEST(Truncation, BipartiteSpectrumIsSymmetric) {
  const auto k = validate_kernel(presets::simple1d());
  const auto op = truncated_operator(k, build_geometric_sparse(1, 1.0, 3, 40), 40);
  const auto v = full_spectrum(op, false).values;
  const auto n = v.size();
  for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(v[i], -v[n - 1 - i], 1e-12);
}

TEST(Lanczos, AgreesWithDense) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto op = truncated_operator(k, build_geometric_sparse(1, 1.0, 3, 200), 200);
  const auto dense = full_spectrum(op, false).values;
  const auto top = eigensolve_top(op, 4);
  ASSERT_EQ(top.by_value.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(top.by_value[static_cast<std::size_t>(i)].value, dense[dense.size() - 1 - i], 1e-9);
    EXPECT_LT(top.by_value[static_cast<std::size_t>(i)].residual, 1e-8);
  }
}

TEST(Lanczos, TwoDimensionalFreeWalk) {
  const auto k = validate_kernel(presets::simple2d());
  const int L = 30;
  const auto op = truncated_operator(k, build_zero(2, L), L);
  const auto top = eigensolve_top(op, 2);
  EXPECT_NEAR(top.by_value[0].value, std::cos(std::numbers::pi / (2 * L + 2)), 1e-10);
  // bipartite: the largest-magnitude pair is +r and -r
  EXPECT_NEAR(std::abs(top.by_abs[1].value), top.by_value[0].value, 1e-10);
}

TEST(Lanczos, RejectsBadCount) {
  const auto k = validate_kernel(presets::simple1d());
  const auto op = truncated_operator(k, build_zero(1, 10), 10);
  EXPECT_THROW(eigensolve_top(op, 0), Error);
  EXPECT_THROW(eigensolve_top(op, 11), Error);
}

TEST(Inertia, CountsMatchDense) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto op = truncated_operator(k, build_geometric_sparse(1, 1.0, 3, 30), 30);
  const auto v = full_spectrum(op, false).values;
  const auto band = banded_sym<double>(op, k);
  for (double s : {-0.5, 0.0, 0.7, 1.0, 1.5, 2.5}) {
    std::size_t expect = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) expect += v[i] < s ? 1 : 0;
    EXPECT_EQ(count_below(band, s), expect) << s;
  }
}

TEST(Inertia, MultiprecisionResolvesTinyDistance) {
  // the bound state sits at 2/sqrt(3) up to an exponentially small boundary correction
  const auto k = validate_kernel(presets::simple1d());
  const int L = 40;
  const auto op = truncated_operator(k, build_single_delta(1, 1.0, L), L);
  const auto band = banded_sym<MpReal>(op, k);
  const MpReal target = MpReal(2) / sqrt(MpReal(3));
  const auto d = distance_to_spectrum(band, target, 1e-90, 1.0);
  EXPECT_FALSE(d.below_floor);
  const double phi = 1.0 / std::sqrt(3.0);
  // correction of order phi^(2L)
  EXPECT_LT(d.distance, 1e3 * std::pow(phi, 2 * L));
  EXPECT_GT(d.distance, 1e-3 * std::pow(phi, 2 * L));
}

// ---- spectral_lab analysis layer

#include "sparsewalk/spectral.hpp"

namespace {
PotentialSpec anchor_spec(int R) { return build_geometric_sparse(1, 1.0, 3, R, SiteValue{kOrigin, 2.0}); }
}  // namespace

TEST(LambdaPm, SimpleWalkUnitValue) {
  const auto [lm, lp] = lambda_pm_1d(0.0, 1.0);
  EXPECT_NEAR(lp, 2.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(lm, -2.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(g_lambda_closed_1d(0.0, lp, 0).value, 2.0, 1e-13);
}

TEST(LambdaPm, OrderingChain) {
  for (double q : {0.0, 0.1, 0.25, 0.45, 0.5, 0.7, 0.95}) {
    for (double v : {0.05, 0.5, 1.0, 3.0, 20.0}) {
      const auto [lm, lp] = lambda_pm_1d(q, v);
      EXPECT_GT(lp, 1.0) << q << " " << v;
      // at q = 1/2 the lower root sits exactly on the edge 2q - 1 = 0
      if (q == 0.5) EXPECT_NEAR(lm, 0.0, 1e-15);
      else EXPECT_LT(lm, 2 * q - 1) << q << " " << v;
      EXPECT_NEAR(g_lambda_closed_1d(q, lp, 0).value, 1.0 + 1.0 / v, 1e-9);
    }
  }
}

TEST(EssentialPredictor, BothRootsBelowHalf) {
  const auto k = validate_kernel(presets::simple1d());
  const auto pred = essential_spectrum_predictor(k, build_geometric_sparse(1, 1.0, 3, 100));
  ASSERT_EQ(pred.roots.size(), 2u);
  EXPECT_NEAR(pred.roots[0].lambda, -2.0 / std::sqrt(3.0), 1e-10);
  EXPECT_NEAR(pred.roots[1].lambda, 2.0 / std::sqrt(3.0), 1e-10);
  EXPECT_NEAR(pred.lambda0, 2.0 / std::sqrt(3.0), 1e-10);
}

TEST(EssentialPredictor, UpperRootOnlyAboveHalf) {
  const auto k = validate_kernel(presets::lazy1d(0.6));
  const auto pred = essential_spectrum_predictor(k, build_geometric_sparse(1, 1.0, 3, 100));
  ASSERT_EQ(pred.roots.size(), 1u);
  EXPECT_NEAR(pred.roots[0].lambda, lambda_pm_1d(0.6, 1.0).second, 1e-10);
}

TEST(EssentialPredictor, RootConsistentUnderSeries) {
  for (double q : {0.0, 0.25}) {
    const auto k = validate_kernel(presets::lazy1d(q));
    const auto pred = essential_spectrum_predictor(k, build_geometric_sparse(1, 0.5, 3, 100));
    EXPECT_NEAR(g_lambda_series(k, pred.lambda0).value, 3.0, 1e-9);
  }
}

TEST(EssentialPredictor, TwoDimensionsAlwaysHasRoot) {
  const auto k = validate_kernel(presets::simple2d());
  const auto pred = essential_spectrum_predictor(k, build_geometric_sparse(2, 2.0, 3, 50));
  EXPECT_GT(pred.lambda0, 1.0);
  EXPECT_NEAR(g_lambda_quadrature(k, pred.lambda0).value, 1.5, 1e-9);
}

TEST(EssentialPredictor, ThreeDimensionsSmallValueHasNoRoot) {
  const auto k = validate_kernel(presets::simple3d());
  try {
    essential_spectrum_predictor(k, build_geometric_sparse(3, 0.2, 3, 20));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoRootAboveOne);
  }
}

TEST(Bipartite, Detection) {
  const auto J1 = bipartite_detect(validate_kernel(presets::simple1d()));
  ASSERT_TRUE(J1);
  EXPECT_EQ((*J1)(make_site({3})), -1);
  EXPECT_EQ((*J1)(make_site({-4})), 1);
  EXPECT_FALSE(bipartite_detect(validate_kernel(presets::lazy1d(0.3))));
  const auto J2 = bipartite_detect(validate_kernel(presets::simple2d()));
  ASSERT_TRUE(J2);
  EXPECT_EQ(J2->mask, 3u);
}

TEST(DiagDominance, Margins) {
  const auto lazy = diag_dominance_check(validate_kernel(presets::lazy1d(0.3)));
  EXPECT_TRUE(lazy.holds);
  EXPECT_NEAR(lazy.margin, 0.3, 1e-15);
  const auto simple = diag_dominance_check(validate_kernel(presets::simple1d()));
  EXPECT_FALSE(simple.holds);
  EXPECT_EQ(simple.margin, 0.0);
  RawKernel raw{1, {{make_site({0}), 0.1}, {make_site({1}), 0.25}, {make_site({-1}), 0.25},
                    {make_site({2}), 0.2}, {make_site({-2}), 0.2}}};
  const auto neg = diag_dominance_check(validate_kernel(raw));
  EXPECT_NEAR(neg.margin, 0.1 - 0.4, 1e-15);
  EXPECT_FALSE(neg.holds);
}

TEST(EdgeInequality, Battery) {
  const auto bip = edge_inequality_check(validate_kernel(presets::simple1d()), anchor_spec(60), 60);
  EXPECT_NEAR(bip.ell_restricted, 0.0, 1e-15);
  EXPECT_NEAR(bip.slack, 0.0, 1e-8);
  const auto lazy = edge_inequality_check(validate_kernel(presets::lazy1d(0.3)), build_single_delta(1, 1.0, 60), 60);
  EXPECT_NEAR(lazy.ell_restricted, 0.3, 1e-15);
  EXPECT_GE(lazy.slack, -1e-8);
  const auto free = edge_inequality_check(validate_kernel(presets::lazy1d(0.3)), build_zero(1, 60), 60);
  EXPECT_GE(free.slack, -1e-8);
}

TEST(SpectralReport, SingleDeltaDecay) {
  const auto k = validate_kernel(presets::simple1d());
  const auto s = spectral_report(k, build_single_delta(1, 1.0, 80), {40, 60, 80});
  const auto& rep = s.reports[1];
  EXPECT_NEAR(rep.r, 2.0 / std::sqrt(3.0), 1e-8);
  EXPECT_NEAR(rep.decay.rate, std::log(std::sqrt(3.0)), 1e-4);
  EXPECT_TRUE(rep.phi_positive);
  EXPECT_NEAR(rep.perron.phi.cwiseAbs2().cwiseQuotient(Eigen::VectorXd::Ones(rep.perron.phi.size())).sum() -
                  rep.perron.phi[rep.L] * rep.perron.phi[rep.L] / 2.0,
              1.0, 1e-10);  // ||phi||_V = 1 with V(0) = 1
  EXPECT_GE(std::abs(rep.r), std::abs(rep.ell));
}

TEST(SpectralReport, AnchorGapIsolatedAndPositive) {
  const auto k = validate_kernel(presets::simple1d());
  const auto s = spectral_report(k, anchor_spec(160), {80, 120, 160});
  const double lp = 2.0 / std::sqrt(3.0);
  EXPECT_NEAR(s.prediction.lambda0, lp, 1e-10);
  for (const auto& rep : s.reports) {
    EXPECT_GT(rep.r, lp + 1e-3);
    EXPECT_TRUE(rep.phi_positive);
    EXPECT_GE(rep.r, std::abs(rep.ell) - 1e-12);
  }
  EXPECT_NEAR(s.reports[1].r, s.reports[2].r, 1e-6);
  ASSERT_FALSE(s.stable_discrete.empty());
  EXPECT_NEAR(s.stable_discrete.front(), s.reports.back().r, 1e-15);
}

TEST(SpectralReport, DirichletMonotone) {
  const auto k = validate_kernel(presets::lazy1d(0.25));
  const auto spec = build_geometric_sparse(1, 0.5, 2, 120);
  double prev = -INFINITY;
  for (int L : {8, 16, 32, 64, 120}) {
    const double r = full_spectrum(truncated_operator(k, spec, L), false).values.maxCoeff();
    EXPECT_GE(r, prev - 1e-13);
    prev = r;
  }
}

TEST(SpectralReport, BipartiteBottomIsJPhi) {
  const auto k = validate_kernel(presets::simple1d());
  const auto op = truncated_operator(k, anchor_spec(60), 60);
  const auto fs = full_spectrum(op);
  const Eigen::VectorXd top = fs.vectors.col(fs.vectors.cols() - 1);
  Eigen::VectorXd jtop = top;
  for (std::size_t i = 0; i < op.size(); ++i) jtop[static_cast<Eigen::Index>(i)] *= (op.box.site(i)[0] % 2 == 0) ? 1 : -1;
  const Eigen::VectorXd bottom = fs.vectors.col(0);
  EXPECT_LT(std::min((bottom - jtop).norm(), (bottom + jtop).norm()), 1e-8);
}

TEST(GapProjection, BipartiteTwoTerm) {
  const auto k = validate_kernel(presets::simple1d());
  const auto gp = gap_projection_test(k, anchor_spec(200), 200);
  EXPECT_TRUE(gp.two_term);
  EXPECT_LT(gp.epsilon, 1.0);
  EXPECT_NEAR(gp.epsilon / gp.predicted, 1.0, 0.1);
}

TEST(GapProjection, DominatedOneTerm) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto gp = gap_projection_test(k, anchor_spec(200), 200);
  EXPECT_FALSE(gp.two_term);
  EXPECT_LT(gp.epsilon, 1.0);
  EXPECT_NEAR(gp.epsilon / gp.predicted, 1.0, 0.1);
}

TEST(GapProjection, PerronVectorIsAbsorbed) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto spec = anchor_spec(60);
  const auto s = spectral_report(k, spec, {40, 50, 60});
  const auto gp = gap_projection_test(k, spec, 60, s.reports.back().perron.phi, 20);
  for (double n : gp.norms) EXPECT_LT(n, 1e-12);
}

TEST(GapProjection, RequiresCertificate) {
  // nearly periodic walk: not bipartite, and ell + r ~ 0.07 stays below the requested margin
  RawKernel raw{1, {{make_site({1}), 0.48}, {make_site({-1}), 0.48}, {make_site({2}), 0.02}, {make_site({-2}), 0.02}}};
  const auto k = validate_kernel(raw);
  EXPECT_FALSE(bipartite_detect(k));
  const auto spec = build_explicit(1, {{kOrigin, 3.0}, {make_site({1}), 3.0}}, 40);
  try {
    gap_projection_test(k, spec, 40, std::nullopt, 400, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GapNotCertified);
  }
  EXPECT_NO_THROW(gap_projection_test(k, spec, 40));
}
