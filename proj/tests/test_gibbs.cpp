#include <gtest/gtest.h>

#include <cmath>

#include "sparsewalk/gibbs.hpp"
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

struct Built {
  TruncatedOperator op;
  PerronPair pp;
  ChainKernel chain;
};

Built build_chain(const WalkKernel& k, const PotentialSpec& spec, int L) {
  Built b{truncated_operator(k, spec, L), {}, {}};
  const auto fs = full_spectrum(b.op);
  b.pp = refine_perron(b.op, fs.values.maxCoeff(), fs.vectors.col(fs.vectors.cols() - 1));
  b.chain = doob_kernel(b.op, b.pp.r, b.pp.phi);
  return b;
}

}  // namespace

TEST(Doob, SingleDeltaStationaryMeasure) {
  const auto k = validate_kernel(presets::simple1d());
  const auto b = build_chain(k, build_single_delta(1, 1.0, 40), 40);
  const auto& m = b.chain.stationary;
  const auto at = [&](int x) { return m[static_cast<Eigen::Index>(b.chain.box.index_unchecked(make_site({x})))]; };
  EXPECT_NEAR(m.sum(), 1.0, 1e-14);
  Eigen::Index arg;
  m.maxCoeff(&arg);
  EXPECT_EQ(b.chain.box.site(static_cast<std::size_t>(arg)), kOrigin);
  for (int x = 1; x <= 10; ++x) EXPECT_NEAR(at(x + 1) / at(x), 1.0 / 3.0, 1e-8);
  EXPECT_LT(detailed_balance_violation(b.chain), 1e-12);
  EXPECT_LT(b.chain.row_deficit, 1e-10);
  for (Eigen::Index i = 0; i < b.chain.rows.rows(); ++i) EXPECT_NEAR(b.chain.rows.row(i).sum(), 1.0, 1e-14);
}

TEST(Doob, FreeWalkHTransform) {
  const auto k = validate_kernel(presets::lazy1d(0.2));
  const auto b = build_chain(k, build_zero(1, 20), 20);
  EXPECT_LT(detailed_balance_violation(b.chain), 1e-12);
  // drift away from the killing boundary: from the right edge the chain moves left more often
  const auto edge = static_cast<Eigen::Index>(b.chain.box.index_unchecked(make_site({20})));
  EXPECT_EQ(b.chain.rows.coeff(edge, edge + 1), 0.0);
  EXPECT_GT(b.chain.rows.coeff(edge, edge - 1), 0.4);
}

TEST(Doob, Errors) {
  const auto k = validate_kernel(presets::simple1d());
  const auto op = truncated_operator(k, build_single_delta(1, 1.0, 40), 40);
  const auto fs = full_spectrum(op);
  const auto pp = refine_perron(op, fs.values.maxCoeff(), fs.vectors.col(fs.vectors.cols() - 1));
  EXPECT_EQ(code_of([&] { doob_kernel(op, pp.r, -pp.phi); }), Errc::NonPositivePhi);
  EXPECT_EQ(code_of([&] { doob_kernel(op, pp.r * 1.001, pp.phi); }), Errc::EigenResidualTooLarge);
  Eigen::VectorXd bent = pp.phi;
  bent[0] *= 2.0;  // phi(-L) ~ 3^{-20}: invisible in the residual, fatal for that row
  EXPECT_EQ(code_of([&] { doob_kernel(op, pp.r, bent); }), Errc::RowDeficitTooLarge);
}

TEST(Simulate, DeterministicAndErgodic) {
  const auto k = validate_kernel(presets::simple1d());
  const auto b = build_chain(k, build_single_delta(1, 1.0, 30), 30);
  EXPECT_EQ(simulate_chain(b.chain, kOrigin, 0, 1), Path{kOrigin});
  EXPECT_EQ(simulate_chain(b.chain, kOrigin, 1000, 9), simulate_chain(b.chain, kOrigin, 1000, 9));
  EXPECT_NE(simulate_chain(b.chain, kOrigin, 1000, 9), simulate_chain(b.chain, kOrigin, 1000, 10));
  const auto path = simulate_chain(b.chain, kOrigin, 1000000, 2024);
  EXPECT_LT(occupation_tv(b.chain, path), 0.01);
  EXPECT_EQ(code_of([&] { simulate_chain(b.chain, make_site({31}), 5, 1); }), Errc::StartOutsideBox);
}

TEST(FeynmanKac, ExactSemigroup) {
  const auto k = validate_kernel(presets::simple1d());
  const auto op0 = truncated_operator(k, build_zero(1, 10), 10);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(21);
  delta[10] = 1.0;
  EXPECT_EQ(fk_semigroup(op0, delta, 0), delta);
  const auto two = fk_semigroup(op0, delta, 2);
  EXPECT_NEAR(two[10], 0.5, 1e-15);
  EXPECT_NEAR(two[12], 0.25, 1e-15);
  const auto four = fk_semigroup(op0, delta, 4);
  EXPECT_NEAR(four[10], 6.0 / 16.0, 1e-15);

  const int n = 2000;
  const auto op = truncated_operator(k, build_single_delta(1, 1.0, n), n);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(op.size()));
  double log_z = 0.0, step = 0.0, last = 0.0;
  for (int j = 1; j <= n; ++j) {
    w = op.matrix * w;
    const double s = w[n];
    w /= s;
    log_z += std::log(s);
    step = last * s;  // (P^j 1)(0) / (P^{j-2} 1)(0); the walk is bipartite, so -r also contributes
    last = s;
  }
  EXPECT_NEAR(step, kLp * kLp, 1e-8);
  EXPECT_NEAR(std::exp(log_z / n), kLp, 1e-3);
}

TEST(FeynmanKac, MonteCarloMatchesExact) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = build_single_delta(1, 1.0, 20);
  const auto one = [](const Site&) { return 1.0; };
  const auto free = fk_monte_carlo(k, build_zero(1, 20), one, 20, 5000, 3);
  EXPECT_EQ(free.estimate, 1.0);
  EXPECT_EQ(free.stderr_, 0.0);

  const auto op = truncated_operator(k, spec, 20);
  const double exact = fk_semigroup(op, Eigen::VectorXd::Ones(41), 20)[20];
  const auto mc = fk_monte_carlo(k, spec, one, 20, 100000, 11);
  EXPECT_LT(std::abs(mc.estimate - exact), 3.0 * mc.stderr_);
  const auto mc3 = fk_monte_carlo(k, spec, one, 20, 300000, 12);
  EXPECT_NEAR(mc.stderr_ / mc3.stderr_, std::sqrt(3.0), 0.2 * std::sqrt(3.0));
}

TEST(FeynmanKac, MonteCarloIndependentOfWorkers) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto spec = build_geometric_sparse(1, 1.0, 2, 50);
  const auto f = [](const Site& x) { return std::cos(0.3 * x[0]); };
  set_worker_count(1);
  const auto a = fk_monte_carlo(k, spec, f, 15, 20000, 77);
  set_worker_count(5);
  const auto b = fk_monte_carlo(k, spec, f, 15, 20000, 77);
  set_worker_count(0);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(Gibbs, TrivialAndFreeCases) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto g1 = gibbs_marginal(k, build_single_delta(1, 1.5, 10), 1, 0, 4);
  EXPECT_NEAR(g1.Z, 2.5, 1e-14);
  ASSERT_EQ(g1.law.size(), 1u);
  EXPECT_NEAR(g1.law.begin()->second, 1.0, 1e-14);
  const auto g0 = gibbs_marginal(k, build_zero(1, 30), 12, 1, 12);
  EXPECT_NEAR(g0.Z, 1.0, 1e-14);
  EXPECT_NEAR(g0.law.at(Path{make_site({1})}), 0.35, 1e-14);
  EXPECT_NEAR(g0.law.at(Path{make_site({0})}), 0.3, 1e-14);
  EXPECT_EQ(code_of([&] { gibbs_marginal(k, build_zero(1, 30), 12, 1, 11); }), Errc::HorizonExceedsBox);
}

TEST(Gibbs, MarginalsAreProbabilities) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = build_geometric_sparse(1, 1.0, 3, 100, SiteValue{kOrigin, 2.0});
  for (int N : {5, 17, 40}) {
    for (int kk : {1, 3}) {
      double s = 0.0;
      for (const auto& [p, w] : gibbs_marginal(k, spec, N, kk, N).law) s += w;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Gibbs, NuMarginalTwoWays) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto b = build_chain(k, build_geometric_sparse(1, 1.0, 3, 60, SiteValue{kOrigin, 2.0}), 60);
  for (int kk : {1, 2, 4}) {
    const auto paths = nu_marginal(b.chain, kk);
    const auto site = nu_site_marginal(b.chain, kk);
    Eigen::VectorXd from_paths = Eigen::VectorXd::Zero(site.size());
    for (const auto& [p, w] : paths) from_paths[static_cast<Eigen::Index>(b.chain.box.index_unchecked(p.back()))] += w;
    EXPECT_LT((from_paths - site).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Gibbs, ConvergenceToChainLaw) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto spec = build_geometric_sparse(1, 1.0, 3, 200, SiteValue{kOrigin, 2.0});
  const auto b = build_chain(k, spec, 200);
  std::vector<int> ns;
  for (int n = 10; n <= 60; n += 2) ns.push_back(n);
  const auto constant = convergence_rate(k, spec, b.chain, 1, ns, [](const Path&) { return 1.0; });
  for (double d : constant.D) EXPECT_LT(d, 1e-13);
  const auto fit = convergence_rate(k, spec, b.chain, 1, ns, [](const Path& p) { return p[0] == make_site({1}) ? 1.0 : 0.0; });
  EXPECT_LT(fit.epsilon, 1.0);
  EXPECT_GT(fit.D.front(), fit.D.back());
}

TEST(Partition, GrowthAndSandwich) {
  const auto k = validate_kernel(presets::simple1d());
  const auto free = partition_growth(k, build_zero(1, 50), 50);
  for (double z : free.root) EXPECT_NEAR(z, 1.0, 1e-14);
  const auto pg = partition_growth(k, build_single_delta(1, 1.0, 200), 200);
  for (std::size_t i = 0; i < pg.root.size(); ++i) {
    EXPECT_LE(pg.root[i], pg.upper + 1e-14);
    EXPECT_GE(pg.root[i], pg.lower[i] - 1e-14);
  }
  // bipartite walk: Z_N carries a (-r)^N component, so monotonicity holds along each parity
  for (std::size_t i = 20; i + 2 < pg.root.size(); ++i) EXPECT_LE(pg.root[i + 2], pg.root[i] + 1e-15);
  EXPECT_GT(pg.root.back(), kLp);
  const auto lazy = partition_growth(validate_kernel(presets::lazy1d(0.3)), build_single_delta(1, 1.0, 200), 200);
  for (std::size_t i = 20; i + 1 < lazy.root.size(); ++i) EXPECT_LE(lazy.root[i + 1], lazy.root[i] + 1e-15);
}

TEST(Gibbs, ConvergenceRateAgainstSpectralRatio) {
  const auto k = validate_kernel(presets::lazy1d(0.3));
  const auto spec = build_geometric_sparse(1, 1.0, 3, 200, SiteValue{kOrigin, 2.0});
  const auto b = build_chain(k, spec, 200);
  const auto v = full_spectrum(b.op, false).values;
  const double ratio = std::max(std::abs(v[0]), std::abs(v[v.size() - 2])) / v[v.size() - 1];
  std::vector<int> ns;
  for (int n = 10; n <= 60; ++n) ns.push_back(n);
  const auto fit = convergence_rate(k, spec, b.chain, 1, ns, [](const Path& p) { return p[0] == make_site({1}) ? 1.0 : 0.0; });
  EXPECT_NEAR(fit.epsilon / ratio, 1.0, 0.15);
}
