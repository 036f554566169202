#pragma once

// The acceptance battery: fourteen oracle and property checks with fixed inputs and tolerances.
// Each criterion records named measurements; the detail string is deterministic, timings are kept apart.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sparsewalk/birman_schwinger.hpp"
#include "sparsewalk/experiments.hpp"
#include "sparsewalk/gibbs.hpp"
#include "sparsewalk/inertia.hpp"
#include "sparsewalk/spectral.hpp"

namespace sparsewalk::acceptance {

struct Outcome {
  std::vector<std::string> notes;
  std::vector<std::string> failures;

  void note(const std::string& key, double value) { notes.push_back(key + "=" + format_number(value)); }
  void note(const std::string& key, const std::string& value) { notes.push_back(key + "=" + value); }
  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double time_limit = 0.0;  // 0: none
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;
  std::function<void(Outcome&)> body;
};

namespace detail {

inline double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline PotentialSpec anchor_spec(int R) { return build_geometric_sparse(1, 1.0, 3, R, SiteValue{kOrigin, 2.0}); }

inline double lazy_phi(double q, double lambda) {
  const double sd = std::sqrt((lambda - 1.0) * (lambda - (2.0 * q - 1.0)));
  return (lambda - q - sd) / (1.0 - q);
}

inline WalkKernel lazy(double q) { return validate_kernel(presets::lazy1d(q)); }

// 1
inline void green_oracles(Outcome& o) {
  double worst = 0.0;
  for (double q : {0.0, 0.25, 0.5}) {
    const auto k = lazy(q);
    for (double lam : {1.25, -1.25, 2.0, -2.0, 10.0, -10.0}) {
      const double closed = g_lambda_closed_1d(q, lam, 0).value;
      worst = std::max(worst, std::abs(g_lambda_quadrature(k, lam).value - closed));
      worst = std::max(worst, std::abs(g_lambda_series(k, lam).value - closed));
    }
  }
  o.note("max_disagreement", worst);
  o.require(worst < 1e-8, "closed form, quadrature and series differ by " + format_number(worst));
}

// 2
inline void paper_values(Outcome& o) {
  const auto k = lazy(0.25);
  const double g1q = g_lambda_quadrature(k, -1.0).value;  // (2q-1)/(2q)
  const double g1c = g_lambda_closed_1d(0.25, -1.0, 0).value;
  const double g2q = g_lambda_quadrature(k, -2.0).value;  // (2q-1)/q
  const double g2c = g_lambda_closed_1d(0.25, -2.0, 0).value;
  const double want2 = std::sqrt(0.5) / 0.75;
  o.note("g(-1)", g1q);
  o.note("g(-2)", g2q);
  o.require(std::abs(g1q - 1.0) < 1e-9 && std::abs(g1c - 1.0) < 1e-9, "g at (2q-1)/(2q) is not 1");
  o.require(std::abs(g2q - want2) < 1e-9 && std::abs(g2c - want2) < 1e-9, "g at (2q-1)/q is not sqrt(1-2q)/(1-q)");
  // q = 1/2: lambda = 0 is the bottom edge, so g_0(0) is the limit from below
  const auto h = lazy(0.5);
  const double edge = g_lambda_closed_1d(0.5, -1e-20, 0).value;
  const double near_q = g_lambda_quadrature(h, -1e-6).value;
  const double near_c = g_lambda_closed_1d(0.5, -1e-6, 0).value;
  o.note("g0(0-)", edge);
  o.note("g(-1e-6)", near_q);
  o.require(std::abs(edge) < 1e-9, "g_0(0) at q=1/2 is not 0");
  o.require(std::abs(near_q - near_c) < 1e-9, "quadrature and closed form disagree next to the edge");
}

// 3
inline void single_delta(Outcome& o) {
  double worst_ev = 0.0, worst_rate = 0.0;
  for (double q : {0.0, 0.25}) {
    const auto k = lazy(q);
    for (double v : {0.5, 1.0, 2.0}) {
      const auto op = truncated_operator(k, build_single_delta(1, v, 60), 60);
      const auto fs = full_spectrum(op);
      const double top = fs.values.maxCoeff();
      const auto pp = refine_perron(op, top, fs.vectors.col(fs.vectors.cols() - 1));
      const double lp = lambda_pm_1d(q, v).second;
      const double rate = eigenfunction_decay(op.box, pp.phi).rate;
      worst_ev = std::max(worst_ev, std::abs(top - lp));
      worst_rate = std::max(worst_rate, std::abs(rate + std::log(lazy_phi(q, lp))));
    }
  }
  o.note("max_eigenvalue_error", worst_ev);
  o.note("max_rate_error", worst_rate);
  o.require(worst_ev < 1e-6, "top eigenvalue misses lambda_+ by " + format_number(worst_ev));
  o.require(worst_rate < 1e-4, "decay rate misses -ln phi by " + format_number(worst_rate));
}

// 4
inline void birman_schwinger(Outcome& o) {
  double worst_cross = 0.0;
  for (double q : {0.0, 0.25}) {
    const auto k = lazy(q);
    for (double v : {0.5, 1.0, 2.0}) {
      const auto spec = build_single_delta(1, v, 60);
      const double lam = bs_crossing(k, spec, LatticeBox(1, 60), 1.03, 2.0 + v);
      const double top = full_spectrum(truncated_operator(k, spec, 60), false).values.maxCoeff();
      worst_cross = std::max(worst_cross, std::abs(lam - top));
    }
    const auto spec = anchor_spec(120);
    const double top = full_spectrum(truncated_operator(k, spec, 120), false).values.maxCoeff();
    const double lam = bs_crossing(k, spec, LatticeBox(1, 120), lambda_pm_1d(q, 1.0).second + 0.05, 4.0);
    worst_cross = std::max(worst_cross, std::abs(lam - top));
  }
  struct Case {
    double q;
    PotentialSpec spec;
    double lambda;
  };
  const std::vector<Case> cases = {{0.0, build_single_delta(1, 1.0, 40), 2.0},
                                   {0.0, anchor_spec(40), 2.5},
                                   {0.0, anchor_spec(40), -2.2},
                                   {0.25, anchor_spec(40), 2.5},
                                   {0.25, build_geometric_sparse(1, 1.0, 2, 40), -1.5}};
  double worst_res = 0.0;
  for (const auto& c : cases) {
    const auto k = lazy(c.q);
    const auto R = resolvent_via_bs(k, c.spec, c.lambda, 40);
    const auto D = direct_resolvent(truncated_operator(k, c.spec, 40), c.lambda);
    for (auto i : interior_indices(R.box)) {
      for (auto j : interior_indices(R.box)) {
        const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
        worst_res = std::max(worst_res, std::abs(R.matrix(a, b) - D(a, b)));
      }
    }
  }
  o.note("max_crossing_error", worst_cross);
  o.note("max_resolvent_error", worst_res);
  o.require(worst_cross < 1e-6, "BS crossing differs from the eigensolver by " + format_number(worst_cross));
  o.require(worst_res < 1e-6, "BS resolvent differs from the direct inverse by " + format_number(worst_res));
}

// 5
inline void essential_accumulation(Outcome& o) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = build_geometric_sparse(1, 1.0, 3, 1024);
  const auto [lm, lp] = lambda_pm_1d<MpReal>(MpReal(0), MpReal(1));
  const std::vector<int> Ls{256, 512, 1024};
  std::vector<SpectrumDistance> up(Ls.size()), down(Ls.size());
  parallel_tasks(Ls.size(), [&](std::size_t i) {
    const auto band = banded_sym<MpReal>(truncated_operator(k, spec, Ls[i]), k);
    up[i] = distance_to_spectrum(band, lp, 1e-90, 1.0);
    down[i] = distance_to_spectrum(band, lm, 1e-90, 1.0);
  });
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    const std::string L = std::to_string(Ls[i]);
    o.note("d+[L=" + L + "]", (up[i].below_floor ? "<=" : "") + format_number(up[i].distance));
    o.note("d-[L=" + L + "]", (down[i].below_floor ? "<=" : "") + format_number(down[i].distance));
  }
  // a floor hit is an upper bound, which only strengthens the ratio for the last box
  o.require(!up.front().below_floor && up.front().distance >= 2.0 * up.back().distance,
            "distance to lambda_+ does not halve from the first to the last box");
  o.require(!down.front().below_floor && down.front().distance >= 2.0 * down.back().distance,
            "distance to lambda_- does not halve from the first to the last box");
}

// 6
inline void spectral_gap(Outcome& o) {
  const auto k = validate_kernel(presets::simple1d());
  const auto s = spectral_report(k, anchor_spec(160), {80, 120, 160});
  const double lp = lambda_pm_1d(0.0, 1.0).second;
  const auto& a = s.reports[1];
  const auto& b = s.reports[2];
  bool positive = true;
  for (const auto& rep : s.reports) positive = positive && rep.phi_positive;
  o.note("r", b.r);
  o.note("cauchy", std::abs(a.r - b.r));
  o.note("excess_over_lambda_plus", b.r - lp);
  o.require(std::abs(a.r - b.r) < 1e-6, "r is not Cauchy in L");
  o.require(b.r - lp > 1e-3, "r does not exceed lambda_+(1) by 1e-3");
  o.require(positive, "Perron vector has a nonpositive entry");
}

// 7
inline void absolute_gap(Outcome& o) {
  const auto spec = anchor_spec(200);
  {
    const auto k = validate_kernel(presets::simple1d());
    const auto J = bipartite_detect(k);
    o.require(J.has_value(), "no bipartite sign found for q=0");
    const auto v = full_spectrum(truncated_operator(k, spec, 200), false).values;
    double asym = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) asym = std::max(asym, std::abs(v[i] + v[v.size() - 1 - i]));
    const auto gp = gap_projection_test(k, spec, 200);
    o.note("q0_asymmetry", asym);
    o.note("q0_epsilon", gp.epsilon);
    o.note("q0_predicted", gp.predicted);
    o.require(asym < 1e-10, "q=0 spectrum is not negation symmetric");
    o.require(gp.two_term, "q=0 projection is not two-term");
    o.require(gp.epsilon < 1.0 && std::abs(gp.epsilon / gp.predicted - 1.0) <= 0.1,
              "q=0 fitted contraction does not match second_abs/r within 10%");
  }
  {
    const auto k = lazy(0.3);
    const auto dom = diag_dominance_check(k);
    const auto ex = extreme_spectrum(truncated_operator(k, spec, 200));
    const auto gp = gap_projection_test(k, spec, 200);
    o.note("q03_margin", dom.margin);
    o.note("q03_ell_plus_r", ex.ell + ex.r);
    o.note("q03_epsilon", gp.epsilon);
    o.note("q03_predicted", gp.predicted);
    o.require(dom.holds && std::abs(dom.margin - 0.3) < 1e-12, "q=0.3 dominance margin is not 0.3");
    o.require(ex.ell > -ex.r, "q=0.3 bottom edge is not above -r");
    o.require(!gp.two_term && gp.epsilon < 1.0 && std::abs(gp.epsilon / gp.predicted - 1.0) <= 0.1,
              "q=0.3 one-term projection does not contract at second_abs/r");
  }
}

// 8
inline void edge_inequality(Outcome& o) {
  RawKernel two_step{1, {{make_site({0}), 0.2}, {make_site({1}), 0.25}, {make_site({-1}), 0.25},
                         {make_site({2}), 0.15}, {make_site({-2}), 0.15}}};
  struct Item {
    WalkKernel k;
    PotentialSpec spec;
    int L;
  };
  std::vector<Item> items;
  for (const auto& raw : {presets::simple1d(), presets::lazy1d(0.25), presets::lazy1d(0.3), presets::lazy1d(0.5), two_step}) {
    const auto k = validate_kernel(raw);
    for (const auto& s : {build_zero(1, 60), build_single_delta(1, 1.0, 60), anchor_spec(60),
                          build_geometric_sparse(1, 1.0, 2, 60), build_decaying(1, 1.0, 0.5, 60), build_constant(1, 0.5, 60)})
      items.push_back({k, s, 60});
  }
  const auto k2 = validate_kernel(presets::simple2d());
  for (const auto& s : {build_zero(2, 20), build_single_delta(2, 1.0, 20), build_geometric_sparse(2, 1.0, 2, 20, std::nullopt, true),
                        build_decaying(2, 1.0, 0.5, 20)})
    items.push_back({k2, s, 20});
  std::vector<double> slack(items.size());
  parallel_tasks(items.size(), [&](std::size_t i) { slack[i] = edge_inequality_check(items[i].k, items[i].spec, items[i].L).slack; });
  const double worst = *std::min_element(slack.begin(), slack.end());
  o.note("cases", static_cast<double>(items.size()));
  o.note("min_slack", worst);
  o.require(worst >= -1e-8, "edge inequality slack " + format_number(worst) + " below -1e-8");
}

// 9
inline void compactness(Outcome& o) {
  const auto k = validate_kernel(presets::simple1d());
  const auto sparse = assemble_bs(k, build_geometric_sparse(1, 1.0, 3, 1000), 2.0, LatticeBox(1, 1000));
  const auto dense = assemble_bs(k, build_constant(1, 1.0, 200), 2.0, LatticeBox(1, 200));
  double prev = INFINITY, dense_min = INFINITY;
  bool decreasing = true;
  for (double N : {8.0, 32.0, 128.0}) {
    const double s = off_diag_tail_norm(sparse, N);
    const double d = off_diag_tail_norm(dense, N);
    o.note("sparse[N=" + format_number(N) + "]", s);
    o.note("dense[N=" + format_number(N) + "]", d);
    decreasing = decreasing && s < prev;
    prev = s;
    dense_min = std::min(dense_min, d);
  }
  o.require(decreasing, "sparse tail norm is not decreasing");
  o.require(prev < 1e-3, "sparse tail norm does not fall below 1e-3");
  o.require(dense_min > 0.05, "dense control tail norm drops to " + format_number(dense_min));
}

// 10
inline void decay_certificate(Outcome& o) {
  const auto k = validate_kernel(presets::simple1d());
  const double rate = green_decay_along_axis(k, 2.0).rate;
  const auto cert = neumann_invertibility(k, build_geometric_sparse(1, 1.0, 3, 1000), {}, 2.0, 0.5 * rate, LatticeBox(1, 1000));
  o.note("epsilon0", cert.epsilon0);
  o.note("contraction", cert.contraction);
  o.require(cert.valid && cert.epsilon0 > 0.0 && cert.contraction < 1.0, "Neumann certificate at lambda=2 is not valid");
  const auto s = spectral_report(k, build_geometric_sparse(1, 1.0, 3, 800), {400, 600, 800});
  const auto& rep = s.reports.back();
  double min_rate = INFINITY, max_res = 0.0;
  for (const auto& d : rep.discrete) {
    min_rate = std::min(min_rate, d.decay.rate);
    max_res = std::max(max_res, d.decay.residual);
  }
  o.note("discrete", static_cast<double>(rep.discrete.size()));
  o.note("min_rate", min_rate);
  o.note("max_residual", max_res);
  o.require(!(min_rate <= 0.0) && !std::isnan(min_rate), "a discrete eigenfunction has nonpositive decay rate");
  o.require(max_res < 0.1, "log-linear decay fit residual " + format_number(max_res) + " is not below 0.1");
}

// 11
inline void gibbs_convergence(Outcome& o) {
  const auto k = lazy(0.3);
  const auto spec = build_geometric_sparse(1, 1.0, 3, 200, SiteValue{kOrigin, 2.0});
  const auto pc = principal_chain(k, spec, 200);
  std::vector<int> ns;
  for (int n = 10; n <= 60; ++n) ns.push_back(n);
  const auto fit = convergence_rate(k, spec, pc.chain, 1, ns, [](const Path& p) { return p[0] == make_site({1}) ? 1.0 : 0.0; });
  const double predicted = pc.second_abs / pc.perron.r;
  o.note("epsilon", fit.epsilon);
  o.note("predicted", predicted);
  o.note("fitted_points", static_cast<double>(fit.fitted_points));
  o.require(std::abs(fit.epsilon / predicted - 1.0) <= 0.15, "fitted contraction is not within 15% of second_abs/r");
}

// 12
inline void partition_growth_check(Outcome& o) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = anchor_spec(200);
  const auto pg = partition_growth(k, spec, 200);
  const double r = full_spectrum(truncated_operator(k, spec, 200), false).values.maxCoeff();
  const double root = pg.root.back();
  // Z_N ~ c r^N, so the two-step ratio removes the prefactor c
  const double ratio = std::exp(0.5 * (200.0 * std::log(pg.root[199]) - 198.0 * std::log(pg.root[197])));
  o.note("Z_root", root);
  o.note("r", r);
  o.note("deviation", std::abs(root - r));
  o.note("two_step_ratio_estimate", ratio);
  o.require(std::abs(root - r) < 1e-3, "Z_N^(1/N) at N=200 is " + format_number(std::abs(root - r)) + " from r");
}

// 13
inline void monte_carlo(Outcome& o) {
  const auto k = validate_kernel(presets::simple1d());
  const auto spec = anchor_spec(40);
  const auto one = [](const Site&) { return 1.0; };
  const auto op = truncated_operator(k, spec, 20);
  const double exact = fk_semigroup(op, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(op.size())), 20)
      [static_cast<Eigen::Index>(op.box.index_unchecked(kOrigin))];
  const auto mc = fk_monte_carlo(k, spec, one, 20, 100000, 11);
  const auto mc3 = fk_monte_carlo(k, spec, one, 20, 300000, 12);
  const double z = std::abs(mc.estimate - exact) / mc.stderr_;
  const double scaling = mc.stderr_ / mc3.stderr_;
  o.note("exact", exact);
  o.note("estimate", mc.estimate);
  o.note("z", z);
  o.note("stderr_ratio", scaling);
  o.require(z <= 3.0, "Monte Carlo estimate is " + format_number(z) + " standard errors from the semigroup");
  o.require(std::abs(scaling / std::sqrt(3.0) - 1.0) <= 0.2, "stderr does not scale like sqrt(samples)");
}

// 14
inline void weyl_scaling(Outcome& o) {
  const std::vector<double> ns{25, 50, 100, 200};
  std::vector<double> logn;
  for (double n : ns) logn.push_back(std::log(n));
  for (int d : {1, 2}) {
    const auto k = validate_kernel(d == 1 ? presets::simple1d() : presets::simple2d());
    const std::vector<double> theta(static_cast<std::size_t>(d), 0.0);
    std::vector<double> logr;
    for (double n : ns) logr.push_back(std::log(weyl_sequence_residual(k, theta, 1.0, static_cast<int>(n))));
    const double s = slope(logn, logr);
    o.note("exponent[d=" + std::to_string(d) + "]", s);
    o.require(s >= -0.65 && s <= -0.35, "d=" + std::to_string(d) + " residual exponent " + format_number(s) + " outside [-0.65,-0.35]");
  }
}

}  // namespace detail

inline const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list = {
      {1, "green_oracle_agreement", 5.0, detail::green_oracles},
      {2, "closed_form_values", 0.0, detail::paper_values},
      {3, "single_delta_exactness", 30.0, detail::single_delta},
      {4, "birman_schwinger_correspondence", 0.0, detail::birman_schwinger},
      {5, "essential_spectrum_accumulation", 120.0, detail::essential_accumulation},
      {6, "spectral_gap", 0.0, detail::spectral_gap},
      {7, "absolute_gap_dichotomy", 0.0, detail::absolute_gap},
      {8, "edge_inequality", 0.0, detail::edge_inequality},
      {9, "compactness_witness", 0.0, detail::compactness},
      {10, "decay_certificate", 0.0, detail::decay_certificate},
      {11, "gibbs_convergence", 60.0, detail::gibbs_convergence},
      {12, "partition_growth", 0.0, detail::partition_growth_check},
      {13, "monte_carlo_consistency", 0.0, detail::monte_carlo},
      {14, "weyl_sequence_scaling", 0.0, detail::weyl_scaling},
  };
  return list;
}

inline CriterionResult run_criterion(const Criterion& c) {
  CriterionResult r;
  r.id = c.id;
  r.name = c.name;
  r.time_limit = c.time_limit;
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.body(o);
  } catch (const Error& e) {
    o.failures.push_back(std::string("error: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (c.time_limit > 0.0 && r.seconds >= c.time_limit)
    o.failures.push_back("runtime " + format_number(std::round(r.seconds * 10) / 10) + " s exceeds " + format_number(c.time_limit) + " s");
  r.passed = o.failures.empty();
  std::string detail;
  for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
  for (const auto& f : o.failures) detail += (detail.empty() ? "" : "; ") + std::string("FAILED: ") + f;
  r.detail = detail;
  return r;
}

inline const Criterion& criterion(int id) {
  for (const auto& c : criteria()) {
    if (c.id == id) return c;
  }
  fail(Errc::InvalidArgument, "cli", "no acceptance criterion " + std::to_string(id));
}

/// One line per criterion: "[PASS] 01 name (1.2 s) detail".
inline std::string format_line(const CriterionResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "[%s] %02d %s (%.1f s) ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds);
  return head + r.detail;
}

}  // namespace sparsewalk::acceptance
