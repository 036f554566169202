#pragma once

// One runner per experiment kind. Each returns CSV tables, a JSON summary and the invariant
// checks it evaluated; nothing here depends on wall-clock time or worker count.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sparsewalk/birman_schwinger.hpp"
#include "sparsewalk/config.hpp"
#include "sparsewalk/gibbs.hpp"
#include "sparsewalk/io.hpp"
#include "sparsewalk/spectral.hpp"

namespace sparsewalk {

struct Check {
  std::string name;
  std::string module;
  bool passed = false;
  std::string detail;
};

struct RunOutput {
  std::string name;
  ExperimentKind kind = ExperimentKind::validate;
  std::vector<std::pair<std::string, CsvTable>> tables;  // file suffix -> table ("" is the main table)
  std::vector<std::pair<std::string, std::string>> files;
  Json results = Json::object();
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  const Check* first_failure() const {
    for (const auto& c : checks) {
      if (!c.passed) return &c;
    }
    return nullptr;
  }

  Json summary() const {
    Json s;
    s["schema_version"] = kSchemaVersion;
    s["name"] = name;
    s["kind"] = std::string(to_string(kind));
    s["status"] = passed() ? "ok" : "failed";
    s["results"] = results;
    Json cs = Json::array();
    for (const auto& c : checks) cs.push_back({{"name", c.name}, {"module", c.module}, {"passed", c.passed}, {"detail", c.detail}});
    s["checks"] = cs;
    return s;
  }
};

/// Principal eigenpair of a truncation and the Doob chain built from it.
struct PrincipalChain {
  TruncatedOperator op;
  PerronPair perron;
  ChainKernel chain;
  double ell = 0.0;
  double second_abs = 0.0;  // excludes -r for bipartite kernels with ell = -r
};

inline PrincipalChain principal_chain(const WalkKernel& k, const PotentialSpec& spec, int L) {
  PrincipalChain pc{truncated_operator(k, spec, L), {}, {}, 0.0, 0.0};
  const auto ex = extreme_spectrum(pc.op);
  pc.perron = refine_perron(pc.op, ex.r, ex.top_psi);
  pc.chain = doob_kernel(pc.op, pc.perron.r, pc.perron.phi);
  pc.ell = ex.ell;
  const auto n = ex.values.size();
  const bool mirrored = bipartite_detect(k).has_value() && std::abs(ex.ell + ex.r) < 1e-9;
  double s = std::abs(ex.values[n - 2]);
  for (Eigen::Index i = mirrored ? 1 : 0; i < n - 1; ++i) s = std::max(s, std::abs(ex.values[i]));
  pc.second_abs = s;
  return pc;
}

namespace detail {

inline std::vector<std::string> site_columns(int dim) {
  if (dim == 1) return {"x"};
  std::vector<std::string> out;
  for (int a = 1; a <= dim; ++a) out.push_back("x" + std::to_string(a));
  return out;
}

inline void push_site(std::vector<Cell>& row, const Site& s, int dim) {
  for (int a = 0; a < dim; ++a) row.emplace_back(static_cast<long long>(s[static_cast<std::size_t>(a)]));
}

inline Json site_json(const Site& s, int dim) {
  Json j = Json::array();
  for (int a = 0; a < dim; ++a) j.push_back(s[static_cast<std::size_t>(a)]);
  return j;
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline std::string num(double x) { return format_number(x); }

inline void add_check(RunOutput& out, std::string name, std::string_view module, bool ok, std::string detail) {
  out.checks.push_back({std::move(name), std::string(module), ok, std::move(detail)});
}

struct Context {
  const ExperimentConfig& cfg;
  WalkKernel kernel;
  PotentialSpec spec;
  int dim;
};

inline void require_off_spectrum_config(const WalkKernel& k, double lambda, double margin, const std::string& what) {
  const auto& s = k.spectrum();
  if (lambda >= s.lower - margin && lambda <= s.upper + margin)
    config_error(what + " = " + num(lambda) + " lies within " + num(margin) + " of the spectrum [" + num(s.lower) + ", " +
                 num(s.upper) + "]");
}

// ---- validate

inline void run_validate(const Context& c, RunOutput& out) {
  const auto& k = c.kernel;
  CsvTable t({"check", "value", "passed"});
  const bool normalized = k.normalization_defect() < 1e-12;
  t.add({std::string("normalization_defect"), k.normalization_defect(), normalized});
  add_check(out, "kernel_normalized", "lattice_kernel", normalized, "defect " + num(k.normalization_defect()));
  bool symmetric = true;
  for (const auto& e : k.entries()) symmetric = symmetric && k.at(-e.offset) == e.prob;
  t.add({std::string("symmetric"), symmetric ? 1.0 : 0.0, symmetric});
  add_check(out, "kernel_symmetric", "lattice_kernel", symmetric, "");
  const bool top = std::abs(k.spectrum().upper - 1.0) < 1e-12;
  t.add({std::string("spectrum_upper"), k.spectrum().upper, top});
  add_check(out, "spectrum_top_is_one", "lattice_kernel", top, "upper " + num(k.spectrum().upper));
  t.add({std::string("spectrum_lower"), k.spectrum().lower, k.spectrum().lower >= -1.0 - 1e-12});
  const bool bounded = c.spec.bound() >= c.spec.v0();
  t.add({std::string("potential_bound"), c.spec.bound(), bounded});
  add_check(out, "potential_bound_covers_v0", "potential", bounded, "bound " + num(c.spec.bound()) + " v0 " + num(c.spec.v0()));

  const auto J = bipartite_detect(k);
  const auto dom = diag_dominance_check(k);
  out.results["kernel"] = c.cfg.kernel.label;
  out.results["dim"] = k.dim();
  out.results["range"] = k.range();
  out.results["p0"] = k.p0();
  out.results["normalization_defect"] = k.normalization_defect();
  out.results["spectrum_lower"] = k.spectrum().lower;
  out.results["spectrum_upper"] = k.spectrum().upper;
  out.results["bipartite"] = J.has_value();
  out.results["diag_dominance_margin"] = dom.margin;
  out.results["restricted_symbol_min"] = restricted_symbol_min(k);
  out.results["potential_tail"] = std::string(to_string(c.spec.tail()));
  out.results["v0"] = c.spec.v0();
  out.results["bound"] = c.spec.bound();
  out.results["essential_values"] = c.spec.declared_essential_values();
  out.results["support_sites"] = c.spec.support(c.spec.box_radius()).size();
  out.tables.emplace_back("", std::move(t));
}

// ---- green

// Every row reports g_lambda(x) = lambda G_lambda(0, x), whatever the method.

inline void run_green(const Context& c, RunOutput& out) {
  const Json& p = c.cfg.params;
  const auto lambdas = get_numbers(p, "lambdas");
  if (lambdas.empty()) config_error("params.lambdas must not be empty");
  std::vector<Site> sites;
  if (const Json* f = field(p, "sites")) {
    if (!f->is_array()) config_error("params.sites must be a list of sites");
    for (const auto& s : *f) sites.push_back(parse_site(s, c.dim, "params.sites"));
  } else {
    sites.push_back(kOrigin);
  }
  const int pts = static_cast<int>(get_integer(p, "pts_per_axis", 64));
  const double agree_tol = get_number(p, "agree_tol", 1e-8);
  std::vector<std::string> methods;
  if (const Json* f = field(p, "methods")) {
    if (!f->is_array()) config_error("params.methods must be a list");
    for (const auto& m : *f) {
      if (!m.is_string()) config_error("params.methods entries must be strings");
      methods.push_back(m.get<std::string>());
    }
  } else {
    methods = {"quadrature", "series"};
    if (c.cfg.kernel.lazy_q) methods.push_back("closed_1d");
  }
  for (const auto& m : methods) {
    if (m != "quadrature" && m != "series" && m != "closed_1d") config_error("unknown Green method '" + m + "'");
    if (m == "closed_1d" && !c.cfg.kernel.lazy_q) config_error("closed_1d needs the simple1d or lazy1d kernel");
  }
  for (double lam : lambdas) require_off_spectrum_config(c.kernel, lam, 0.0, "lambda");

  auto header = std::vector<std::string>{"lambda"};
  for (auto& s : site_columns(c.dim)) header.push_back(s);
  for (const char* h : {"value", "method", "est_error"}) header.emplace_back(h);
  CsvTable t(header);
  double worst = 0.0;
  for (double lam : lambdas) {
    for (const Site& x : sites) {
      std::vector<GreenEvaluation> evs;
      for (const auto& m : methods) {
        if (m == "quadrature") {
          auto e = green_kernel(c.kernel, lam, x, pts);
          e.value *= lam;
          e.est_error *= std::abs(lam);
          evs.push_back(e);
        } else if (m == "series" && x == kOrigin) {
          evs.push_back(g_lambda_series(c.kernel, lam));
        } else if (m == "closed_1d") {
          evs.push_back(g_lambda_closed_1d(*c.cfg.kernel.lazy_q, lam, x[0]));
        }
      }
      for (const auto& e : evs) {
        std::vector<Cell> row{lam};
        push_site(row, x, c.dim);
        row.emplace_back(e.value);
        row.emplace_back(std::string(to_string(e.method)));
        row.emplace_back(e.est_error);
        t.add(row);
        worst = std::max(worst, std::abs(e.value - evs.front().value));
      }
    }
  }
  out.results["max_method_disagreement"] = worst;
  out.results["rows"] = t.rows();
  add_check(out, "green_methods_agree", "resolvent", worst <= agree_tol, "max disagreement " + num(worst));
  out.tables.emplace_back("", std::move(t));
}

// ---- bs

inline Eigen::VectorXd bs_eigenvalues(const BSAssembly& a) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a.matrix, Eigen::EigenvaluesOnly).eigenvalues();
}

/// Number of eigenvalues of G_{V,lambda} above 1; it changes exactly where lambda crosses an eigenvalue of P_V.
inline long bs_count_above_one(const WalkKernel& k, const PotentialSpec& spec, double lam, const LatticeBox& box) {
  const auto ev = bs_eigenvalues(assemble_bs(k, spec, lam, box));
  return static_cast<long>((ev.array() > 1.0).count());
}

inline void run_bs(const Context& c, RunOutput& out) {
  const Json& p = c.cfg.params;
  const double lo = get_number(p, "lambda_from");
  const double hi = get_number(p, "lambda_to");
  const int steps = static_cast<int>(get_integer(p, "steps", 41));
  if (steps < 2) config_error("params.steps must be >= 2");
  if (!(hi > lo)) config_error("params.lambda_to must exceed lambda_from");
  const int R = static_cast<int>(get_integer(p, "box_radius", std::min(c.spec.box_radius(), 200)));
  const bool certify = get_bool(p, "certificate", true);
  const double alpha_fraction = get_number(p, "alpha_fraction", 0.5);
  if (!(alpha_fraction > 0.0 && alpha_fraction < 1.0)) config_error("params.alpha_fraction must lie in (0,1)");
  const double bisect_tol = get_number(p, "bisect_tol", 1e-12);
  const auto& s = c.kernel.spectrum();
  if (lo < s.upper + 0.02 && hi > s.lower - 0.02)
    config_error("scan [" + num(lo) + ", " + num(hi) + "] meets the spectrum [" + num(s.lower) + ", " + num(s.upper) +
                 "] widened by 0.02");
  const LatticeBox box(c.dim, R);

  std::vector<double> lams(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) lams[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (steps - 1);
  std::vector<double> dist(lams.size());
  std::vector<long> above(lams.size());
  std::vector<int> valid(lams.size(), 0);
  parallel_tasks(lams.size(), [&](std::size_t i) {
    const auto a = assemble_bs(c.kernel, c.spec, lams[i], box);
    const auto ev = bs_eigenvalues(a);
    dist[i] = (ev.array() - 1.0).abs().minCoeff();
    above[i] = static_cast<long>((ev.array() > 1.0).count());
    if (certify) {
      try {
        const double rate = green_decay_along_axis(c.kernel, lams[i]).rate;
        valid[i] = neumann_auto(c.kernel, c.spec, lams[i], alpha_fraction * rate, box).valid ? 1 : 0;
      } catch (const Error&) {
        valid[i] = 0;
      }
    }
  });
  CsvTable t({"lambda", "distance_to_1", "valid_certificate"});
  for (std::size_t i = 0; i < lams.size(); ++i) t.add({lams[i], dist[i], valid[i] == 1});

  // refine every bracket where the count changes
  Json eig = Json::array();
  for (std::size_t i = 0; i + 1 < lams.size(); ++i) {
    if (above[i] == above[i + 1]) continue;
    double a = lams[i], b = lams[i + 1];
    const long ca = above[i];
    while (b - a > bisect_tol * std::max(1.0, std::abs(a))) {
      const double m = 0.5 * (a + b);
      if (bs_count_above_one(c.kernel, c.spec, m, box) == ca) a = m; else b = m;
    }
    eig.push_back(0.5 * (a + b));
  }
  out.results["eigenvalues"] = eig;
  out.results["box_radius"] = R;
  out.results["min_distance_to_1"] = *std::min_element(dist.begin(), dist.end());
  if (!eig.empty()) out.results["top_eigenvalue"] = eig.back();
  out.tables.emplace_back("", std::move(t));
}

// ---- spectrum

inline void run_spectrum(const Context& c, RunOutput& out) {
  const auto Ls = get_integers(c.cfg.params, "radii");
  const auto series = spectral_report(c.kernel, c.spec, Ls);
  CsvTable t({"L", "r", "ell", "gap", "abs_gap", "second_abs", "lambda0_pred", "decay_alpha"});
  Json reports = Json::array();
  double prev_r = -INFINITY;
  for (const auto& rep : series.reports) {
    t.add({static_cast<long long>(rep.L), rep.r, rep.ell, rep.gap, rep.abs_gap, rep.second_abs, rep.lambda0, rep.decay.rate});
    Json disc = Json::array();
    for (const auto& d : rep.discrete) disc.push_back({{"value", d.value}, {"decay_rate", d.decay.rate}, {"decay_residual", d.decay.residual}});
    reports.push_back({{"L", rep.L},
                       {"r", rep.r},
                       {"ell", rep.ell},
                       {"complete", rep.complete},
                       {"phi_positive", rep.phi_positive},
                       {"eigenvalues", vector_json(rep.eigenvalues)},
                       {"discrete", disc}});
    add_check(out, "phi_positive[L=" + std::to_string(rep.L) + "]", "spectral_lab", rep.phi_positive, "");
    add_check(out, "perron_dominates[L=" + std::to_string(rep.L) + "]", "spectral_lab", rep.r >= std::abs(rep.ell) - 1e-12,
              "r " + num(rep.r) + " ell " + num(rep.ell));
    add_check(out, "dirichlet_monotone[L=" + std::to_string(rep.L) + "]", "spectral_lab", rep.r >= prev_r - 1e-12,
              "r " + num(rep.r) + " previous " + num(prev_r));
    prev_r = rep.r;
  }
  const auto& last = series.reports.back();
  out.results["r"] = last.r;
  out.results["ell"] = last.ell;
  out.results["gap"] = last.gap;
  out.results["abs_gap"] = last.abs_gap;
  out.results["second_abs"] = last.second_abs;
  out.results["lambda0_pred"] = std::isnan(last.lambda0) ? Json() : Json(last.lambda0);
  out.results["decay_alpha"] = last.decay.rate;
  out.results["bipartite"] = last.bipartite.has_value();
  out.results["lambda_V"] = series.prediction.values();
  out.results["stable_discrete"] = series.stable_discrete;
  out.results["reports"] = reports;
  out.tables.emplace_back("", std::move(t));
}

// ---- essential

inline void run_essential(const Context& c, RunOutput& out) {
  const double root_tol = get_number(c.cfg.params, "root_tol", 1e-8);
  const auto pred = essential_spectrum_predictor(c.kernel, c.spec);
  CsvTable t({"v", "lambda", "side", "g0_minus_target"});
  double worst = 0.0;
  for (const auto& r : pred.roots) {
    const double miss = g_lambda_quadrature(c.kernel, r.lambda).value - (1.0 + 1.0 / r.v);
    worst = std::max(worst, std::abs(miss));
    t.add({r.v, r.lambda, std::string(r.above ? "above" : "below"), miss});
  }
  add_check(out, "roots_solve_g0", "spectral_lab", worst <= root_tol, "max |g(lambda) - 1 - 1/v| = " + num(worst));
  out.results["lambda0_pred"] = pred.lambda0;
  out.results["lambda_V"] = pred.values();
  out.results["roots"] = pred.roots.size();
  out.tables.emplace_back("", std::move(t));
}

// ---- decay

inline void run_decay(const Context& c, RunOutput& out) {
  const Json& p = c.cfg.params;
  const auto Ls = get_integers(p, "radii");
  const auto series = spectral_report(c.kernel, c.spec, Ls);
  const auto& rep = series.reports.back();
  const bool check_residual = field(p, "residual_tol") != nullptr;
  const double residual_tol = check_residual ? get_number(p, "residual_tol") : 0.0;
  CsvTable t({"eigenvalue", "rate", "prefactor", "residual", "points"});
  for (const auto& d : rep.discrete) {
    t.add({d.value, d.decay.rate, d.decay.prefactor, d.decay.residual, static_cast<long long>(d.decay.points)});
    add_check(out, "decay_rate_positive[" + num(d.value) + "]", "spectral_lab", d.decay.rate > 0.0, "rate " + num(d.decay.rate));
    if (check_residual)
      add_check(out, "decay_fit_residual[" + num(d.value) + "]", "spectral_lab", d.decay.residual < residual_tol,
                "residual " + num(d.decay.residual));
  }
  out.results["discrete"] = rep.discrete.size();
  out.results["L"] = rep.L;
  if (const Json* f = field(p, "lambda")) {
    const double lam = as_number(*f, "lambda");
    require_off_spectrum_config(c.kernel, lam, 0.0, "params.lambda");
    const double alpha_fraction = get_number(p, "alpha_fraction", 0.5);
    const double rate = green_decay_along_axis(c.kernel, lam).rate;
    const auto cert = neumann_auto(c.kernel, c.spec, lam, alpha_fraction * rate, LatticeBox(c.dim, rep.L),
                                   static_cast<std::size_t>(get_integer(p, "max_sites", 64)));
    Json K = Json::array();
    for (const auto& s : cert.K) K.push_back(site_json(s, c.dim));
    out.results["certificate"] = {{"lambda", cert.lambda},     {"alpha", cert.alpha},
                                  {"green_rate", cert.green_rate}, {"epsilon0", cert.epsilon0},
                                  {"h_norm", cert.h_norm},     {"h_norm_weighted", cert.h_norm_weighted},
                                  {"contraction", cert.contraction}, {"valid", cert.valid},
                                  {"K", K}};
    add_check(out, "neumann_certificate_valid", "birman_schwinger", cert.valid,
              "epsilon0 " + num(cert.epsilon0) + " contraction " + num(cert.contraction));
  }
  out.tables.emplace_back("", std::move(t));
}

// ---- gibbs

inline void run_gibbs(const Context& c, RunOutput& out) {
  const Json& p = c.cfg.params;
  const int L = static_cast<int>(get_integer(p, "L"));
  const int n_from = static_cast<int>(get_integer(p, "n_from"));
  const int n_to = static_cast<int>(get_integer(p, "n_to"));
  if (n_from < 1 || n_to < n_from) config_error("params needs 1 <= n_from <= n_to");
  const int step = static_cast<int>(get_integer(p, "step", 1));
  Site target{};
  target[0] = 1;
  if (const Json* f = field(p, "site")) target = parse_site(*f, c.dim, "params.site");
  if (step < 1 || step > n_from) config_error("params.step must lie in [1, n_from]");

  const auto pc = principal_chain(c.kernel, c.spec, L);
  std::vector<int> ns;
  for (int n = n_from; n <= n_to; ++n) ns.push_back(n);
  const auto fit = convergence_rate(c.kernel, c.spec, pc.chain, step, ns, [&](const Path& path) {
    return path[static_cast<std::size_t>(step - 1)] == target ? 1.0 : 0.0;
  });
  CsvTable t({"n", "D_n", "fitted_eps"});
  for (std::size_t i = 0; i < fit.n.size(); ++i) t.add({static_cast<long long>(fit.n[i]), fit.D[i], fit.epsilon});
  const double predicted = pc.second_abs / pc.perron.r;
  out.results["epsilon"] = fit.epsilon;
  out.results["predicted"] = predicted;
  out.results["fitted_points"] = fit.fitted_points;
  out.results["r"] = pc.perron.r;
  add_check(out, "gibbs_contraction_below_one", "gibbs_dynamics", fit.epsilon < 1.0, "epsilon " + num(fit.epsilon));
  out.tables.emplace_back("", std::move(t));

  if (const Json* f = field(p, "N_max")) {
    const int N_max = static_cast<int>(as_integer(*f, "N_max"));
    const auto pg = partition_growth(c.kernel, c.spec, N_max);
    CsvTable z({"N", "Z_N_root", "lower", "upper"});
    bool sandwiched = true;
    for (std::size_t i = 0; i < pg.root.size(); ++i) {
      z.add({static_cast<long long>(i + 1), pg.root[i], pg.lower[i], pg.upper});
      sandwiched = sandwiched && pg.root[i] >= pg.lower[i] - 1e-14 && pg.root[i] <= pg.upper + 1e-14;
    }
    out.results["Z_N_root"] = pg.root.back();
    add_check(out, "partition_sandwich", "gibbs_dynamics", sandwiched, "");
    out.tables.emplace_back("partition", std::move(z));
  }
}

// ---- doob

inline void run_doob(const Context& c, RunOutput& out) {
  const Json& p = c.cfg.params;
  const int L = static_cast<int>(get_integer(p, "L"));
  const long steps = static_cast<long>(get_integer(p, "steps"));
  if (steps < 1) config_error("params.steps must be positive");
  Site x0{};
  if (const Json* f = field(p, "x0")) x0 = parse_site(*f, c.dim, "params.x0");
  const double balance_tol = get_number(p, "balance_tol", 1e-12);

  const auto pc = principal_chain(c.kernel, c.spec, L);
  const auto path = simulate_chain(pc.chain, x0, steps, *c.cfg.seed);
  std::vector<double> visits(pc.chain.size(), 0.0);
  for (const Site& s : path) visits[pc.chain.box.index_unchecked(s)] += 1.0;

  auto header = site_columns(c.dim);
  header.emplace_back("stationary");
  header.emplace_back("occupation");
  CsvTable t(header);
  for (std::size_t i = 0; i < pc.chain.size(); ++i) {
    const double m = pc.chain.stationary[static_cast<Eigen::Index>(i)];
    if (m < 1e-300 && visits[i] == 0.0) continue;
    std::vector<Cell> row;
    push_site(row, pc.chain.box.site(i), c.dim);
    row.emplace_back(m);
    row.emplace_back(visits[i] / static_cast<double>(path.size()));
    t.add(row);
  }
  const double balance = detailed_balance_violation(pc.chain);
  out.results["r"] = pc.perron.r;
  out.results["row_deficit"] = pc.chain.row_deficit;
  out.results["detailed_balance_violation"] = balance;
  out.results["occupation_tv"] = occupation_tv(pc.chain, path);
  out.results["steps"] = steps;
  add_check(out, "detailed_balance", "gibbs_dynamics", balance <= balance_tol, "violation " + num(balance));
  out.tables.emplace_back("", std::move(t));

  if (get_bool(p, "dump_path", false)) {
    std::string lines;
    for (const Site& s : path) lines += site_json(s, c.dim).dump() + "\n";
    out.files.emplace_back("path.jsonl", std::move(lines));
  }
}

// ---- fk

inline std::function<double(const Site&)> parse_function(const Json* f, int dim) {
  if (!f || (f->is_string() && f->get<std::string>() == "one")) return [](const Site&) { return 1.0; };
  if (f->is_object() && f->contains("indicator")) {
    const Site s = parse_site((*f)["indicator"], dim, "params.function.indicator");
    return [s](const Site& x) { return x == s ? 1.0 : 0.0; };
  }
  if (f->is_object() && f->contains("plane_wave")) {
    const auto theta = get_numbers(*f, "plane_wave");
    if (static_cast<int>(theta.size()) != dim) config_error("params.function.plane_wave needs one angle per axis");
    return [theta, dim](const Site& x) { return std::cos(dot(theta.data(), x, dim)); };
  }
  config_error("params.function must be \"one\", {\"indicator\": site} or {\"plane_wave\": angles}");
}

inline void run_fk(const Context& c, RunOutput& out) {
  const Json& p = c.cfg.params;
  const int n = static_cast<int>(get_integer(p, "n"));
  const auto samples = static_cast<std::size_t>(get_integer(p, "samples"));
  const double z_max = get_number(p, "z_max", 3.0);
  if (n < 0) config_error("params.n must be nonnegative");
  if (samples < 1000) config_error("params.samples must be >= 1000");
  Site x0{};
  if (const Json* f = field(p, "x0")) x0 = parse_site(*f, c.dim, "params.x0");
  const auto fn = parse_function(field(p, "function"), c.dim);

  const auto mc = fk_monte_carlo(c.kernel, c.spec, fn, n, samples, *c.cfg.seed, x0);
  // a box of radius |x0| + n r holds every n-step path, so the truncated semigroup is exact there
  const int L = std::max(norm_inf(x0) + n * c.kernel.range(), 4 * c.kernel.range());
  const auto op = truncated_operator(c.kernel, c.spec, L);
  Eigen::VectorXd f(static_cast<Eigen::Index>(op.size()));
  for (std::size_t i = 0; i < op.size(); ++i) f[static_cast<Eigen::Index>(i)] = fn(op.box.site(i));
  const double exact = fk_semigroup(op, f, n)[static_cast<Eigen::Index>(op.box.index_unchecked(x0))];
  const double diff = std::abs(mc.estimate - exact);
  const double z = mc.stderr_ > 0.0 ? diff / mc.stderr_ : (diff <= 1e-12 * std::max(1.0, std::abs(exact)) ? 0.0 : INFINITY);
  CsvTable t({"n", "samples", "estimate", "stderr", "exact", "z"});
  t.add({static_cast<long long>(n), static_cast<long long>(samples), mc.estimate, mc.stderr_, exact, z});
  out.results["estimate"] = mc.estimate;
  out.results["stderr"] = mc.stderr_;
  out.results["exact"] = exact;
  out.results["z"] = z;
  add_check(out, "monte_carlo_within_z_max", "gibbs_dynamics", z <= z_max, "z " + num(z));
  out.tables.emplace_back("", std::move(t));
}

/// {"key": {"value": v, "tol": t}} or {"key": {"min": a, "max": b}} against numeric results.
inline void apply_expectations(const ExperimentConfig& cfg, RunOutput& out) {
  for (auto it = cfg.expect.begin(); it != cfg.expect.end(); ++it) {
    const std::string key = it.key();
    const Json& want = it.value();
    if (!out.results.contains(key) || !out.results[key].is_number())
      config_error("expect." + key + " names no numeric result of a " + std::string(to_string(cfg.kind)) + " run");
    const double got = out.results[key].get<double>();
    bool ok = true;
    std::string detail = "got " + num(got);
    if (want.contains("value")) {
      const double v = get_number(want, "value");
      const double tol = get_number(want, "tol");
      ok = std::abs(got - v) <= tol;
      detail += ", want " + num(v) + " +- " + num(tol);
    }
    if (want.contains("min")) {
      ok = ok && got >= get_number(want, "min");
      detail += ", min " + num(get_number(want, "min"));
    }
    if (want.contains("max")) {
      ok = ok && got <= get_number(want, "max");
      detail += ", max " + num(get_number(want, "max"));
    }
    add_check(out, "expect." + key, kCli, ok, detail);
  }
}

}  // namespace detail

/// Runs one experiment. Library errors surface as ExperimentFailed, keeping the raising module
/// and the original error name in the message.
inline RunOutput run_experiment(const ExperimentConfig& cfg) {
  RunOutput out;
  out.name = cfg.name;
  out.kind = cfg.kind;
  const WalkKernel k = validate_kernel(cfg.kernel.raw);
  const PotentialSpec spec = parse_potential(cfg.potential, k.dim());
  const detail::Context ctx{cfg, k, spec, k.dim()};
  try {
    switch (cfg.kind) {
      case ExperimentKind::validate: detail::run_validate(ctx, out); break;
      case ExperimentKind::green: detail::run_green(ctx, out); break;
      case ExperimentKind::bs: detail::run_bs(ctx, out); break;
      case ExperimentKind::spectrum: detail::run_spectrum(ctx, out); break;
      case ExperimentKind::essential: detail::run_essential(ctx, out); break;
      case ExperimentKind::decay: detail::run_decay(ctx, out); break;
      case ExperimentKind::gibbs: detail::run_gibbs(ctx, out); break;
      case ExperimentKind::doob: detail::run_doob(ctx, out); break;
      case ExperimentKind::fk: detail::run_fk(ctx, out); break;
    }
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigInvalid || e.code() == Errc::ExperimentFailed) throw;
    fail(Errc::ExperimentFailed, e.module(), std::string(to_string(e.code())) + " in " + cfg.name + ": " + e.what());
  }
  detail::apply_expectations(cfg, out);
  return out;
}

/// <dir>/<name>.csv, <name>.<suffix>.csv, <name>.<file> and <name>.json, each written atomically.
inline std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const RunOutput& out) {
  std::vector<std::filesystem::path> written;
  for (const auto& [suffix, table] : out.tables) {
    const auto path = dir / (out.name + (suffix.empty() ? "" : "." + suffix) + ".csv");
    write_file_atomic(path, table.str());
    written.push_back(path);
  }
  for (const auto& [suffix, content] : out.files) {
    const auto path = dir / (out.name + "." + suffix);
    write_file_atomic(path, content);
    written.push_back(path);
  }
  const auto path = dir / (out.name + ".json");
  write_file_atomic(path, out.summary().dump(2) + "\n");
  written.push_back(path);
  return written;
}

/// Raises ExperimentFailed naming the first violated invariant and its module.
inline void require_passed(const RunOutput& out) {
  if (const Check* c = out.first_failure())
    fail(Errc::ExperimentFailed, c->module, "invariant " + c->name + " violated in " + out.name + (c->detail.empty() ? "" : ": " + c->detail));
}

}  // namespace sparsewalk
