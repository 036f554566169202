#pragma once

// Command-line front end: one subcommand per experiment kind plus validate and suite.
// Exit codes: 0 ok, 1 failed invariant or criterion, 2 invalid config or usage, 3 any other error.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sparsewalk/acceptance.hpp"
#include "sparsewalk/config.hpp"
#include "sparsewalk/experiments.hpp"
#include "sparsewalk/parallel.hpp"

namespace sparsewalk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitError = 3;

inline const std::set<std::string>& suite_names() {
  static const std::set<std::string> names{"paper-repro", "acceptance"};
  return names;
}

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

/// Loads a config for `kind`; a missing "kind" is filled in, a different one is rejected.
inline ExperimentConfig load_experiment(const Options& opt, std::string_view kind) {
  if (opt.config.empty()) sparsewalk::detail::config_error("--config is required");
  Json j = load_config_file(opt.config);
  if (!j.contains("kind")) j["kind"] = std::string(kind);
  if (kind == "validate") {
    auto cfg = parse_experiment(j, opt.seed);
    cfg.kind = ExperimentKind::validate;
    cfg.name = cfg.name + ".validate";
    return cfg;
  }
  if (!j["kind"].is_string() || j["kind"].get<std::string>() != kind)
    sparsewalk::detail::config_error("config kind '" + j["kind"].dump() + "' does not match subcommand '" + std::string(kind) + "'");
  return parse_experiment(j, opt.seed);
}

inline int run_single(const Options& opt, std::string_view kind, std::ostream& os) {
  const auto cfg = load_experiment(opt, kind);
  const auto out = run_experiment(cfg);
  for (const auto& p : write_outputs(opt.out, out)) os << "wrote " << p.string() << "\n";
  for (const auto& c : out.checks) os << (c.passed ? "[ok]   " : "[FAIL] ") << c.name << (c.detail.empty() ? "" : "  " + c.detail) << "\n";
  require_passed(out);
  return kExitOk;
}

/// The acceptance battery, criteria in order; writes <out>/<name>.csv and <out>/<name>.json.
inline int run_named_suite(const Options& opt, const std::string& name, const std::vector<int>& only, std::ostream& os) {
  if (!suite_names().count(name)) sparsewalk::detail::config_error("unknown suite '" + name + "' (known: paper-repro, acceptance)");
  CsvTable table({"id", "name", "passed", "detail"});
  Json rows = Json::array();
  bool all = true;
  for (const auto& c : acceptance::criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto r = acceptance::run_criterion(c);
    os << acceptance::format_line(r) << std::endl;
    table.add({static_cast<long long>(r.id), r.name, r.passed, r.detail});
    rows.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    all = all && r.passed;
  }
  Json summary{{"schema_version", kSchemaVersion}, {"suite", name}, {"status", all ? "ok" : "failed"}, {"criteria", rows}};
  write_file_atomic(std::filesystem::path(opt.out) / (name + ".csv"), table.str());
  write_file_atomic(std::filesystem::path(opt.out) / (name + ".json"), summary.dump(2) + "\n");
  return all ? kExitOk : kExitFailed;
}

/// {"experiments": [path or object, ...], "defaults": {...}}; experiments run concurrently and
/// each writes into <out>/<name>/.
inline int run_config_suite(const Options& opt, std::ostream& os) {
  namespace fs = std::filesystem;
  const Json suite = load_config_file(opt.config);
  if (!suite.contains("experiments") || !suite["experiments"].is_array())
    sparsewalk::detail::config_error("suite config needs an 'experiments' list");
  const Json defaults = suite.value("defaults", Json::object());
  std::vector<ExperimentConfig> cfgs;
  std::set<std::string> names;
  for (const auto& item : suite["experiments"]) {
    Json j = defaults;
    if (item.is_string()) sparsewalk::detail::deep_merge(j, load_config_file(fs::path(opt.config).parent_path() / item.get<std::string>()));
    else if (item.is_object()) sparsewalk::detail::deep_merge(j, item);
    else sparsewalk::detail::config_error("suite experiments must be paths or objects");
    cfgs.push_back(parse_experiment(j, opt.seed));
    if (!names.insert(cfgs.back().name).second) sparsewalk::detail::config_error("duplicate experiment name '" + cfgs.back().name + "'");
  }
  std::vector<std::string> status(cfgs.size()), failure(cfgs.size());
  parallel_tasks(cfgs.size(), [&](std::size_t i) {
    try {
      const auto out = run_experiment(cfgs[i]);
      write_outputs(fs::path(opt.out) / cfgs[i].name, out);
      const Check* c = out.first_failure();
      status[i] = c ? "failed" : "ok";
      failure[i] = c ? c->module + ": " + c->name : "";
    } catch (const Error& e) {
      status[i] = "error";
      failure[i] = e.what();
    }
  });
  CsvTable table({"name", "kind", "status", "first_failure"});
  bool all = true;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    table.add({cfgs[i].name, std::string(to_string(cfgs[i].kind)), status[i], failure[i]});
    os << "[" << (status[i] == "ok" ? "PASS" : "FAIL") << "] " << cfgs[i].name << (failure[i].empty() ? "" : "  " + failure[i]) << "\n";
    all = all && status[i] == "ok";
  }
  write_file_atomic(fs::path(opt.out) / "suite.csv", table.str());
  return all ? kExitOk : kExitFailed;
}

inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"sparse-potential random walk experiments"};
  app.require_subcommand(1);
  Options opt;
  std::string seed_text;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "experiment config (JSON)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", seed_text, "seed for stochastic kinds, overrides the config");
    sub->add_option("--threads", opt.threads, "worker threads (0: all cores)");
  };
  std::map<std::string, CLI::App*> kinds;
  for (auto k : kExperimentKinds) {
    const std::string article = std::string_view("aeiou").find(k[0]) != std::string_view::npos ? "an " : "a ";
    auto* sub = app.add_subcommand(std::string(k), "run " + article + std::string(k) + " experiment");
    add_common(sub);
    kinds[std::string(k)] = sub;
  }
  auto* suite = app.add_subcommand("suite", "run a named suite or a suite config");
  add_common(suite);
  std::string suite_name;
  std::vector<int> only;
  suite->add_option("name", suite_name, "paper-repro or acceptance");
  suite->add_option("--only", only, "criterion ids to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, os, es);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!seed_text.empty()) {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(seed_text, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != seed_text.size() || seed_text[0] == '-') sparsewalk::detail::config_error("--seed must be a nonnegative integer");
      opt.seed = v;
    }
    set_worker_count(opt.threads);
    if (suite->parsed()) {
      if (!suite_name.empty()) return run_named_suite(opt, suite_name, only, os);
      if (opt.config.empty()) sparsewalk::detail::config_error("suite needs a name or --config");
      return run_config_suite(opt, os);
    }
    for (const auto& [name, sub] : kinds) {
      if (sub->parsed()) return run_single(opt, name, os);
    }
  } catch (const Error& e) {
    es << "error: " << e.what() << "\n";
    return e.code() == Errc::ConfigInvalid ? kExitConfig : e.code() == Errc::ExperimentFailed ? kExitFailed : kExitError;
  } catch (const std::exception& e) {
    es << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitConfig;
}

}  // namespace sparsewalk::cli
