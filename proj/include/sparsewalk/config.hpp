#pragma once

// Declarative experiment configs: JSON with comments, an "include" list merged underneath the
// including file, kernel presets and potential blocks.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sparsewalk/error.hpp"
#include "sparsewalk/io.hpp"
#include "sparsewalk/kernel.hpp"
#include "sparsewalk/potential.hpp"

namespace sparsewalk {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { validate, green, bs, spectrum, essential, decay, gibbs, doob, fk };

inline constexpr std::string_view kExperimentKinds[] = {"validate", "green", "bs",   "spectrum", "essential",
                                                        "decay",    "gibbs", "doob", "fk"};

inline std::string_view to_string(ExperimentKind k) { return kExperimentKinds[static_cast<int>(k)]; }

namespace detail {

inline constexpr std::string_view kCli = "cli";

[[noreturn]] inline void config_error(const std::string& what) { fail(Errc::ConfigInvalid, kCli, what); }

/// Objects merge key by key; anything else in `over` replaces `base`.
inline void deep_merge(Json& base, const Json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key())) deep_merge(base[it.key()], it.value());
    else base[it.key()] = it.value();
  }
}

inline Json parse_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    config_error(origin + ": " + e.what());
  }
}

inline Json load_resolved(const std::filesystem::path& path, std::vector<std::filesystem::path>& stack) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path canon = fs::weakly_canonical(path, ec);
  for (const auto& p : stack) {
    if (p == canon) config_error("include cycle through " + path.string());
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) config_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  Json own = parse_text(ss.str(), path.string());
  if (!own.is_object()) config_error(path.string() + ": top level must be an object");

  stack.push_back(canon);
  Json merged = Json::object();
  if (own.contains("include")) {
    Json inc = own["include"];
    if (inc.is_string()) inc = Json::array({inc});
    if (!inc.is_array()) config_error(path.string() + ": include must be a path or a list of paths");
    for (const auto& item : inc) {
      if (!item.is_string()) config_error(path.string() + ": include entries must be strings");
      deep_merge(merged, load_resolved(path.parent_path() / item.get<std::string>(), stack));
    }
    own.erase("include");
  }
  stack.pop_back();
  deep_merge(merged, own);
  return merged;
}

}  // namespace detail

/// Reads a config file and resolves its includes, relative to the including file.
inline Json load_config_file(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> stack;
  return detail::load_resolved(path, stack);
}

// ---- typed field access

namespace detail {

inline const Json* field(const Json& obj, const std::string& key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline double as_number(const Json& j, const std::string& key) {
  if (!j.is_number()) config_error("field '" + key + "' must be a number");
  return j.get<double>();
}

inline long long as_integer(const Json& j, const std::string& key) {
  if (!j.is_number_integer() && !(j.is_number_float() && std::floor(j.get<double>()) == j.get<double>()))
    config_error("field '" + key + "' must be an integer");
  return j.is_number_integer() ? j.get<long long>() : static_cast<long long>(j.get<double>());
}

}  // namespace detail

inline double get_number(const Json& obj, const std::string& key, std::optional<double> fallback = std::nullopt) {
  if (const Json* f = detail::field(obj, key)) return detail::as_number(*f, key);
  if (!fallback) detail::config_error("missing required field '" + key + "'");
  return *fallback;
}

inline long long get_integer(const Json& obj, const std::string& key, std::optional<long long> fallback = std::nullopt) {
  if (const Json* f = detail::field(obj, key)) return detail::as_integer(*f, key);
  if (!fallback) detail::config_error("missing required field '" + key + "'");
  return *fallback;
}

inline bool get_bool(const Json& obj, const std::string& key, bool fallback) {
  if (const Json* f = detail::field(obj, key)) {
    if (!f->is_boolean()) detail::config_error("field '" + key + "' must be true or false");
    return f->get<bool>();
  }
  return fallback;
}

inline std::vector<double> get_numbers(const Json& obj, const std::string& key,
                                       std::optional<std::vector<double>> fallback = std::nullopt) {
  const Json* f = detail::field(obj, key);
  if (!f) {
    if (!fallback) detail::config_error("missing required field '" + key + "'");
    return *fallback;
  }
  if (!f->is_array()) detail::config_error("field '" + key + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& v : *f) out.push_back(detail::as_number(v, key));
  return out;
}

inline std::vector<int> get_integers(const Json& obj, const std::string& key,
                                     std::optional<std::vector<int>> fallback = std::nullopt) {
  const Json* f = detail::field(obj, key);
  if (!f) {
    if (!fallback) detail::config_error("missing required field '" + key + "'");
    return *fallback;
  }
  if (!f->is_array()) detail::config_error("field '" + key + "' must be a list of integers");
  std::vector<int> out;
  for (const auto& v : *f) out.push_back(static_cast<int>(detail::as_integer(v, key)));
  return out;
}

inline Site parse_site(const Json& j, int dim, const std::string& key) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    detail::config_error("field '" + key + "' must be a list of " + std::to_string(dim) + " integers");
  Site s{};
  for (int a = 0; a < dim; ++a) s[static_cast<std::size_t>(a)] = static_cast<int>(detail::as_integer(j[a], key));
  return s;
}

/// [x_1, ..., x_d, value]
inline SiteValue parse_site_value(const Json& j, int dim, const std::string& key) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim + 1)
    detail::config_error("field '" + key + "' entries must be [site..., value] with " + std::to_string(dim) +
                         " coordinates");
  SiteValue sv;
  for (int a = 0; a < dim; ++a) sv.site[static_cast<std::size_t>(a)] = static_cast<int>(detail::as_integer(j[a], key));
  sv.value = detail::as_number(j[dim], key);
  return sv;
}

// ---- kernels

struct KernelConfig {
  RawKernel raw;
  std::string label;
  std::optional<double> lazy_q;  // set for the nearest-neighbour 1D family
};

inline KernelConfig parse_kernel(const Json& j) {
  KernelConfig out;
  std::string preset;
  std::optional<double> q;
  if (j.is_string()) {
    static const std::regex call(R"(^\s*([a-z0-9]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$)");
    std::smatch m;
    const std::string s = j.get<std::string>();
    if (!std::regex_match(s, m, call)) detail::config_error("kernel preset '" + s + "' is not of the form name or name(q)");
    preset = m[1];
    if (m[2].matched) q = std::stod(m[2]);
  } else if (j.is_object() && j.contains("preset")) {
    if (!j["preset"].is_string()) detail::config_error("kernel.preset must be a string");
    preset = j["preset"].get<std::string>();
    if (const Json* f = detail::field(j, "q")) q = detail::as_number(*f, "q");
  } else if (j.is_object() && j.contains("entries")) {
    const int dim = static_cast<int>(get_integer(j, "dim"));
    if (dim < 1 || dim > kMaxDim) detail::config_error("kernel.dim must be in [1,3]");
    out.raw.dim = dim;
    if (!j["entries"].is_array()) detail::config_error("kernel.entries must be a list of [offset..., prob]");
    for (const auto& e : j["entries"]) {
      const auto sv = parse_site_value(e, dim, "kernel.entries");
      out.raw.entries.push_back({sv.site, sv.value});
    }
    out.label = "custom";
    return out;
  } else {
    detail::config_error("kernel must be a preset name, {preset, q} or {dim, entries}");
  }

  out.label = preset;
  if (preset == "simple1d") {
    out.raw = presets::simple1d();
    out.lazy_q = 0.0;
  } else if (preset == "lazy1d") {
    if (!q) detail::config_error("preset lazy1d needs q");
    if (!(*q >= 0.0 && *q < 1.0)) detail::config_error("lazy1d q must lie in [0,1)");
    out.raw = presets::lazy1d(*q);
    out.lazy_q = *q;
    out.label = "lazy1d(" + format_number(*q) + ")";
  } else if (preset == "simple2d") {
    out.raw = presets::simple2d();
  } else if (preset == "simple3d") {
    out.raw = presets::simple3d();
  } else {
    detail::config_error("unknown kernel preset '" + preset + "'");
  }
  if (q && preset != "lazy1d") detail::config_error("preset " + preset + " takes no parameter");
  return out;
}

// ---- potentials

/// Working box radius when a potential block gives none.
inline int default_box_radius(int dim) { return dim == 1 ? 2048 : dim == 2 ? 64 : 16; }

inline PotentialSpec parse_potential(const Json& j, int dim) {
  if (j.is_null()) return build_zero(dim, default_box_radius(dim));
  if (!j.is_object()) detail::config_error("potential must be an object with a 'type'");
  const Json* t = detail::field(j, "type");
  if (!t || !t->is_string()) detail::config_error("potential.type is required");
  const std::string type = t->get<std::string>();
  const int R = static_cast<int>(get_integer(j, "box_radius", default_box_radius(dim)));
  if (R < 1) detail::config_error("potential.box_radius must be positive");

  auto site_or_origin = [&](const std::string& key) {
    const Json* f = detail::field(j, key);
    return f ? parse_site(*f, dim, "potential." + key) : kOrigin;
  };
  auto values_list = [&](const std::string& key) {
    std::vector<SiteValue> vs;
    const Json* f = detail::field(j, key);
    if (!f) return vs;
    if (!f->is_array()) detail::config_error("potential." + key + " must be a list of [site..., value]");
    for (const auto& e : *f) vs.push_back(parse_site_value(e, dim, "potential." + key));
    return vs;
  };

  PotentialSpec spec(dim, R);
  if (type == "zero") {
    spec = build_zero(dim, R);
  } else if (type == "single_delta") {
    spec = build_single_delta(dim, get_number(j, "v"), R, site_or_origin("at"));
  } else if (type == "geometric") {
    std::optional<SiteValue> anchor;
    if (const Json* a = detail::field(j, "anchor")) anchor = parse_site_value(*a, dim, "potential.anchor");
    spec = build_geometric_sparse(dim, get_number(j, "v"), static_cast<int>(get_integer(j, "base")), R, anchor,
                                  get_bool(j, "all_axes", false));
  } else if (type == "sparse_values") {
    spec = build_sparse_values(dim, static_cast<int>(get_integer(j, "base")), get_numbers(j, "values"), R,
                               get_bool(j, "all_axes", false));
  } else if (type == "decaying") {
    spec = build_decaying(dim, get_number(j, "amplitude"), get_number(j, "rate"), R);
  } else if (type == "constant") {
    spec = build_constant(dim, get_number(j, "v"), R);
  } else if (type == "explicit") {
    spec = build_explicit(dim, values_list("values"), R);
  } else {
    detail::config_error("unknown potential type '" + type + "'");
  }
  // point values layered over any tail
  for (const auto& sv : values_list("extra")) spec.set_explicit(sv.site, sv.value);
  return spec;
}

// ---- experiments

struct ExperimentConfig {
  std::string name;
  ExperimentKind kind = ExperimentKind::validate;
  KernelConfig kernel;
  Json potential;
  Json params = Json::object();
  Json expect = Json::object();
  std::optional<std::uint64_t> seed;
};

inline bool is_stochastic(ExperimentKind k) { return k == ExperimentKind::fk || k == ExperimentKind::doob; }

namespace detail {

/// Every numeric field whose name mentions a tolerance must be positive, at any depth.
inline void check_tolerances(const Json& j, const std::string& path) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string key = it.key();
      const std::string here = path.empty() ? key : path + "." + key;
      const bool tol = key.find("tol") != std::string::npos;
      if (tol && it->is_number() && !(it->get<double>() > 0.0))
        config_error("tolerance '" + here + "' must be > 0");
      check_tolerances(*it, here);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) check_tolerances(j[i], path + "[" + std::to_string(i) + "]");
  }
}

}  // namespace detail

/// Validates a resolved config. `seed_override` (from the command line) takes precedence.
inline ExperimentConfig parse_experiment(const Json& j, std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (!j.is_object()) detail::config_error("experiment config must be an object");
  if (const Json* v = detail::field(j, "schema_version")) {
    if (detail::as_integer(*v, "schema_version") != kSchemaVersion)
      detail::config_error("schema_version " + v->dump() + " is not supported (expected " +
                           std::to_string(kSchemaVersion) + ")");
  }
  ExperimentConfig c;
  const Json* kind = detail::field(j, "kind");
  if (!kind || !kind->is_string()) detail::config_error("field 'kind' is required");
  const std::string ks = kind->get<std::string>();
  bool found = false;
  for (std::size_t i = 0; i < std::size(kExperimentKinds); ++i) {
    if (kExperimentKinds[i] == ks) {
      c.kind = static_cast<ExperimentKind>(i);
      found = true;
    }
  }
  if (!found) detail::config_error("unknown experiment kind '" + ks + "'");
  c.name = ks;
  if (const Json* n = detail::field(j, "name")) {
    if (!n->is_string() || n->get<std::string>().empty()) detail::config_error("field 'name' must be a non-empty string");
    c.name = n->get<std::string>();
    if (c.name.find_first_of("/\\") != std::string::npos || c.name == "." || c.name == "..")
      detail::config_error("name '" + c.name + "' must not contain path separators");
  }
  const Json* kernel = detail::field(j, "kernel");
  if (!kernel) detail::config_error("field 'kernel' is required");
  c.kernel = parse_kernel(*kernel);
  try {
    (void)validate_kernel(c.kernel.raw);
  } catch (const Error& e) {
    detail::config_error(std::string("kernel rejected: ") + e.what());
  }
  c.potential = j.value("potential", Json());
  try {
    (void)parse_potential(c.potential, c.kernel.raw.dim);
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigInvalid) throw;
    detail::config_error(std::string("potential rejected: ") + e.what());
  }
  if (const Json* p = detail::field(j, "params")) {
    if (!p->is_object()) detail::config_error("field 'params' must be an object");
    c.params = *p;
  }
  if (const Json* e = detail::field(j, "expect")) {
    if (!e->is_object()) detail::config_error("field 'expect' must be an object");
    c.expect = *e;
  }
  detail::check_tolerances(c.params, "params");
  detail::check_tolerances(c.expect, "expect");
  if (seed_override) {
    c.seed = seed_override;
  } else if (const Json* s = detail::field(j, "seed")) {
    const long long v = detail::as_integer(*s, "seed");
    if (v < 0) detail::config_error("seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(v);
  }
  if (is_stochastic(c.kind) && !c.seed) detail::config_error("experiment kind '" + ks + "' requires a seed");
  return c;
}

}  // namespace sparsewalk
