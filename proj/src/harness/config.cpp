#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "dln/errors.hpp"
#include "dln/harness.hpp"

namespace dln {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where, what);
}

std::string child(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string child(const std::string& path, std::size_t index) {
  return path + "[" + std::to_string(index) + "]";
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    fail(path.empty() ? "<root>" : path, "expected an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(child(path, key), "unknown field");
    }
  }
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) {
    fail(path, "expected a number, got " + v.dump());
  }
  return v.get<double>();
}

double as_positive(const json& v, const std::string& path) {
  const double x = as_number(v, path);
  if (!(x > 0.0) || !std::isfinite(x)) {
    fail(path, "must be a positive finite number");
  }
  return x;
}

std::size_t as_count(const json& v, const std::string& path, std::size_t min_value) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<long long>() < 0)) {
    fail(path, "expected a non-negative integer, got " + v.dump());
  }
  const auto x = v.get<std::size_t>();
  if (x < min_value) {
    fail(path, "must be at least " + std::to_string(min_value));
  }
  return x;
}

std::uint64_t as_seed(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) {
    return v.get<std::uint64_t>();
  }
  if (v.is_number_integer() && v.get<long long>() >= 0) {
    return static_cast<std::uint64_t>(v.get<long long>());
  }
  fail(path, "seed must be a non-negative 64-bit integer, got " + v.dump());
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) {
    fail(path, "expected true or false, got " + v.dump());
  }
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) {
    fail(path, "expected a string, got " + v.dump());
  }
  return v.get<std::string>();
}

/// Scalars are accepted where a list is expected.
template <typename Fn>
void for_each_item(const json& v, const std::string& path, Fn&& fn) {
  if (!v.is_array()) {
    fn(v, path);
    return;
  }
  if (v.empty()) {
    fail(path, "list must not be empty");
  }
  for (std::size_t k = 0; k < v.size(); ++k) {
    fn(v[k], child(path, k));
  }
}

InstanceSpec parse_instance(const json& j, const std::string& path) {
  check_keys(j, path, {"path", "d_in", "d_out", "r", "kappa", "phi_scale", "seed"});
  InstanceSpec spec;
  if (j.contains("path")) spec.path = as_string(j["path"], child(path, "path"));
  if (j.contains("d_in")) spec.d_in = as_count(j["d_in"], child(path, "d_in"), 1);
  if (j.contains("d_out")) spec.d_out = as_count(j["d_out"], child(path, "d_out"), 1);
  if (j.contains("r")) spec.r = as_count(j["r"], child(path, "r"), 1);
  if (j.contains("kappa")) spec.kappa = as_number(j["kappa"], child(path, "kappa"));
  if (j.contains("phi_scale")) spec.phi_scale = as_number(j["phi_scale"], child(path, "phi_scale"));
  if (j.contains("seed")) spec.seed = as_seed(j["seed"], child(path, "seed"));
  if (!spec.path) {
    if (spec.r > spec.d_in) fail(child(path, "r"), "must not exceed d_in");
    if (spec.kappa < 1.0) fail(child(path, "kappa"), "must be at least 1");
    if (spec.r == 1 && spec.kappa != 1.0) fail(child(path, "kappa"), "must be 1 when r = 1");
    if (spec.phi_scale < 0.0) fail(child(path, "phi_scale"), "must be non-negative");
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc, "",
             {"instance", "grid", "eta", "allow_unsafe_eta", "seeds", "iters", "stop_loss",
              "record_stride", "threshold_rel", "constants", "b_mode", "workers", "output_dir",
              "write_trajectories", "allow_diverge"});
  ExperimentConfig cfg;
  if (!doc.contains("instance")) {
    fail("instance", "required field is missing");
  }
  cfg.instance = parse_instance(doc["instance"], "instance");

  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    check_keys(g, "grid", {"L", "m"});
    if (g.contains("L")) {
      cfg.depths.clear();
      for_each_item(g["L"], "grid.L", [&](const json& v, const std::string& p) {
        cfg.depths.push_back(as_count(v, p, 1));
      });
    }
    if (g.contains("m")) {
      cfg.widths.clear();
      for_each_item(g["m"], "grid.m", [&](const json& v, const std::string& p) {
        if (v.is_string()) {
          if (v.get<std::string>() != "auto") fail(p, "width must be a positive integer or \"auto\"");
          cfg.widths.push_back(WidthSpec{true, 0});
        } else {
          cfg.widths.push_back(WidthSpec{false, as_count(v, p, 1)});
        }
      });
    }
  }

  if (doc.contains("eta")) {
    const json& e = doc["eta"];
    if (e.is_string()) {
      if (e.get<std::string>() != "max") fail("eta", "must be a positive number or \"max\"");
      cfg.eta.reset();
    } else {
      cfg.eta = as_positive(e, "eta");
    }
  }
  if (doc.contains("allow_unsafe_eta")) cfg.allow_unsafe_eta = as_bool(doc["allow_unsafe_eta"], "allow_unsafe_eta");

  if (doc.contains("seeds")) {
    cfg.seeds.clear();
    for_each_item(doc["seeds"], "seeds", [&](const json& v, const std::string& p) {
      cfg.seeds.push_back(as_seed(v, p));
    });
  }
  if (doc.contains("iters")) cfg.iters = as_count(doc["iters"], "iters", 0);
  if (doc.contains("stop_loss")) {
    cfg.stop_loss = as_number(doc["stop_loss"], "stop_loss");
    if (cfg.stop_loss < 0.0) fail("stop_loss", "must be non-negative");
  }
  if (doc.contains("record_stride")) cfg.record_stride = as_count(doc["record_stride"], "record_stride", 1);
  if (doc.contains("threshold_rel")) cfg.threshold_rel = as_positive(doc["threshold_rel"], "threshold_rel");

  if (doc.contains("constants")) {
    const json& c = doc["constants"];
    check_keys(c, "constants", {"C", "C_B", "c_mid", "delta", "exact_threshold", "m_cap"});
    if (c.contains("C")) cfg.constants.C = as_positive(c["C"], "constants.C");
    if (c.contains("C_B")) cfg.constants.C_B = as_positive(c["C_B"], "constants.C_B");
    if (c.contains("c_mid")) cfg.constants.c_mid = as_positive(c["c_mid"], "constants.c_mid");
    if (c.contains("delta")) {
      cfg.constants.delta = as_positive(c["delta"], "constants.delta");
      if (cfg.constants.delta >= 1.0) fail("constants.delta", "must lie in (0, 1)");
    }
    if (c.contains("exact_threshold"))
      cfg.constants.exact_threshold = as_count(c["exact_threshold"], "constants.exact_threshold", 0);
    if (c.contains("m_cap")) cfg.constants.m_cap = as_count(c["m_cap"], "constants.m_cap", 1);
  }

  if (doc.contains("b_mode")) {
    const std::string mode = as_string(doc["b_mode"], "b_mode");
    if (mode == "measured") {
      cfg.b_mode = BudgetMode::Measured;
    } else if (mode == "formula") {
      cfg.b_mode = BudgetMode::Formula;
    } else {
      fail("b_mode", "must be \"measured\" or \"formula\"");
    }
  }
  if (doc.contains("workers")) cfg.workers = as_count(doc["workers"], "workers", 1);
  if (doc.contains("output_dir")) cfg.output_dir = as_string(doc["output_dir"], "output_dir");
  if (doc.contains("write_trajectories"))
    cfg.write_trajectories = as_bool(doc["write_trajectories"], "write_trajectories");
  if (doc.contains("allow_diverge")) cfg.allow_diverge = as_bool(doc["allow_diverge"], "allow_diverge");
  return cfg;
}

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t k = 0; k < end; ++k) {
      if (text[k] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    // nlohmann prefixes "[json.exception.parse_error.101] parse error at ...: "
    if (const auto pos = what.rfind(": "); pos != std::string::npos) {
      what = what.substr(pos + 2);
    }
    fail("line " + std::to_string(line) + ", column " + std::to_string(column), what);
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    fail(path, "cannot open config file");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(parse_config_text(buf.str()));
}

json config_to_json(const ExperimentConfig& cfg) {
  json inst;
  if (cfg.instance.path) {
    inst["path"] = *cfg.instance.path;
  } else {
    inst = {{"d_in", cfg.instance.d_in},   {"d_out", cfg.instance.d_out},
            {"r", cfg.instance.r},         {"kappa", cfg.instance.kappa},
            {"phi_scale", cfg.instance.phi_scale}, {"seed", cfg.instance.seed}};
  }
  json widths = json::array();
  for (const WidthSpec& w : cfg.widths) {
    widths.push_back(w.automatic ? json("auto") : json(w.value));
  }
  json constants = {{"C", cfg.constants.C},
                    {"C_B", cfg.constants.C_B},
                    {"c_mid", cfg.constants.c_mid},
                    {"delta", cfg.constants.delta},
                    {"exact_threshold", cfg.constants.exact_threshold}};
  if (cfg.constants.m_cap) {
    constants["m_cap"] = *cfg.constants.m_cap;
  }
  return {{"instance", inst},
          {"grid", {{"L", cfg.depths}, {"m", widths}}},
          {"eta", cfg.eta ? json(*cfg.eta) : json("max")},
          {"allow_unsafe_eta", cfg.allow_unsafe_eta},
          {"seeds", cfg.seeds},
          {"iters", cfg.iters},
          {"stop_loss", cfg.stop_loss},
          {"record_stride", cfg.record_stride},
          {"threshold_rel", cfg.threshold_rel},
          {"constants", constants},
          {"b_mode", cfg.b_mode == BudgetMode::Measured ? "measured" : "formula"},
          {"workers", cfg.workers},
          {"output_dir", cfg.output_dir},
          {"write_trajectories", cfg.write_trajectories},
          {"allow_diverge", cfg.allow_diverge}};
}

const std::vector<std::string>& overridable_paths() {
  static const std::vector<std::string> paths = {
      "instance.path",     "instance.d_in",  "instance.d_out",    "instance.r",
      "instance.kappa",    "instance.phi_scale", "instance.seed", "grid.L",
      "grid.m",            "eta",            "allow_unsafe_eta",  "seeds",
      "iters",             "stop_loss",      "record_stride",     "threshold_rel",
      "constants.C",       "constants.C_B",  "constants.c_mid",   "constants.delta",
      "constants.exact_threshold", "constants.m_cap", "b_mode",   "workers",
      "output_dir",        "write_trajectories", "allow_diverge"};
  return paths;
}

void apply_override(json& doc, const std::string& dotted_path, const std::string& text) {
  static const std::vector<std::string> list_paths = {"grid.L", "grid.m", "seeds"};
  auto scalar = [](const std::string& s) {
    // Bare words such as "auto", "max" or a file path stay strings.
    json v = json::parse(s, nullptr, false);
    return v.is_discarded() ? json(s) : v;
  };
  json value;
  if (std::find(list_paths.begin(), list_paths.end(), dotted_path) != list_paths.end()) {
    value = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      value.push_back(scalar(item));
    }
  } else {
    value = scalar(text);
  }
  std::string pointer = "/" + dotted_path;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  if (!doc.is_object()) {
    doc = json::object();
  }
  doc[json::json_pointer(pointer)] = value;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  const char* env = std::getenv("DLL_SEED");
  if (env == nullptr || *env == '\0') {
    return;
  }
  const std::string text(env);
  if (text.find_first_not_of("0123456789") != std::string::npos) {
    fail("DLL_SEED", "must be a non-negative integer, got '" + text + "'");
  }
  try {
    cfg.seeds = {std::stoull(text)};
  } catch (const std::exception&) {
    fail("DLL_SEED", "does not fit in 64 bits");
  }
}

ProblemInstance build_instance(const InstanceSpec& spec) {
  if (spec.path) {
    std::ifstream in(*spec.path);
    if (!in) {
      fail("instance.path", "cannot open '" + *spec.path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    json j;
    try {
      j = json::parse(buf.str());
    } catch (const json::parse_error& e) {
      fail("instance.path", std::string("invalid JSON: ") + e.what());
    }
    try {
      return instance_from_json(j);
    } catch (const json::exception& e) {
      fail("instance.path", e.what());
    }
  }
  Prng prng(spec.seed, kInstanceStream);
  return random_instance(prng, spec.d_in, spec.d_out, spec.r, spec.kappa, spec.phi_scale);
}

std::size_t resolve_width(const WidthSpec& spec, std::size_t L, const ProblemInstance& inst,
                          const Constants& constants) {
  if (!spec.automatic) {
    return spec.value;
  }
  std::size_t m = required_width(L, inst.r, inst.kappa, inst.d_out(), inst.phi_norm,
                                 constants.delta, constants.C);
  if (constants.m_cap) {
    m = std::min(m, *constants.m_cap);
  }
  return std::max(m, inst.d_out());
}

}  // namespace dln
