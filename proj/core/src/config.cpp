#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "distrl/engine.hpp"
#include "distrl/errors.hpp"
#include "distrl/experiment.hpp"

namespace distrl {

namespace {

using nlohmann::ordered_json;

const std::set<std::string>& known_kinds() {
  static const std::set<std::string> kinds = {"fig2",      "fig5",   "fig6",
                                              "fig7",      "fig8",   "appendixD",
                                              "bounds",    "closedness", "custom"};
  return kinds;
}

std::vector<std::uint64_t> seed_range(std::uint64_t lo, std::uint64_t hi) {
  std::vector<std::uint64_t> seeds(hi - lo + 1);
  std::iota(seeds.begin(), seeds.end(), lo);
  return seeds;
}

// Byte offset -> "line L, column C" for parse diagnostics.
std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// Strict field reader: records a type violation instead of throwing so a
// single pass reports everything wrong with the document.
struct FieldReader {
  std::vector<std::string>* errors;

  template <typename T>
  void read(const ordered_json& obj, const char* key, const std::string& path, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      errors->push_back("field " + path + ": expected " + type_name<T>());
    }
  }

  template <typename T>
  static std::string type_name();
};

template <>
std::string FieldReader::type_name<int>() {
  return "an integer";
}
template <>
std::string FieldReader::type_name<double>() {
  return "a number";
}
template <>
std::string FieldReader::type_name<std::uint64_t>() {
  return "an unsigned integer";
}
template <>
std::string FieldReader::type_name<std::string>() {
  return "a string";
}
template <>
std::string FieldReader::type_name<std::vector<int>>() {
  return "an array of integers";
}
template <>
std::string FieldReader::type_name<std::vector<std::uint64_t>>() {
  return "an array of unsigned integers";
}
template <>
std::string FieldReader::type_name<std::vector<std::string>>() {
  return "an array of strings";
}

void reject_unknown(const ordered_json& obj, const std::string& path,
                    const std::set<std::string>& allowed,
                    std::vector<std::string>* errors) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      errors->push_back("unknown key " +
                        (path.empty() ? item.key() : path + "." + item.key()));
    }
  }
}

}  // namespace

ExperimentConfig preset_config(const std::string& kind) {
  if (!known_kinds().count(kind)) {
    throw ConfigError("unknown experiment kind '" + kind + "'");
  }
  ExperimentConfig c;
  c.kind = kind;
  if (kind == "fig2") {
    c.method = "dp";
    c.env = EnvSpec{"absorbing-chain", {6}, 0.95, 0.9, 1000};
    c.algorithms = {"expectile", "naive-expectile"};
    c.statistics = StatSpec{"expectile", {9}, 1.0, 0.0, 1.0};
    c.seeds = {1};
  } else if (kind == "fig5") {
    c.algorithms = {"expectile", "naive-expectile"};
    c.statistics.ks = {9};
    c.seeds = seed_range(1, 10);
  } else if (kind == "fig6" || kind == "appendixD") {
    c.env.lengths = {5, 10, 15};
    c.algorithms = {"expectile", "naive-expectile"};
    c.statistics.ks = {1, 3, 5, 7, 9};
    c.seeds = seed_range(1, 10);
  } else if (kind == "fig7") {
    c.algorithms = {"huber", "naive-huber"};
    c.statistics = StatSpec{"huber", {1, 3, 5, 7, 9}, 1.0, 0.0, 1.0};
    c.seeds = seed_range(1, 10);
  } else if (kind == "fig8") {
    c.method = "dp";
    c.env = EnvSpec{"control", {}, 0.95, 1.0, 1000};
    c.algorithms = {"expectile", "cdrl", "qdrl"};
    c.statistics = StatSpec{"expectile", {9}, 1.0, 0.0, 2.0};
    c.seeds = {1};
  } else if (kind == "bounds") {
    c.seeds = seed_range(1, 100);
  } else if (kind == "closedness") {
    c.seeds = seed_range(1, 50);
  } else {  // custom
    c.seeds.clear();
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("parse error at " + locate(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  std::vector<std::string> errors;
  std::string kind;
  if (auto it = doc.find("kind"); it != doc.end() && it->is_string()) {
    kind = it->get<std::string>();
  } else {
    errors.push_back("field kind: required string");
  }
  if (!kind.empty() && !known_kinds().count(kind)) {
    errors.push_back("field kind: unknown experiment kind '" + kind + "'");
  }
  ExperimentConfig c =
      (!kind.empty() && known_kinds().count(kind)) ? preset_config(kind) : ExperimentConfig{};
  c.kind = kind;
  c.seeds.clear();  // seeds must come from the text (reproduce fills presets)

  reject_unknown(doc, "",
                 {"schema_version", "kind", "method", "env", "algorithms", "statistics",
                  "alpha", "steps", "metric_every", "sweeps", "dp_tol", "seeds",
                  "mc_rollouts", "mc_seed", "solver", "out_dir"},
                 &errors);

  FieldReader r{&errors};
  r.read(doc, "schema_version", "schema_version", c.schema_version);
  r.read(doc, "method", "method", c.method);
  if (auto it = doc.find("env"); it != doc.end()) {
    if (!it->is_object()) {
      errors.push_back("field env: expected an object");
    } else {
      reject_unknown(*it, "env", {"name", "lengths", "p_forward", "gamma", "reward_atoms"},
                     &errors);
      r.read(*it, "name", "env.name", c.env.name);
      r.read(*it, "lengths", "env.lengths", c.env.lengths);
      r.read(*it, "p_forward", "env.p_forward", c.env.p_forward);
      r.read(*it, "gamma", "env.gamma", c.env.gamma);
      r.read(*it, "reward_atoms", "env.reward_atoms", c.env.reward_atoms);
    }
  }
  r.read(doc, "algorithms", "algorithms", c.algorithms);
  if (auto it = doc.find("statistics"); it != doc.end()) {
    if (!it->is_object()) {
      errors.push_back("field statistics: expected an object");
    } else {
      reject_unknown(*it, "statistics", {"kind", "ks", "kappa", "z_lo", "z_hi"}, &errors);
      r.read(*it, "kind", "statistics.kind", c.statistics.kind);
      r.read(*it, "ks", "statistics.ks", c.statistics.ks);
      r.read(*it, "kappa", "statistics.kappa", c.statistics.kappa);
      r.read(*it, "z_lo", "statistics.z_lo", c.statistics.z_lo);
      r.read(*it, "z_hi", "statistics.z_hi", c.statistics.z_hi);
    }
  }
  r.read(doc, "alpha", "alpha", c.alpha);
  r.read(doc, "steps", "steps", c.steps);
  r.read(doc, "metric_every", "metric_every", c.metric_every);
  r.read(doc, "sweeps", "sweeps", c.sweeps);
  r.read(doc, "dp_tol", "dp_tol", c.dp_tol);
  r.read(doc, "seeds", "seeds", c.seeds);
  r.read(doc, "mc_rollouts", "mc_rollouts", c.mc_rollouts);
  r.read(doc, "mc_seed", "mc_seed", c.mc_seed);
  if (auto it = doc.find("solver"); it != doc.end()) {
    if (!it->is_object()) {
      errors.push_back("field solver: expected an object");
    } else {
      reject_unknown(*it, "solver", {"tolerance", "max_iters", "n_atoms"}, &errors);
      r.read(*it, "tolerance", "solver.tolerance", c.solver.tolerance);
      r.read(*it, "max_iters", "solver.max_iters", c.solver.max_iters);
      r.read(*it, "n_atoms", "solver.n_atoms", c.solver.n_atoms);
    }
  }
  r.read(doc, "out_dir", "out_dir", c.out_dir);

  if (errors.empty()) {
    const std::vector<std::string> violations = validate_config(c);
    errors.insert(errors.end(), violations.begin(), violations.end());
  }
  if (!errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " violation" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json doc;
  doc["schema_version"] = c.schema_version;
  doc["kind"] = c.kind;
  doc["method"] = c.method;
  doc["env"] = {{"name", c.env.name},
                {"lengths", c.env.lengths},
                {"p_forward", c.env.p_forward},
                {"gamma", c.env.gamma},
                {"reward_atoms", c.env.reward_atoms}};
  doc["algorithms"] = c.algorithms;
  doc["statistics"] = {{"kind", c.statistics.kind},
                       {"ks", c.statistics.ks},
                       {"kappa", c.statistics.kappa},
                       {"z_lo", c.statistics.z_lo},
                       {"z_hi", c.statistics.z_hi}};
  doc["alpha"] = c.alpha;
  doc["steps"] = c.steps;
  doc["metric_every"] = c.metric_every;
  doc["sweeps"] = c.sweeps;
  doc["dp_tol"] = c.dp_tol;
  doc["seeds"] = c.seeds;
  doc["mc_rollouts"] = c.mc_rollouts;
  doc["mc_seed"] = c.mc_seed;
  doc["solver"] = {{"tolerance", c.solver.tolerance},
                   {"max_iters", c.solver.max_iters},
                   {"n_atoms", c.solver.n_atoms}};
  doc["out_dir"] = c.out_dir;
  return doc.dump(2);
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (c.schema_version != 1) {
    v.push_back("schema_version: unsupported value " + std::to_string(c.schema_version) +
                " (this library reads version 1)");
  }
  if (!known_kinds().count(c.kind)) {
    v.push_back("kind: unknown experiment kind '" + c.kind + "'");
  }
  if (c.method != "sgd" && c.method != "dp") {
    v.push_back("method: must be 'sgd' or 'dp'");
  }
  const bool chain_env = c.env.name == "nchain" || c.env.name == "absorbing-chain";
  if (!chain_env && c.env.name != "control") {
    v.push_back("env.name: must be nchain, absorbing-chain, or control");
  }
  if (chain_env) {
    if (c.env.lengths.empty()) v.push_back("env.lengths: at least one chain length");
    for (int len : c.env.lengths) {
      if (len < 2) v.push_back("env.lengths: length " + std::to_string(len) + " below 2");
    }
    if (!(c.env.gamma >= 0.0 && c.env.gamma < 1.0)) {
      v.push_back("env.gamma: must lie in [0, 1)");
    }
  } else if (c.env.name == "control" && !c.env.lengths.empty()) {
    v.push_back("env.lengths: the control environment has a fixed size; leave empty");
  }
  if (!(c.env.p_forward > 0.0 && c.env.p_forward < 1.0)) {
    v.push_back("env.p_forward: must lie in (0, 1)");
  }
  if (c.env.reward_atoms < 1) v.push_back("env.reward_atoms: must be >= 1");

  const bool generic = c.kind != "fig8" && c.kind != "bounds" && c.kind != "closedness";
  if (c.algorithms.empty()) v.push_back("algorithms: at least one algorithm tag");
  for (const std::string& alg : c.algorithms) {
    try {
      const Strategy s = parse_strategy(alg);
      if (generic) {
        const std::string& sk = c.statistics.kind;
        const bool match =
            ((s == Strategy::kExpectile || s == Strategy::kNaiveExpectile) &&
             sk == "expectile") ||
            (s == Strategy::kQdrl && sk == "quantile") ||
            (s == Strategy::kCdrl && sk == "categorical") ||
            ((s == Strategy::kHuber || s == Strategy::kNaiveHuber) && sk == "huber");
        if (!match) {
          v.push_back("algorithms: '" + alg + "' cannot track statistics.kind '" + sk +
                      "'");
        }
      }
    } catch (const Error&) {
      v.push_back("algorithms: unknown tag '" + alg + "'");
    }
  }
  const std::string& sk = c.statistics.kind;
  if (sk != "expectile" && sk != "quantile" && sk != "huber" && sk != "categorical") {
    v.push_back("statistics.kind: must be expectile, quantile, huber, or categorical");
  }
  if (c.statistics.ks.empty()) v.push_back("statistics.ks: at least one set size");
  for (int k : c.statistics.ks) {
    const int min_k = sk == "categorical" ? 2 : 1;
    if (k < min_k) {
      v.push_back("statistics.ks: size " + std::to_string(k) + " below " +
                  std::to_string(min_k));
    }
  }
  if (!(c.statistics.kappa > 0.0)) v.push_back("statistics.kappa: must be positive");
  if (sk == "categorical" && !(c.statistics.z_lo < c.statistics.z_hi)) {
    v.push_back("statistics.z_lo/z_hi: need z_lo < z_hi");
  }
  if (!(c.alpha > 0.0 && c.alpha <= 1.0)) v.push_back("alpha: must lie in (0, 1]");
  if (c.steps < 1) v.push_back("steps: must be >= 1");
  if (c.metric_every < 0) v.push_back("metric_every: must be >= 0");
  if (c.sweeps < 1) v.push_back("sweeps: must be >= 1");
  if (!(c.dp_tol > 0.0)) v.push_back("dp_tol: must be positive");
  if (c.seeds.empty()) v.push_back("seeds: at least one seed is required");
  if (c.mc_rollouts < 1) v.push_back("mc_rollouts: must be >= 1");
  if (!(c.solver.tolerance > 0.0)) v.push_back("solver.tolerance: must be positive");
  if (c.solver.max_iters < 1) v.push_back("solver.max_iters: must be >= 1");
  if (c.solver.n_atoms < 0) v.push_back("solver.n_atoms: must be >= 0");
  if (c.out_dir.empty()) v.push_back("out_dir: must be nonempty");
  return v;
}

}  // namespace distrl
