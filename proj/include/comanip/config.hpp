#pragma once

// Experiment configuration: one root seed plus the module sub-configs, a
// strict dotted-key override surface, TOML-style or JSON config files, and a
// canonical JSON echo whose hash stamps every artifact manifest.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comanip/diffusion.hpp"
#include "comanip/dyad.hpp"
#include "comanip/env.hpp"
#include "comanip/error.hpp"
#include "comanip/metrics.hpp"
#include "comanip/ppo.hpp"
#include "comanip/rng.hpp"

namespace comanip::config {

struct ExperimentConfig {
  uint64_t seed = 1;
  std::string out = "out";
  // Data generation.
  dyad::DyadConfig dyad;
  std::vector<double> payloads{0.0, 10.0};
  int reps = 2;
  int stride = 1;
  // Intent model.
  diff::EpsNetConfig intent;
  diff::IntentTrainConfig intent_train;
  int ddim_k = 20;
  // RL.
  rl::PPOConfig ppo;
  rl::PolicyConfig policy;
  rl::ToyEnvConfig env;
  rl::RandomizationConfig rand;
  int eval_episodes = 100;
  double eval_payload = 12.0;
  // Metrics.
  metrics::BoundsOptions bounds;
};

namespace detail {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<nlohmann::json(const ExperimentConfig&)>;

struct KeyEntry {
  Setter set;
  Getter get;
};

inline double parse_double(const std::string& key, const std::string& v) {
  size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  if (used != v.size())
    throw ConfigError("config key '" + key + "': trailing characters in '" + v + "'");
  return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
  if (used != v.size())
    throw ConfigError("config key '" + key + "': trailing characters in '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a bool");
}

inline std::vector<double> parse_list(const std::string& key, std::string v) {
  // Accepts "a,b,c" or "[a, b, c]".
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError("config key '" + key + "': unterminated list");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<double> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const size_t b = item.find_first_not_of(" \t");
    const size_t e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("config key '" + key + "': empty list item");
    out.push_back(parse_double(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

// The full key registry. Every externally settable field appears here; the
// same table drives overrides, file parsing, the JSON echo, and the hash.
inline const std::map<std::string, KeyEntry>& registry() {
  static const std::map<std::string, KeyEntry> reg = [] {
    std::map<std::string, KeyEntry> r;
    auto dd = [&r](const std::string& k, std::function<double&(ExperimentConfig&)> ref) {
      r[k] = {[k, ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(k, v); },
              [ref](const ExperimentConfig& c) {
                return nlohmann::json(ref(const_cast<ExperimentConfig&>(c)));
              }};
    };
    auto ii = [&r](const std::string& k, std::function<int&(ExperimentConfig&)> ref) {
      r[k] = {[k, ref](ExperimentConfig& c, const std::string& v) {
                ref(c) = static_cast<int>(parse_int(k, v));
              },
              [ref](const ExperimentConfig& c) {
                return nlohmann::json(ref(const_cast<ExperimentConfig&>(c)));
              }};
    };
    auto bb = [&r](const std::string& k, std::function<bool&(ExperimentConfig&)> ref) {
      r[k] = {[k, ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(k, v); },
              [ref](const ExperimentConfig& c) {
                return nlohmann::json(ref(const_cast<ExperimentConfig&>(c)));
              }};
    };

    r["seed"] = {[](ExperimentConfig& c, const std::string& v) {
                   c.seed = static_cast<uint64_t>(parse_int("seed", v));
                 },
                 [](const ExperimentConfig& c) { return nlohmann::json(c.seed); }};
    r["out"] = {[](ExperimentConfig& c, const std::string& v) { c.out = v; },
                [](const ExperimentConfig& c) { return nlohmann::json(c.out); }};
    r["data.payloads"] = {[](ExperimentConfig& c, const std::string& v) {
                            c.payloads = parse_list("data.payloads", v);
                          },
                          [](const ExperimentConfig& c) { return nlohmann::json(c.payloads); }};
    ii("data.reps", [](ExperimentConfig& c) -> int& { return c.reps; });
    ii("data.stride", [](ExperimentConfig& c) -> int& { return c.stride; });

    dd("dyad.stiffness", [](ExperimentConfig& c) -> double& { return c.dyad.stiffness; });
    dd("dyad.damping", [](ExperimentConfig& c) -> double& { return c.dyad.damping; });
    dd("dyad.admittance", [](ExperimentConfig& c) -> double& { return c.dyad.admittance; });
    dd("dyad.object_mass", [](ExperimentConfig& c) -> double& { return c.dyad.object_mass; });
    dd("dyad.motion_s", [](ExperimentConfig& c) -> double& { return c.dyad.motion_s; });
    dd("dyad.settle_s", [](ExperimentConfig& c) -> double& { return c.dyad.settle_s; });
    dd("dyad.tail_s", [](ExperimentConfig& c) -> double& { return c.dyad.tail_s; });
    dd("dyad.amplitude_m", [](ExperimentConfig& c) -> double& { return c.dyad.amplitude_m; });
    dd("dyad.amplitude_rad", [](ExperimentConfig& c) -> double& { return c.dyad.amplitude_rad; });
    dd("dyad.noise_force", [](ExperimentConfig& c) -> double& { return c.dyad.noise_force; });
    dd("dyad.noise_torque", [](ExperimentConfig& c) -> double& { return c.dyad.noise_torque; });
    bb("dyad.sensor_noise", [](ExperimentConfig& c) -> bool& { return c.dyad.sensor_noise; });

    ii("intent.d", [](ExperimentConfig& c) -> int& { return c.intent.d; });
    ii("intent.levels", [](ExperimentConfig& c) -> int& { return c.intent.levels; });
    ii("intent.blocks", [](ExperimentConfig& c) -> int& { return c.intent.blocks; });
    ii("intent.horizon", [](ExperimentConfig& c) -> int& { return c.intent.horizon; });
    ii("intent.samples", [](ExperimentConfig& c) -> int& { return c.intent.samples; });
    bb("intent.shared_level_proj",
       [](ExperimentConfig& c) -> bool& { return c.intent.shared_level_proj; });
    bb("intent.cross_block", [](ExperimentConfig& c) -> bool& { return c.intent.cross_block; });
    ii("intent.epochs", [](ExperimentConfig& c) -> int& { return c.intent_train.epochs; });
    ii("intent.batch", [](ExperimentConfig& c) -> int& { return c.intent_train.batch; });
    dd("intent.lr", [](ExperimentConfig& c) -> double& { return c.intent_train.lr; });
    dd("intent.lambda_kl", [](ExperimentConfig& c) -> double& { return c.intent_train.lambda_kl; });
    dd("intent.ema", [](ExperimentConfig& c) -> double& { return c.intent_train.ema_decay; });
    ii("intent.schedule_steps",
       [](ExperimentConfig& c) -> int& { return c.intent_train.schedule_steps; });
    bb("intent.normalize_labels",
       [](ExperimentConfig& c) -> bool& { return c.intent_train.normalize_labels; });
    ii("intent.k", [](ExperimentConfig& c) -> int& { return c.ddim_k; });

    dd("ppo.clip", [](ExperimentConfig& c) -> double& { return c.ppo.clip; });
    dd("ppo.gamma", [](ExperimentConfig& c) -> double& { return c.ppo.gamma; });
    dd("ppo.lam", [](ExperimentConfig& c) -> double& { return c.ppo.lam; });
    dd("ppo.value_coeff", [](ExperimentConfig& c) -> double& { return c.ppo.value_coeff; });
    dd("ppo.entropy_coeff", [](ExperimentConfig& c) -> double& { return c.ppo.entropy_coeff; });
    dd("ppo.lr", [](ExperimentConfig& c) -> double& { return c.ppo.lr; });
    dd("ppo.max_grad_norm", [](ExperimentConfig& c) -> double& { return c.ppo.max_grad_norm; });
    dd("ppo.kl_target", [](ExperimentConfig& c) -> double& { return c.ppo.kl_target; });
    ii("ppo.envs", [](ExperimentConfig& c) -> int& { return c.ppo.envs; });
    ii("ppo.rollout", [](ExperimentConfig& c) -> int& { return c.ppo.rollout; });
    ii("ppo.epochs", [](ExperimentConfig& c) -> int& { return c.ppo.epochs; });
    ii("ppo.minibatches", [](ExperimentConfig& c) -> int& { return c.ppo.minibatches; });
    ii("ppo.updates", [](ExperimentConfig& c) -> int& { return c.ppo.updates; });
    ii("policy.hidden", [](ExperimentConfig& c) -> int& { return c.policy.hidden; });
    dd("policy.logstd_init", [](ExperimentConfig& c) -> double& { return c.policy.logstd_init; });

    dd("env.dt", [](ExperimentConfig& c) -> double& { return c.env.dt; });
    ii("env.horizon", [](ExperimentConfig& c) -> int& { return c.env.horizon; });
    dd("env.friction_c", [](ExperimentConfig& c) -> double& { return c.env.friction_c; });
    dd("env.payload_drag", [](ExperimentConfig& c) -> double& { return c.env.payload_drag; });
    dd("env.payload_bias", [](ExperimentConfig& c) -> double& { return c.env.payload_bias; });

    dd("rand.friction_lo", [](ExperimentConfig& c) -> double& { return c.rand.friction_lo; });
    dd("rand.friction_hi", [](ExperimentConfig& c) -> double& { return c.rand.friction_hi; });
    dd("rand.added_mass_lo", [](ExperimentConfig& c) -> double& { return c.rand.added_mass_lo; });
    dd("rand.added_mass_hi", [](ExperimentConfig& c) -> double& { return c.rand.added_mass_hi; });
    dd("rand.payload_lo", [](ExperimentConfig& c) -> double& { return c.rand.payload_lo; });
    dd("rand.payload_hi", [](ExperimentConfig& c) -> double& { return c.rand.payload_hi; });
    dd("rand.push_interval_s",
       [](ExperimentConfig& c) -> double& { return c.rand.push_interval_s; });
    dd("rand.push_max", [](ExperimentConfig& c) -> double& { return c.rand.push_max; });

    ii("eval.episodes", [](ExperimentConfig& c) -> int& { return c.eval_episodes; });
    dd("eval.payload", [](ExperimentConfig& c) -> double& { return c.eval_payload; });

    bb("metrics.strict", [](ExperimentConfig& c) -> bool& { return c.bounds.strict; });
    dd("metrics.lo", [](ExperimentConfig& c) -> double& { return c.bounds.lo; });
    dd("metrics.hi", [](ExperimentConfig& c) -> double& { return c.bounds.hi; });
    dd("metrics.dwell", [](ExperimentConfig& c) -> double& { return c.bounds.dwell; });
    return r;
  }();
  return reg;
}

} // namespace detail

inline void apply_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
  const auto& reg = detail::registry();
  auto it = reg.find(key);
  if (it == reg.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

// TOML-style text: `key = value` lines, optional `[section]` headers that
// prefix the keys below them, `#` comments. Strict: unknown keys reject.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in) {
  std::string line, section;
  int lineno = 0;
  auto trim = [](std::string s) {
    const size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    apply_override(cfg, key, value);
  }
}

namespace detail {

inline void apply_json_tree(ExperimentConfig& cfg, const nlohmann::json& j,
                            const std::string& prefix) {
  if (!j.is_object()) throw ConfigError("config JSON: expected an object at '" + prefix + "'");
  for (const auto& [key, val] : j.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (val.is_object()) {
      apply_json_tree(cfg, val, full);
    } else if (val.is_array()) {
      std::string list;
      for (const auto& e : val) {
        if (!e.is_number()) throw ConfigError("config key '" + full + "': non-numeric list item");
        if (!list.empty()) list += ",";
        list += e.dump();
      }
      apply_override(cfg, full, list);
    } else if (val.is_string()) {
      apply_override(cfg, full, val.get<std::string>());
    } else {
      apply_override(cfg, full, val.dump());
    }
  }
}

} // namespace detail

// defaults <- file <- overrides, in that precedence.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::pair<std::string, std::string>>&
                                        overrides = {}) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON parse error: ") + e.what());
      }
      detail::apply_json_tree(cfg, j, "");
    } else {
      std::istringstream ss(text);
      apply_config_text(cfg, ss);
    }
  }
  for (const auto& [k, v] : overrides) apply_override(cfg, k, v);
  return cfg;
}

// Canonical nested echo of every registered key (std::map order => sorted,
// so the dump is a stable canonical form). The output directory is deliberately
// left out: it names where results land, not which experiment ran, and the
// echoed config (and its hash) must match across destinations.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json root(nlohmann::json::value_t::object);
  for (const auto& [key, entry] : detail::registry()) {
    if (key == "out") continue;
    nlohmann::json* node = &root;
    std::string rest = key;
    size_t dot;
    while ((dot = rest.find('.')) != std::string::npos) {
      node = &(*node)[rest.substr(0, dot)];
      rest = rest.substr(dot + 1);
    }
    (*node)[rest] = entry.get(cfg);
  }
  return root;
}

inline uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  return fnv1a64(dump.data(), dump.size());
}

} // namespace comanip::config
