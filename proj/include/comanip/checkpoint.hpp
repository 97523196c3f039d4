#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "comanip/adam.hpp"
#include "comanip/diffusion.hpp"
#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip {

constexpr const char* kCheckpointFormat = "comanip-checkpoint";
constexpr int kCheckpointVersion = 1;

inline nlohmann::json params_to_json(const ad::ParamStore& ps) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : ps) j[name] = {{"shape", t.shape}, {"data", t.data}};
  return j;
}

inline ad::ParamStore params_from_json(const nlohmann::json& j) {
  ad::ParamStore ps;
  for (auto it = j.begin(); it != j.end(); ++it) {
    Shape shape = it.value().at("shape").get<Shape>();
    std::vector<double> data = it.value().at("data").get<std::vector<double>>();
    ps[it.key()] = Tensor(std::move(shape), std::move(data));
  }
  return ps;
}

namespace detail {

inline nlohmann::json read_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw IoError("not a checkpoint file: " + path);
  if (j.value("version", -1) != kCheckpointVersion)
    throw IoError("unsupported checkpoint version in " + path);
  if (j.value("kind", "") != kind)
    throw IoError("checkpoint " + path + " holds kind '" + j.value("kind", "") + "', expected '" +
                  kind + "'");
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("short write on checkpoint " + path);
}

}  // namespace detail

inline void save_intent_checkpoint(const std::string& path, const diff::IntentModel& m,
                                   uint64_t config_hash) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["kind"] = "intent";
  j["config_hash"] = config_hash;
  j["config"] = {{"d", m.cfg.d},
                 {"levels", m.cfg.levels},
                 {"blocks", m.cfg.blocks},
                 {"horizon", m.cfg.horizon},
                 {"samples", m.cfg.samples},
                 {"channels", m.cfg.channels},
                 {"cmd_dim", m.cfg.cmd_dim},
                 {"shared_level_proj", m.cfg.shared_level_proj},
                 {"cross_block", m.cfg.cross_block},
                 {"filter", m.cfg.filter}};
  j["schedule_steps"] = m.schedule.steps;
  j["normalizer"] = {{"mean", m.label_mean.data}, {"std", m.label_std.data}};
  j["params"] = params_to_json(m.params);
  detail::write_json(path, j);
}

inline diff::IntentModel load_intent_checkpoint(const std::string& path,
                                                uint64_t* config_hash = nullptr) {
  const nlohmann::json j = detail::read_checkpoint(path, "intent");
  diff::IntentModel m;
  const auto& c = j.at("config");
  m.cfg.d = c.at("d").get<int>();
  m.cfg.levels = c.at("levels").get<int>();
  m.cfg.blocks = c.at("blocks").get<int>();
  m.cfg.horizon = c.at("horizon").get<int>();
  m.cfg.samples = c.at("samples").get<int>();
  m.cfg.channels = c.at("channels").get<int>();
  m.cfg.cmd_dim = c.at("cmd_dim").get<int>();
  m.cfg.shared_level_proj = c.at("shared_level_proj").get<bool>();
  m.cfg.cross_block = c.at("cross_block").get<bool>();
  m.cfg.filter = c.at("filter").get<std::string>();
  m.schedule = diff::NoiseSchedule::cosine(j.at("schedule_steps").get<int>());
  m.label_mean = Tensor({m.cfg.cmd_dim},
                        j.at("normalizer").at("mean").get<std::vector<double>>());
  m.label_std = Tensor({m.cfg.cmd_dim}, j.at("normalizer").at("std").get<std::vector<double>>());
  m.params = params_from_json(j.at("params"));
  if (config_hash) *config_hash = j.value("config_hash", uint64_t{0});
  return m;
}

// Generic parameter checkpoint used by the policy side; `extra` carries any
// model-specific fields verbatim.
inline void save_param_checkpoint(const std::string& path, const std::string& kind,
                                  const ad::ParamStore& ps, const nlohmann::json& extra) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["extra"] = extra;
  j["params"] = params_to_json(ps);
  detail::write_json(path, j);
}

inline ad::ParamStore load_param_checkpoint(const std::string& path, const std::string& kind,
                                            nlohmann::json* extra = nullptr) {
  const nlohmann::json j = detail::read_checkpoint(path, kind);
  if (extra) *extra = j.value("extra", nlohmann::json::object());
  return params_from_json(j.at("params"));
}

}  // namespace comanip
