#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "comanip/dyad.hpp"
#include "comanip/error.hpp"

namespace comanip::dyad {

constexpr const char* kLogFormat = "dyad-log";
constexpr int kLogVersion = 1;

// JSON-lines: a header record, then one record per wrench tick with pose
// fields only on frame ticks. Frames past the last wrench tick (hand-built
// logs) appear as trailing records with null wrench fields.
inline void save_log(const std::string& path, const DyadLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write log " + path);
  nlohmann::json header = {{"format", kLogFormat},     {"version", kLogVersion},
                           {"wrench_dt", log.wrench_dt}, {"frame_stride", log.frame_stride},
                           {"primitive", log.primitive}, {"payload", log.payload},
                           {"ticks", log.ticks()},       {"frames", log.frames()}};
  out << header.dump() << '\n';

  auto pose_at = [&](const Tensor& p, int f) {
    return nlohmann::json::array({p(f, 0), p(f, 1), p(f, 2)});
  };
  int f = 0;
  for (int i = 0; i < log.ticks(); ++i) {
    nlohmann::json rec;
    rec["t"] = log.t[static_cast<size_t>(i)];
    rec["w1"] = {log.w1(i, 0), log.w1(i, 1), log.w1(i, 2), log.w1(i, 3), log.w1(i, 4),
                 log.w1(i, 5)};
    rec["w2"] = {log.w2(i, 0), log.w2(i, 1), log.w2(i, 2), log.w2(i, 3), log.w2(i, 4),
                 log.w2(i, 5)};
    if (f < log.frames() && log.frame_tick[static_cast<size_t>(f)] == i) {
      rec["leader"] = pose_at(log.leader, f);
      rec["follower"] = pose_at(log.follower, f);
      rec["object"] = pose_at(log.object, f);
      ++f;
    } else {
      rec["leader"] = nullptr;
      rec["follower"] = nullptr;
      rec["object"] = nullptr;
    }
    out << rec.dump() << '\n';
  }
  for (; f < log.frames(); ++f) {
    nlohmann::json rec;
    rec["t"] = log.frame_t[static_cast<size_t>(f)];
    rec["tick"] = log.frame_tick[static_cast<size_t>(f)];
    rec["w1"] = nullptr;
    rec["w2"] = nullptr;
    rec["leader"] = pose_at(log.leader, f);
    rec["follower"] = pose_at(log.follower, f);
    rec["object"] = pose_at(log.object, f);
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("short write on log " + path);
}

inline DyadLog load_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open log " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty log file " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed log header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != kLogFormat) throw IoError("not a dyad log: " + path);
  if (header.value("version", -1) != kLogVersion)
    throw IoError("unsupported log version in " + path);

  DyadLog log;
  log.wrench_dt = header.at("wrench_dt").get<double>();
  log.frame_stride = header.at("frame_stride").get<int>();
  log.primitive = header.at("primitive").get<int>();
  log.payload = header.at("payload").get<double>();
  const int n = header.at("ticks").get<int>();
  const int nf = header.at("frames").get<int>();
  log.t.reserve(static_cast<size_t>(n));
  log.w1 = Tensor({n, 6});
  log.w2 = Tensor({n, 6});
  log.leader = Tensor({nf, 3});
  log.follower = Tensor({nf, 3});
  log.object = Tensor({nf, 3});

  int i = 0, f = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed log record in " + path + ": " + e.what());
    }
    const bool has_wrench = !rec.at("w1").is_null();
    if (has_wrench) {
      if (i >= n) throw IoError("log " + path + " holds more ticks than its header declares");
      log.t.push_back(rec.at("t").get<double>());
      for (int k = 0; k < 6; ++k) {
        log.w1(i, k) = rec.at("w1").at(static_cast<size_t>(k)).get<double>();
        log.w2(i, k) = rec.at("w2").at(static_cast<size_t>(k)).get<double>();
      }
    }
    if (!rec.at("leader").is_null()) {
      if (f >= nf) throw IoError("log " + path + " holds more frames than its header declares");
      log.frame_tick.push_back(has_wrench ? i : rec.at("tick").get<int>());
      log.frame_t.push_back(rec.at("t").get<double>());
      for (int k = 0; k < 3; ++k) {
        log.leader(f, k) = rec.at("leader").at(static_cast<size_t>(k)).get<double>();
        log.follower(f, k) = rec.at("follower").at(static_cast<size_t>(k)).get<double>();
        log.object(f, k) = rec.at("object").at(static_cast<size_t>(k)).get<double>();
      }
      ++f;
    }
    if (has_wrench) ++i;
  }
  if (i != n || f != nf)
    throw IoError("truncated log " + path + ": header declares " + std::to_string(n) + " ticks/" +
                  std::to_string(nf) + " frames, found " + std::to_string(i) + "/" +
                  std::to_string(f));
  return log;
}

}  // namespace comanip::dyad
