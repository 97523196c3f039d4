#pragma once

// Dyadic co-manipulation evaluation: completion time from 5%/95% displacement
// bounds with a 0.5 s dwell rule, mean trajectory deviation, mean velocity
// difference, and average follower force, all integrated trapezoidally over
// the detected window. Reports render next to the built-in reference columns.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comanip/dyad.hpp"
#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip::metrics {

struct TrajectoryPair {
  std::vector<double> t;  // strictly increasing, >= 2 samples
  Tensor xh, xr;          // (N, 3) leader / follower positions
  Tensor vh, vr;          // optional velocities; empty => finite differences
};

struct WrenchPair {
  std::vector<double> t;
  Tensor f1, f2; // (M, 3) force vectors at the two grips
};

struct Bounds {
  double t_s = 0.0;
  double t_e = 0.0;
};

struct BoundsOptions {
  double lo = 0.05;    // motion onset: displacement fraction
  double hi = 0.95;    // completion band: displacement fraction
  double dwell = 0.5;  // s the band must hold
  bool strict = true;  // true: band must hold to the end of the record
};

namespace detail {

inline double row_norm(const Tensor& a, int i) {
  double acc = 0.0;
  for (int j = 0; j < a.cols(); ++j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

inline void check_series(const std::vector<double>& t, int rows, const char* who) {
  if (rows < 2 || static_cast<int>(t.size()) != rows)
    throw ValueError(std::string(who) + ": need >= 2 samples with matching timestamps");
  for (size_t i = 1; i < t.size(); ++i)
    if (t[i] <= t[i - 1]) throw ValueError(std::string(who) + ": timestamps must increase");
}

// Linear interpolation of a sampled scalar series at query q in [t0, tN-1].
inline double interp(const std::vector<double>& t, const std::vector<double>& y, double q) {
  auto it = std::upper_bound(t.begin(), t.end(), q);
  if (it == t.begin()) return y.front();
  if (it == t.end()) return y.back();
  const size_t hi = static_cast<size_t>(it - t.begin());
  const size_t lo = hi - 1;
  const double w = (q - t[lo]) / (t[hi] - t[lo]);
  return y[lo] + w * (y[hi] - y[lo]);
}

// Trapezoidal integral of the series over [a, b]; samples straddling the
// bounds are linearly interpolated.
inline double integrate_window(const std::vector<double>& t, const std::vector<double>& y,
                               double a, double b) {
  if (!(b > a)) throw ValueError("integrate_window: empty window");
  if (a < t.front() - 1e-12 || b > t.back() + 1e-12)
    throw ValueError("integrate_window: bounds outside the record");
  const double ya = interp(t, y, a), yb = interp(t, y, b);
  size_t i0 = static_cast<size_t>(std::upper_bound(t.begin(), t.end(), a) - t.begin());
  size_t i1 = static_cast<size_t>(std::lower_bound(t.begin(), t.end(), b) - t.begin());
  if (i0 >= i1) return (b - a) * (ya + yb) / 2.0; // no interior sample
  double acc = (t[i0] - a) * (ya + y[i0]) / 2.0;
  for (size_t i = i0; i + 1 < i1; ++i) acc += (t[i + 1] - t[i]) * (y[i] + y[i + 1]) / 2.0;
  acc += (b - t[i1 - 1]) * (y[i1 - 1] + yb) / 2.0;
  return acc;
}

inline double window_mean(const std::vector<double>& t, const std::vector<double>& y,
                          const Bounds& b) {
  return integrate_window(t, y, b.t_s, b.t_e) / (b.t_e - b.t_s);
}

} // namespace detail

// Motion bounds from the object CoM series. t_s is the first sample whose
// displacement from the start reaches lo * total. t_e is the entry into the
// hi * total band: with strict = true, the final entry, after which the band
// holds to the end of the record; otherwise the first entry that dwells for
// at least `dwell` seconds. Either way the dwell must fit the record.
inline Bounds detect_bounds(const std::vector<double>& t, const Tensor& com,
                            const BoundsOptions& opt = {}) {
  detail::check_series(t, com.rows(), "detect_bounds");
  const int n = com.rows();
  std::vector<double> disp(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < com.cols(); ++j) {
      const double d = com(i, j) - com(0, j);
      acc += d * d;
    }
    disp[static_cast<size_t>(i)] = std::sqrt(acc);
  }
  const double total = disp.back();
  if (total <= 0.0) throw ValueError("detect_bounds: no net displacement, t_s undefined");

  Bounds b;
  int is = -1;
  for (int i = 0; i < n; ++i) {
    if (disp[static_cast<size_t>(i)] >= opt.lo * total) {
      is = i;
      break;
    }
  }
  if (is < 0) throw ValueError("detect_bounds: start threshold never crossed, t_s undefined");
  b.t_s = t[static_cast<size_t>(is)];

  const double band = opt.hi * total;
  auto in_band = [&](int i) { return disp[static_cast<size_t>(i)] >= band; };
  int ie = -1;
  if (opt.strict) {
    // Walk back from the end of the longest suffix that stays in the band.
    int k = n;
    while (k > 0 && in_band(k - 1)) --k;
    if (k == n) throw ValueError("detect_bounds: completion band never holds, t_e undefined");
    if (t.back() - t[static_cast<size_t>(k)] < opt.dwell)
      throw ValueError("detect_bounds: completion dwell shorter than required, t_e undefined");
    ie = k;
  } else {
    for (int i = 0; i < n && ie < 0; ++i) {
      if (!in_band(i)) continue;
      int j = i;
      while (j + 1 < n && in_band(j + 1)) ++j;
      if (t[static_cast<size_t>(j)] - t[static_cast<size_t>(i)] >= opt.dwell) ie = i;
      i = j; // skip past this band interval
    }
    if (ie < 0) throw ValueError("detect_bounds: no 0.5 s completion dwell found, t_e undefined");
  }
  b.t_e = t[static_cast<size_t>(ie)];
  return b;
}

inline double completion_time(const Bounds& b) {
  if (b.t_e < b.t_s) throw ValueError("completion_time: t_e before t_s");
  return b.t_e - b.t_s;
}

// Mean over [t_s, t_e] of ||x_h - x_r||.
inline double trajectory_deviation(const TrajectoryPair& p, const Bounds& b) {
  detail::check_series(p.t, p.xh.rows(), "trajectory_deviation");
  if (p.xr.shape != p.xh.shape) throw ShapeError("trajectory_deviation: pair shape mismatch");
  std::vector<double> y(p.t.size());
  for (int i = 0; i < p.xh.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < p.xh.cols(); ++j) {
      const double d = p.xh(i, j) - p.xr(i, j);
      acc += d * d;
    }
    y[static_cast<size_t>(i)] = std::sqrt(acc);
  }
  return detail::window_mean(p.t, y, b);
}

namespace detail {

// Velocities, either supplied or finite-differenced (uniform sampling only).
inline void resolve_velocities(const TrajectoryPair& p, Tensor& vh, Tensor& vr) {
  if (p.vh.numel() > 0 || p.vr.numel() > 0) {
    if (p.vh.shape != p.xh.shape || p.vr.shape != p.xr.shape)
      throw ShapeError("velocity_difference: velocity shape mismatch");
    vh = p.vh;
    vr = p.vr;
    return;
  }
  const double dt = p.t[1] - p.t[0];
  dyad::check_uniform_timestamps(p.t, dt);
  vh = dyad::finite_diff_velocity(p.xh, dt);
  vr = dyad::finite_diff_velocity(p.xr, dt);
}

} // namespace detail

// Mean over [t_s, t_e] of ||xdot_h - xdot_r||.
inline double velocity_difference(const TrajectoryPair& p, const Bounds& b) {
  detail::check_series(p.t, p.xh.rows(), "velocity_difference");
  Tensor vh, vr;
  detail::resolve_velocities(p, vh, vr);
  std::vector<double> y(p.t.size());
  for (int i = 0; i < vh.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < vh.cols(); ++j) {
      const double d = vh(i, j) - vr(i, j);
      acc += d * d;
    }
    y[static_cast<size_t>(i)] = std::sqrt(acc);
  }
  return detail::window_mean(p.t, y, b);
}

// Mean over [t_s, t_e] of ||f_1|| + ||f_2||.
inline double avg_follower_force(const WrenchPair& w, const Bounds& b) {
  detail::check_series(w.t, w.f1.rows(), "avg_follower_force");
  if (w.f2.shape != w.f1.shape) throw ShapeError("avg_follower_force: pair shape mismatch");
  std::vector<double> y(w.t.size());
  for (int i = 0; i < w.f1.rows(); ++i)
    y[static_cast<size_t>(i)] = detail::row_norm(w.f1, i) + detail::row_norm(w.f2, i);
  return detail::window_mean(w.t, y, b);
}

struct MetricsValues {
  double t_c = 0.0;   // s
  double traj = 0.0;  // m
  double vel = 0.0;   // m/s
  double force = 0.0; // N
  Bounds bounds;
};

// One trial end to end: bounds from the CoM series (sharing the trajectory
// timestamps), then the three integrals.
inline MetricsValues compute_metrics(const TrajectoryPair& p, const WrenchPair& w,
                                     const Tensor& com, const BoundsOptions& opt = {}) {
  MetricsValues m;
  m.bounds = detect_bounds(p.t, com, opt);
  m.t_c = completion_time(m.bounds);
  m.traj = trajectory_deviation(p, m.bounds);
  m.vel = velocity_difference(p, m.bounds);
  m.force = avg_follower_force(w, m.bounds);
  return m;
}

// --- DyadLog adapters -------------------------------------------------------

inline TrajectoryPair pair_from_log(const dyad::DyadLog& log) {
  if (log.frames() < 2) throw ValueError("pair_from_log: need >= 2 frames");
  TrajectoryPair p;
  p.t = log.frame_t;
  p.xh = log.leader;
  p.xr = log.follower;
  return p;
}

inline Tensor com_from_log(const dyad::DyadLog& log) { return log.object; }

inline WrenchPair wrench_from_log(const dyad::DyadLog& log) {
  if (log.ticks() < 2) throw ValueError("wrench_from_log: need >= 2 wrench rows");
  WrenchPair w;
  w.t.resize(static_cast<size_t>(log.ticks()));
  w.f1 = Tensor({log.ticks(), 3});
  w.f2 = Tensor({log.ticks(), 3});
  for (int i = 0; i < log.ticks(); ++i) {
    w.t[static_cast<size_t>(i)] = log.t[static_cast<size_t>(i)];
    for (int j = 0; j < 3; ++j) {
      w.f1(i, j) = log.w1(i, j);
      w.f2(i, j) = log.w2(i, j);
    }
  }
  return w;
}

// --- report -----------------------------------------------------------------

// Reference columns, kept as verbatim strings so rendering cannot reformat
// them: completion time, trajectory deviation, velocity difference, force.
struct BaselineColumn {
  std::string name;
  std::array<std::string, 4> cells;
};

inline const BaselineColumn kHumanHumanColumn{"Human-Human",
                                              {"23.78", "0.1109", "0.165", "17.355"}};
inline const BaselineColumn kHumanHumanoidColumn{"Human-Humanoid",
                                                 {"51.47", "0.1294", "0.143", "16.230"}};

struct MetricsReport {
  std::vector<MetricsValues> trials;
  std::array<double, 4> mean{}; // T_c, traj, vel, force
  std::array<double, 4> stdev{};
  bool has_std = false; // true once >= 2 trials
  std::vector<BaselineColumn> baselines;
};

inline MetricsReport build_report(const std::vector<MetricsValues>& trials,
                                  std::vector<BaselineColumn> baselines = {kHumanHumanColumn,
                                                                           kHumanHumanoidColumn}) {
  if (trials.empty()) throw ValueError("build_report: need at least one trial");
  MetricsReport r;
  r.trials = trials;
  r.baselines = std::move(baselines);
  const double n = static_cast<double>(trials.size());
  for (const auto& m : trials) {
    r.mean[0] += m.t_c;
    r.mean[1] += m.traj;
    r.mean[2] += m.vel;
    r.mean[3] += m.force;
  }
  for (double& v : r.mean) v /= n;
  r.has_std = trials.size() >= 2;
  if (r.has_std) {
    for (const auto& m : trials) {
      const std::array<double, 4> v{m.t_c, m.traj, m.vel, m.force};
      for (int k = 0; k < 4; ++k) r.stdev[static_cast<size_t>(k)] +=
          (v[static_cast<size_t>(k)] - r.mean[static_cast<size_t>(k)]) *
          (v[static_cast<size_t>(k)] - r.mean[static_cast<size_t>(k)]);
    }
    for (double& v : r.stdev) v = std::sqrt(v / n);
  }
  return r;
}

namespace detail {

inline std::string fmt_metric(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << std::fixed << v;
  std::string s = os.str();
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

} // namespace detail

// Plain-text table in the reference layout; the trailing arrow marks
// lower-is-better.
inline std::string render_report(const MetricsReport& r) {
  static const char* kArrow = "\xE2\x86\x93"; // down arrow
  const std::array<std::string, 4> labels{
      std::string("Completion Time T_c (s) ") + kArrow,
      std::string("Trajectory Deviation (m) ") + kArrow,
      std::string("Velocity Difference (m/s) ") + kArrow,
      std::string("Average Follower Force (N) ") + kArrow,
  };
  std::vector<std::string> ours(4);
  for (int k = 0; k < 4; ++k) {
    ours[static_cast<size_t>(k)] = detail::fmt_metric(r.mean[static_cast<size_t>(k)]);
    if (r.has_std)
      ours[static_cast<size_t>(k)] +=
          " +/- " + detail::fmt_metric(r.stdev[static_cast<size_t>(k)]);
  }
  size_t w0 = 6, w1 = 4;
  for (const auto& l : labels) w0 = std::max(w0, l.size());
  for (const auto& o : ours) w1 = std::max(w1, o.size());
  std::vector<size_t> bw;
  for (const auto& b : r.baselines) {
    size_t w = b.name.size();
    for (const auto& c : b.cells) w = std::max(w, c.size());
    bw.push_back(w);
  }
  std::ostringstream os;
  auto pad = [&os](const std::string& s, size_t w) {
    os << s;
    for (size_t i = s.size(); i < w + 2; ++i) os << ' ';
  };
  pad("Metric", w0);
  pad("Ours", w1);
  for (size_t j = 0; j < r.baselines.size(); ++j) pad(r.baselines[j].name, bw[j]);
  os << '\n';
  for (int k = 0; k < 4; ++k) {
    pad(labels[static_cast<size_t>(k)], w0);
    pad(ours[static_cast<size_t>(k)], w1);
    for (size_t j = 0; j < r.baselines.size(); ++j)
      pad(r.baselines[j].cells[static_cast<size_t>(k)], bw[j]);
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["metrics"] = {"completion_time_s", "trajectory_deviation_m", "velocity_difference_mps",
                  "avg_follower_force_n"};
  j["mean"] = r.mean;
  if (r.has_std) j["std"] = r.stdev;
  j["trials"] = nlohmann::json::array();
  for (const auto& m : r.trials) {
    j["trials"].push_back({{"t_c", m.t_c},
                           {"traj", m.traj},
                           {"vel", m.vel},
                           {"force", m.force},
                           {"t_s", m.bounds.t_s},
                           {"t_e", m.bounds.t_e}});
  }
  for (const auto& b : r.baselines) {
    nlohmann::json col;
    col["name"] = b.name;
    col["cells"] = b.cells;
    j["baselines"].push_back(col);
  }
  return j;
}

// --- CSV --------------------------------------------------------------------

// Bare trial format: t, x_h[3], x_r[3], f1[3], f2[3] (13 columns, optional
// header). The CoM series for bound detection is the grip midpoint.
struct CsvTrial {
  TrajectoryPair pair;
  WrenchPair wrench;
  Tensor com;
};

inline CsvTrial parse_metrics_csv(std::istream& in) {
  std::vector<std::array<double, 13>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 13> row{};
    std::istringstream ls(line);
    std::string cell;
    int col = 0;
    bool numeric = true;
    while (std::getline(ls, cell, ',') && col < 13) {
      try {
        row[static_cast<size_t>(col)] = std::stod(cell);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
      ++col;
    }
    if (!numeric && first) {
      first = false; // header line
      continue;
    }
    if (!numeric || col != 13)
      throw IoError("parse_metrics_csv: malformed row '" + line + "'");
    first = false;
    rows.push_back(row);
  }
  if (rows.size() < 2) throw IoError("parse_metrics_csv: need >= 2 data rows");
  CsvTrial out;
  const int n = static_cast<int>(rows.size());
  out.pair.t.resize(rows.size());
  out.wrench.t.resize(rows.size());
  out.pair.xh = Tensor({n, 3});
  out.pair.xr = Tensor({n, 3});
  out.wrench.f1 = Tensor({n, 3});
  out.wrench.f2 = Tensor({n, 3});
  out.com = Tensor({n, 3});
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<size_t>(i)];
    out.pair.t[static_cast<size_t>(i)] = r[0];
    out.wrench.t[static_cast<size_t>(i)] = r[0];
    for (int j = 0; j < 3; ++j) {
      out.pair.xh(i, j) = r[static_cast<size_t>(1 + j)];
      out.pair.xr(i, j) = r[static_cast<size_t>(4 + j)];
      out.wrench.f1(i, j) = r[static_cast<size_t>(7 + j)];
      out.wrench.f2(i, j) = r[static_cast<size_t>(10 + j)];
      out.com(i, j) = (out.pair.xh(i, j) + out.pair.xr(i, j)) / 2.0;
    }
  }
  return out;
}

} // namespace comanip::metrics
