#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "comanip/dataset.hpp"
#include "comanip/error.hpp"
#include "comanip/rng.hpp"
#include "comanip/tensor.hpp"

namespace comanip::dyad {

// Scripted leader motions. The first four are pure translations; the enum
// order is load-bearing (translation check below, dataset metadata).
enum class Primitive {
  kForward = 0,
  kBackward,
  kLeft,
  kRight,
  kLeaderRotCw,
  kLeaderRotCcw,
  kFollowerRotCw,
  kFollowerRotCcw,
};
constexpr int kNumPrimitives = 8;

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kForward: return "forward";
    case Primitive::kBackward: return "backward";
    case Primitive::kLeft: return "left";
    case Primitive::kRight: return "right";
    case Primitive::kLeaderRotCw: return "leader-rot-cw";
    case Primitive::kLeaderRotCcw: return "leader-rot-ccw";
    case Primitive::kFollowerRotCw: return "follower-rot-cw";
    case Primitive::kFollowerRotCcw: return "follower-rot-ccw";
  }
  throw ValueError("unknown primitive id");
}

inline Primitive primitive_by_name(const std::string& name) {
  for (int i = 0; i < kNumPrimitives; ++i)
    if (name == primitive_name(static_cast<Primitive>(i))) return static_cast<Primitive>(i);
  throw ValueError("unknown primitive '" + name + "'");
}

inline bool is_translation(Primitive p) { return static_cast<int>(p) < 4; }

struct DyadConfig {
  double payload = 0.0;          // kg, carried between the partners
  double object_mass = 0.0;      // kg, the carried object itself
  double object_inertia = 0.02;  // kg·m^2, accepted for completeness
  double stiffness = 500.0;      // N/m and N·m/rad at the handles
  double damping = 50.0;         // N·s/m and N·m·s/rad
  double admittance = 0.02;      // follower gain, (m/s)/N and (rad/s)/(N·m)
  double half_link = 0.4;        // m, handle to object center
  int wrench_hz = 1000;
  int frame_stride = 33;         // wrench ticks per pose frame (S)
  double settle_s = 0.25;
  double motion_s = 3.0;
  double tail_s = 0.25;
  double amplitude_m = 0.8;      // translation distance
  double amplitude_rad = 1.5707963267948966;  // rotation sweep (pi/2)
  double noise_force = 0.1;      // N, sensor noise sigma
  double noise_torque = 0.01;    // N·m
  bool sensor_noise = true;
  double blowup_bound = 10.0;    // m, simulation abort threshold
  double gravity = 9.81;

  double trial_seconds() const { return settle_s + motion_s + tail_s; }
  double dt() const { return 1.0 / wrench_hz; }
};

struct Pose {
  double x = 0.0, y = 0.0, th = 0.0;
};
struct Twist {
  double vx = 0.0, vy = 0.0, w = 0.0;
};

// Wrap into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTau = 6.283185307179586476925286766559;
  double x = std::fmod(a + 3.14159265358979323846, kTau);
  if (x <= 0.0) x += kTau;
  return x - 3.14159265358979323846;
}

// Quintic minimum-jerk scalar profile: position and velocity at time t.
inline std::pair<double, double> minjerk_profile(double d, double t_dur, double t) {
  if (t_dur <= 0.0) throw ValueError("minjerk_profile: duration must be positive");
  if (t < 0.0 || t > t_dur) throw ValueError("minjerk_profile: t outside [0, duration]");
  const double u = t / t_dur;
  const double u2 = u * u, u3 = u2 * u, u4 = u3 * u;
  const double s = d * (10.0 * u3 - 15.0 * u4 + 6.0 * u4 * u);
  const double v = d / t_dur * (30.0 * u2 - 60.0 * u3 + 30.0 * u4);
  return {s, v};
}

struct LeaderState {
  Pose pose;
  Twist vel;
};

// Closed-form leader state at absolute trial time t: hold during settle,
// min-jerk sweep during the motion phase, hold during the tail.
inline LeaderState leader_state(Primitive p, const DyadConfig& cfg, double t) {
  if (t < 0.0 || t > cfg.trial_seconds() + 1e-9)
    throw ValueError("leader_state: t outside the trial");
  double tm = t - cfg.settle_s;
  if (tm < 0.0) tm = 0.0;
  if (tm > cfg.motion_s) tm = cfg.motion_s;
  const bool moving = (t >= cfg.settle_s && t <= cfg.settle_s + cfg.motion_s);

  LeaderState out;
  const double spacing = 2.0 * cfg.half_link;
  switch (p) {
    case Primitive::kForward:
    case Primitive::kBackward:
    case Primitive::kLeft:
    case Primitive::kRight: {
      auto [s, v] = minjerk_profile(cfg.amplitude_m, cfg.motion_s, tm);
      if (!moving) v = 0.0;
      const double sx = (p == Primitive::kForward) ? 1.0 : (p == Primitive::kBackward ? -1.0 : 0.0);
      const double sy = (p == Primitive::kLeft) ? 1.0 : (p == Primitive::kRight ? -1.0 : 0.0);
      out.pose = {sx * s, sy * s, 0.0};
      out.vel = {sx * v, sy * v, 0.0};
      return out;
    }
    case Primitive::kLeaderRotCw:
    case Primitive::kLeaderRotCcw: {
      auto [s, v] = minjerk_profile(cfg.amplitude_rad, cfg.motion_s, tm);
      if (!moving) v = 0.0;
      const double sgn = (p == Primitive::kLeaderRotCcw) ? 1.0 : -1.0;
      out.pose = {0.0, 0.0, sgn * s};
      out.vel = {0.0, 0.0, sgn * v};
      return out;
    }
    case Primitive::kFollowerRotCw:
    case Primitive::kFollowerRotCcw: {
      auto [s, v] = minjerk_profile(cfg.amplitude_rad, cfg.motion_s, tm);
      if (!moving) v = 0.0;
      const double sgn = (p == Primitive::kFollowerRotCcw) ? 1.0 : -1.0;
      const double phi = sgn * s, dphi = sgn * v;
      // orbit about the follower's initial handle point at (-2l, 0)
      const double cx = -spacing, cy = 0.0;
      out.pose = {cx + spacing * std::cos(phi), cy + spacing * std::sin(phi), phi};
      out.vel = {-spacing * std::sin(phi) * dphi, spacing * std::cos(phi) * dphi, dphi};
      return out;
    }
  }
  throw ValueError("unknown primitive id");
}

// Leader pose per wrench tick, (N, 3).
inline Tensor primitive_trajectory(Primitive p, const DyadConfig& cfg) {
  const int n = static_cast<int>(std::lround(cfg.trial_seconds() * cfg.wrench_hz));
  Tensor out({n, 3});
  for (int i = 0; i < n; ++i) {
    const LeaderState ls = leader_state(p, cfg, i * cfg.dt());
    out(i, 0) = ls.pose.x;
    out(i, 1) = ls.pose.y;
    out(i, 2) = ls.pose.th;
  }
  return out;
}

struct CouplingOut {
  std::array<double, 6> w1{};  // sensed at the leader handle
  std::array<double, 6> w2{};  // sensed at the follower handle
};

// Planar spring-damper between the leader-commanded grip point and the
// follower handle; F_z carries the static load share; tau_x/tau_y stay zero.
inline CouplingOut coupling_wrench(const Pose& leader, const Twist& lv, const Pose& follower,
                                   const Twist& fv, const DyadConfig& cfg) {
  const double c = std::cos(leader.th), s = std::sin(leader.th);
  const double rx = -2.0 * cfg.half_link * c;
  const double ry = -2.0 * cfg.half_link * s;
  const double dx = leader.x + rx - follower.x;
  const double dy = leader.y + ry - follower.y;
  const double dvx = lv.vx - lv.w * ry - fv.vx;
  const double dvy = lv.vy + lv.w * rx - fv.vy;
  const double fx = cfg.stiffness * dx + cfg.damping * dvx;
  const double fy = cfg.stiffness * dy + cfg.damping * dvy;
  const double dth = wrap_angle(leader.th - follower.th);
  const double tz = cfg.stiffness * dth + cfg.damping * (lv.w - fv.w);
  const double fz = (cfg.object_mass + cfg.payload) * cfg.gravity / 2.0;

  CouplingOut out;
  out.w2 = {fx, fy, fz, 0.0, 0.0, tz};
  out.w1 = {-fx, -fy, fz, 0.0, 0.0, -tz};
  return out;
}

// One trial's synchronized record: every wrench tick, plus pose frames on
// every frame_stride-th tick. primitive/payload ride along as metadata.
struct DyadLog {
  double wrench_dt = 1e-3;
  int frame_stride = 33;
  int primitive = -1;
  double payload = 0.0;

  std::vector<double> t;  // wrench timestamps
  Tensor w1, w2;          // (N, 6) each

  std::vector<int> frame_tick;  // wrench-tick index of each frame
  std::vector<double> frame_t;
  Tensor leader, follower, object;  // (F, 3) poses

  int ticks() const { return static_cast<int>(t.size()); }
  int frames() const { return static_cast<int>(frame_tick.size()); }
};

inline bool log_equal(const DyadLog& a, const DyadLog& b) {
  return a.wrench_dt == b.wrench_dt && a.frame_stride == b.frame_stride &&
         a.primitive == b.primitive && a.payload == b.payload && a.t == b.t && a.w1 == b.w1 &&
         a.w2 == b.w2 && a.frame_tick == b.frame_tick && a.frame_t == b.frame_t &&
         a.leader == b.leader && a.follower == b.follower && a.object == b.object;
}

enum class FollowerKind {
  kAdmittance,  // v = A * sensed wrench (the built-in compliant demonstrator)
  kSlaved,      // pose pinned to the leader-commanded grip point
  kFrozen,      // never moves
  kPolicy,      // velocity commands from a callback fed wrench windows
};

struct SimOptions {
  FollowerKind follower = FollowerKind::kAdmittance;
  // local-frame (v_x, v_y, omega) command given force/torque windows (T, 6)
  std::function<std::array<double, 3>(const Tensor& wf, const Tensor& wt)> policy;
  int policy_window = 198;  // wrench ticks per policy window
  Pose follower_offset;     // initial displacement from the coupled rest pose
};

// Semi-implicit Euler rollout against a closed-form leader. Wrench is logged
// every tick (sensor noise optional), poses every frame_stride ticks.
inline DyadLog simulate_leader(const std::function<LeaderState(double)>& leader_fn,
                               const DyadConfig& cfg, uint64_t seed, const SimOptions& opts = {}) {
  const int n = static_cast<int>(std::lround(cfg.trial_seconds() * cfg.wrench_hz));
  const double dt = cfg.dt();
  DyadLog log;
  log.wrench_dt = dt;
  log.frame_stride = cfg.frame_stride;
  log.payload = cfg.payload;
  log.t.resize(static_cast<size_t>(n));
  log.w1 = Tensor({n, 6});
  log.w2 = Tensor({n, 6});

  const int nf = (n - 1) / cfg.frame_stride + 1;
  log.frame_tick.reserve(static_cast<size_t>(nf));
  log.frame_t.reserve(static_cast<size_t>(nf));
  log.leader = Tensor({nf, 3});
  log.follower = Tensor({nf, 3});
  log.object = Tensor({nf, 3});

  Rng noise = Rng::substream(seed, "dyad.noise");

  const LeaderState init = leader_fn(0.0);
  Pose pf{init.pose.x - 2.0 * cfg.half_link * std::cos(init.pose.th) + opts.follower_offset.x,
          init.pose.y - 2.0 * cfg.half_link * std::sin(init.pose.th) + opts.follower_offset.y,
          init.pose.th + opts.follower_offset.th};
  Twist vf;
  std::array<double, 3> held_cmd{};  // latest policy command, follower frame
  bool have_cmd = false;
  int frame_count = 0;

  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    const LeaderState ls = leader_fn(t);

    if (opts.follower == FollowerKind::kSlaved) {
      // pose pinned to the commanded grip point, so the sensed offset is zero
      const double c = std::cos(ls.pose.th), s = std::sin(ls.pose.th);
      const double rx = -2.0 * cfg.half_link * c, ry = -2.0 * cfg.half_link * s;
      pf = {ls.pose.x + rx, ls.pose.y + ry, ls.pose.th};
      vf = {ls.vel.vx - ls.vel.w * ry, ls.vel.vy + ls.vel.w * rx, ls.vel.w};
    }

    if (!std::isfinite(pf.x) || !std::isfinite(pf.y) || std::abs(pf.x) > cfg.blowup_bound ||
        std::abs(pf.y) > cfg.blowup_bound)
      throw NumericError("simulate_leader: follower diverged at tick " + std::to_string(i));

    const CouplingOut cw = coupling_wrench(ls.pose, ls.vel, pf, vf, cfg);
    if (std::abs(cw.w1[0] + cw.w2[0]) > 1e-9 || std::abs(cw.w1[1] + cw.w2[1]) > 1e-9 ||
        std::abs(cw.w1[5] + cw.w2[5]) > 1e-9)
      throw NumericError("simulate_leader: action-reaction violated at tick " + std::to_string(i));

    log.t[static_cast<size_t>(i)] = t;
    for (int k = 0; k < 6; ++k) {
      const double sig = (k < 3 ? cfg.noise_force : cfg.noise_torque);
      const double n1 = cfg.sensor_noise ? sig * noise.normal() : 0.0;
      const double n2 = cfg.sensor_noise ? sig * noise.normal() : 0.0;
      log.w1(i, k) = cw.w1[static_cast<size_t>(k)] + n1;
      log.w2(i, k) = cw.w2[static_cast<size_t>(k)] + n2;
    }

    if (i % cfg.frame_stride == 0) {
      log.frame_tick.push_back(i);
      log.frame_t.push_back(t);
      log.leader(frame_count, 0) = ls.pose.x;
      log.leader(frame_count, 1) = ls.pose.y;
      log.leader(frame_count, 2) = ls.pose.th;
      log.follower(frame_count, 0) = pf.x;
      log.follower(frame_count, 1) = pf.y;
      log.follower(frame_count, 2) = pf.th;
      log.object(frame_count, 0) = 0.5 * (ls.pose.x + pf.x);
      log.object(frame_count, 1) = 0.5 * (ls.pose.y + pf.y);
      log.object(frame_count, 2) = wrap_angle(pf.th + 0.5 * wrap_angle(ls.pose.th - pf.th));
      ++frame_count;

      // policy followers re-plan at frame rate once a full window exists
      if (opts.follower == FollowerKind::kPolicy && opts.policy && i + 1 >= opts.policy_window) {
        const int w = opts.policy_window;
        Tensor wf({w, 6}), wt({w, 6});
        for (int r = 0; r < w; ++r) {
          const int src = i - w + 1 + r;
          for (int k = 0; k < 3; ++k) {
            wf(r, k) = log.w1(src, k);
            wf(r, k + 3) = log.w2(src, k);
            wt(r, k) = log.w1(src, k + 3);
            wt(r, k + 3) = log.w2(src, k + 3);
          }
        }
        held_cmd = opts.policy(wf, wt);
        have_cmd = true;
      }
    }

    // follower update (semi-implicit: velocity from the state at t, then step)
    switch (opts.follower) {
      case FollowerKind::kFrozen:
        vf = {};
        break;
      case FollowerKind::kSlaved:
        continue;  // pose snaps at the top of the next tick

      case FollowerKind::kPolicy:
        if (have_cmd) {
          const double c = std::cos(pf.th), s = std::sin(pf.th);
          vf = {c * held_cmd[0] - s * held_cmd[1], s * held_cmd[0] + c * held_cmd[1], held_cmd[2]};
          break;
        }
        [[fallthrough]];  // warm up compliantly until a window is available
      case FollowerKind::kAdmittance: {
        // damping solved implicitly: v = A*(K*offset + D*v_grip)/(1 + A*D),
        // otherwise A*D near 1 turns the discrete update into an oscillator
        const double denom = 1.0 + cfg.admittance * cfg.damping;
        vf = {cfg.admittance * (cw.w2[0] + cfg.damping * vf.vx) / denom,
              cfg.admittance * (cw.w2[1] + cfg.damping * vf.vy) / denom,
              cfg.admittance * (cw.w2[5] + cfg.damping * vf.w) / denom};
        break;
      }
    }
    pf.x += vf.vx * dt;
    pf.y += vf.vy * dt;
    pf.th = wrap_angle(pf.th + vf.w * dt);
  }
  return log;
}

inline DyadLog simulate_dyad(Primitive p, const DyadConfig& cfg, uint64_t seed,
                             const SimOptions& opts = {}) {
  DyadLog log = simulate_leader([&](double t) { return leader_state(p, cfg, t); }, cfg, seed, opts);
  log.primitive = static_cast<int>(p);
  return log;
}

// Backward-difference velocities for a pose series (N, 3); the angular
// channel takes the short way around, and row 0 copies row 1.
inline Tensor finite_diff_velocity(const Tensor& poses, double dt) {
  if (poses.rank() != 2 || poses.cols() != 3)
    throw ShapeError("finite_diff_velocity: expected (N, 3) poses");
  const int n = poses.rows();
  if (n < 2) throw ValueError("finite_diff_velocity: need at least two samples");
  if (dt <= 0.0) throw ValueError("finite_diff_velocity: dt must be positive");
  Tensor v({n, 3});
  for (int i = 1; i < n; ++i) {
    v(i, 0) = (poses(i, 0) - poses(i - 1, 0)) / dt;
    v(i, 1) = (poses(i, 1) - poses(i - 1, 1)) / dt;
    v(i, 2) = wrap_angle(poses(i, 2) - poses(i - 1, 2)) / dt;
  }
  for (int k = 0; k < 3; ++k) v(0, k) = v(1, k);
  return v;
}

// Uniform-sampling guard: timestamps may jitter at most 1% of dt.
inline void check_uniform_timestamps(const std::vector<double>& ts, double dt) {
  for (size_t i = 1; i < ts.size(); ++i)
    if (std::abs(ts[i] - ts[i - 1] - dt) > 0.01 * dt)
      throw ValueError("timestamps deviate from uniform spacing at index " + std::to_string(i));
}

// Slice one trial into supervised windows: frame j contributes when a full
// T = horizon*stride wrench window ends at its tick and `horizon` future
// frames exist. Labels are follower velocities in the frame-j follower frame.
inline std::vector<TrainingSample> window_dataset(const DyadLog& log, int horizon = 6,
                                                  int stride = 1) {
  if (horizon < 1 || stride < 1) throw ValueError("window_dataset: horizon/stride must be >= 1");
  std::vector<TrainingSample> out;
  const int window = horizon * log.frame_stride;
  const int nf = log.frames();
  if (nf < 2) return out;
  const Tensor vel = finite_diff_velocity(log.follower, log.frame_stride * log.wrench_dt);

  for (int j = 0; j < nf; j += stride) {
    const int tick = log.frame_tick[static_cast<size_t>(j)];
    if (tick + 1 < window) continue;           // not enough history
    if (tick >= log.ticks()) continue;         // window would leave the record
    if (j + horizon >= nf) continue;           // not enough future frames
    TrainingSample s;
    s.wrench_f = Tensor({window, 6});
    s.wrench_t = Tensor({window, 6});
    for (int r = 0; r < window; ++r) {
      const int src = tick - window + 1 + r;
      for (int k = 0; k < 3; ++k) {
        s.wrench_f(r, k) = log.w1(src, k);
        s.wrench_f(r, k + 3) = log.w2(src, k);
        s.wrench_t(r, k) = log.w1(src, k + 3);
        s.wrench_t(r, k + 3) = log.w2(src, k + 3);
      }
    }
    const double th = log.follower(j, 2);
    const double c = std::cos(th), sn = std::sin(th);
    s.label = Tensor({horizon, 3});
    for (int h = 0; h < horizon; ++h) {
      const double vx = vel(j + 1 + h, 0), vy = vel(j + 1 + h, 1);
      s.label(h, 0) = c * vx + sn * vy;  // world -> follower frame
      s.label(h, 1) = -sn * vx + c * vy;
      s.label(h, 2) = vel(j + 1 + h, 2);
    }
    s.primitive = log.primitive;
    s.payload = log.payload;
    out.push_back(std::move(s));
  }
  return out;
}

// Full corpus: payloads x all eight primitives x reps, each trial seeded
// independently from the root.
inline std::vector<TrainingSample> generate_dataset(const DyadConfig& base,
                                                    const std::vector<double>& payloads, int reps,
                                                    int horizon, int stride, uint64_t seed) {
  if (payloads.empty() || reps < 1) throw ValueError("generate_dataset: empty payloads or reps < 1");
  std::vector<TrainingSample> out;
  uint64_t trial = 0;
  for (double pay : payloads)
    for (int p = 0; p < kNumPrimitives; ++p)
      for (int r = 0; r < reps; ++r, ++trial) {
        DyadConfig cfg = base;
        cfg.payload = pay;
        const DyadLog log = simulate_dyad(static_cast<Primitive>(p), cfg,
                                          Rng::derive(seed, "dyad.trial", trial));
        auto samples = window_dataset(log, horizon, stride);
        for (auto& s : samples) out.push_back(std::move(s));
      }
  return out;
}

inline uint64_t dataset_config_hash(const DyadConfig& cfg, const std::vector<double>& payloads,
                                    int reps, int horizon, int stride, uint64_t seed) {
  std::string s = "dyad|k=" + std::to_string(cfg.stiffness) + "|d=" + std::to_string(cfg.damping) +
                  "|a=" + std::to_string(cfg.admittance) + "|l=" + std::to_string(cfg.half_link) +
                  "|hz=" + std::to_string(cfg.wrench_hz) + "|s=" + std::to_string(cfg.frame_stride) +
                  "|t=" + std::to_string(cfg.trial_seconds()) +
                  "|amp=" + std::to_string(cfg.amplitude_m) + "," +
                  std::to_string(cfg.amplitude_rad) + "|nf=" + std::to_string(cfg.noise_force) +
                  "," + std::to_string(cfg.noise_torque) + "|h=" + std::to_string(horizon) +
                  "|st=" + std::to_string(stride) + "|reps=" + std::to_string(reps) +
                  "|seed=" + std::to_string(seed) + "|pay=";
  for (double p : payloads) s += std::to_string(p) + ",";
  return fnv1a64(s);
}

}  // namespace comanip::dyad
