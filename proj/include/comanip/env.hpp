#pragma once

// Planar velocity-tracking toy environment with domain randomization.
// A rigid body on a plane (body-frame velocities vx, vy, omega) tracks a
// commanded twist under randomized friction, added mass, payload force, and
// periodic velocity pushes. Serves as the training substrate for the
// adaptive-vs-baseline policy comparison.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "comanip/error.hpp"
#include "comanip/rng.hpp"

namespace comanip::rl {

// Randomization ranges for physical parameters drawn at episode reset.
struct RandomizationConfig {
  double friction_lo = 0.1;
  double friction_hi = 1.25;
  double added_mass_lo = -1.0;   // kg
  double added_mass_hi = 3.0;    // kg
  double push_interval_s = 5.0;  // pushes land exactly on multiples of this
  double push_max = 1.5;         // m/s, uniform per axis
  double payload_lo = -3.0;      // N
  double payload_hi = 15.0;      // N
  bool randomize_payload = true; // baseline ablation pins payload force to 0
  double cmd_lin_max = 0.8;      // m/s
  double cmd_ang_max = 0.5;      // rad/s
};

struct ToyEnvConfig {
  double dt = 0.02;            // s
  int horizon = 400;           // steps per episode
  double base_mass = 10.0;     // kg
  double inertia = 1.0;        // kg m^2
  double friction_c = 5.0;     // N s/m; linear drag = mu * c * v
  double ang_friction_c = 2.0; // N m s/rad; angular drag = mu * c_ang * w
  // Drag per N of payload. Heavy payload loads the base far beyond anything
  // the friction draw can produce — tracking the speed cap then takes most of
  // the actuation envelope — so a policy trained payload-blind meets dynamics
  // it has never seen.
  double payload_drag = 3.2;
  double payload_bias = 0.05;  // constant lateral force per N of payload
  double force_scale = 50.0;   // N per unit action
  double torque_scale = 10.0;  // N m per unit action
  double gait_hz = 1.0;        // phase clock advance rate
  // Reward shaping.
  double sigma_track = 0.25;   // tracking kernel width
  double w_lin = 1.0;
  double w_ang = 0.5;
  double w_action = 0.01;      // penalty on ||a_t - a_{t-1}||^2
  double w_alive = 0.15;
};

constexpr int kActDim = 3;
constexpr int kObsDim = 14;       // actor observation
constexpr int kCriticObsDim = 17; // actor observation + privileged fields

struct ToyEnvState {
  // Pose (world frame) and twist (body frame).
  double x = 0.0, y = 0.0, theta = 0.0;
  double vx = 0.0, vy = 0.0, omega = 0.0;
  // Commanded body twist, fixed for the episode.
  std::array<double, 3> cmd{0.0, 0.0, 0.0};
  // Episode randomization draws.
  double friction = 0.0;      // mu
  double added_mass = 0.0;    // kg
  double payload_force = 0.0; // N
  // Bookkeeping.
  std::array<double, 3> prev_action{0.0, 0.0, 0.0};
  double phase = 0.0; // gait clock in [0, 1)
  int step = 0;
};

// Draw order is part of the contract: friction, added mass, payload,
// command (vx, vy, omega). Keeping it fixed makes trials reproducible.
inline ToyEnvState env_reset(const ToyEnvConfig&, const RandomizationConfig& rand, Rng& rng) {
  if (rand.friction_lo > rand.friction_hi || rand.payload_lo > rand.payload_hi) {
    throw ValueError("env_reset: inverted randomization range");
  }
  ToyEnvState s;
  s.friction = rng.uniform(rand.friction_lo, rand.friction_hi);
  s.added_mass = rng.uniform(rand.added_mass_lo, rand.added_mass_hi);
  double payload = rng.uniform(rand.payload_lo, rand.payload_hi);
  s.payload_force = rand.randomize_payload ? payload : 0.0;
  s.cmd[0] = rng.uniform(-rand.cmd_lin_max, rand.cmd_lin_max);
  s.cmd[1] = rng.uniform(-rand.cmd_lin_max, rand.cmd_lin_max);
  s.cmd[2] = rng.uniform(-rand.cmd_ang_max, rand.cmd_ang_max);
  return s;
}

// Actor observation:
// [omega_z, sin theta, cos theta, cmd(3), twist(3), prev action(3),
//  sin 2*pi*phase, cos 2*pi*phase]
inline std::array<double, kObsDim> observe(const ToyEnvState& s) {
  constexpr double kTau = 6.283185307179586476925286766559;
  return {s.omega,
          std::sin(s.theta),
          std::cos(s.theta),
          s.cmd[0],
          s.cmd[1],
          s.cmd[2],
          s.vx,
          s.vy,
          s.omega,
          s.prev_action[0],
          s.prev_action[1],
          s.prev_action[2],
          std::sin(kTau * s.phase),
          std::cos(kTau * s.phase)};
}

// Critic observation: actor observation plus the privileged episode draws.
inline std::array<double, kCriticObsDim> observe_critic(const ToyEnvState& s) {
  auto o = observe(s);
  std::array<double, kCriticObsDim> c{};
  for (int i = 0; i < kObsDim; ++i) c[i] = o[i];
  c[kObsDim + 0] = s.friction;
  c[kObsDim + 1] = s.payload_force;
  c[kObsDim + 2] = s.added_mass;
  return c;
}

struct RewardTerms {
  double lin = 0.0;    // w_lin * exp(-||v_xy - cmd_xy||^2 / sigma^2)
  double ang = 0.0;    // w_ang * exp(-(omega - cmd_w)^2 / sigma^2)
  double action = 0.0; // -w_action * ||a_t - a_{t-1}||^2
  double alive = 0.0;
  double total = 0.0;  // always the literal sum of the terms above
};

inline RewardTerms compute_reward(const ToyEnvState& s, const std::array<double, 3>& action,
                                  const std::array<double, 3>& prev_action,
                                  const ToyEnvConfig& cfg) {
  RewardTerms r;
  const double ex = s.vx - s.cmd[0];
  const double ey = s.vy - s.cmd[1];
  const double ew = s.omega - s.cmd[2];
  const double s2 = cfg.sigma_track * cfg.sigma_track;
  r.lin = cfg.w_lin * std::exp(-(ex * ex + ey * ey) / s2);
  r.ang = cfg.w_ang * std::exp(-(ew * ew) / s2);
  double da2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = action[i] - prev_action[i];
    da2 += d * d;
  }
  r.action = -cfg.w_action * da2;
  r.alive = cfg.w_alive;
  r.total = r.lin + r.ang + r.action + r.alive;
  return r;
}

// Joint-space PD law used as the low-level actuator model reference:
// tau = kp * (a - q) - kd * qdot.
inline double pd_torque(double target, double q, double qdot, double kp, double kd) {
  return kp * (target - q) - kd * qdot;
}

struct StepResult {
  ToyEnvState state;
  RewardTerms reward;
  bool done = false;
  bool pushed = false; // a velocity push landed on this step
};

// One control step. Pushes land when the post-step time is an exact multiple
// of the push interval (with dt = 0.02 and interval 5 s: steps 250, 500, ...),
// drawn uniform per linear axis from the env's stream. NaN anywhere aborts.
inline StepResult env_step(const ToyEnvState& s, const std::array<double, 3>& action,
                           const ToyEnvConfig& cfg, const RandomizationConfig& rand, Rng& rng) {
  for (double a : action) {
    if (!std::isfinite(a)) throw NumericError("env_step: non-finite action");
  }
  if (!std::isfinite(s.vx) || !std::isfinite(s.vy) || !std::isfinite(s.omega)) {
    throw NumericError("env_step: non-finite state");
  }
  auto clamp1 = [](double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); };
  const double a0 = clamp1(action[0]);
  const double a1 = clamp1(action[1]);
  const double a2 = clamp1(action[2]);

  ToyEnvState n = s;
  const double m = cfg.base_mass + s.added_mass;
  // A lifting (negative) payload sheds normal load and with it drag, but a
  // passive contact cannot pump energy in, so the coefficient floors at zero.
  const double lin_drag =
      std::max(s.friction * cfg.friction_c + cfg.payload_drag * s.payload_force, 0.0);
  const double fx = a0 * cfg.force_scale - lin_drag * s.vx;
  const double fy = a1 * cfg.force_scale - lin_drag * s.vy + cfg.payload_bias * s.payload_force;
  const double tz = a2 * cfg.torque_scale - s.friction * cfg.ang_friction_c * s.omega;
  n.vx = s.vx + cfg.dt * fx / m;
  n.vy = s.vy + cfg.dt * fy / m;
  n.omega = s.omega + cfg.dt * tz / cfg.inertia;

  // Push schedule in integer steps so 5.00 s is hit exactly, never 4.98.
  const long long push_steps = std::llround(rand.push_interval_s / cfg.dt);
  bool pushed = false;
  if (push_steps > 0 && (s.step + 1) % push_steps == 0) {
    n.vx += rng.uniform(-rand.push_max, rand.push_max);
    n.vy += rng.uniform(-rand.push_max, rand.push_max);
    pushed = true;
  }

  // Integrate world pose with the new body twist (semi-implicit).
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  n.x = s.x + cfg.dt * (c * n.vx - sn * n.vy);
  n.y = s.y + cfg.dt * (sn * n.vx + c * n.vy);
  n.theta = s.theta + cfg.dt * n.omega;
  n.phase = std::fmod(s.phase + cfg.dt * cfg.gait_hz, 1.0);
  n.step = s.step + 1;

  StepResult out;
  out.reward = compute_reward(n, {a0, a1, a2}, s.prev_action, cfg);
  n.prev_action = {a0, a1, a2};
  out.pushed = pushed;
  out.done = n.step >= cfg.horizon;
  if (!std::isfinite(n.vx) || !std::isfinite(n.vy) || !std::isfinite(n.omega) ||
      !std::isfinite(out.reward.total)) {
    throw NumericError("env_step: dynamics diverged");
  }
  out.state = n;
  return out;
}

} // namespace comanip::rl
