#pragma once

// Generalized advantage estimation over flat per-env step sequences.

#include <cmath>
#include <utility>
#include <vector>

#include "comanip/error.hpp"

namespace comanip::rl {

struct GaeOut {
  std::vector<double> adv; // A_t
  std::vector<double> ret; // A_t + V_t, the value regression target
};

// rewards/dones have length T, values length T+1 (bootstrap value last).
// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}
// lambda = 1 recovers discounted Monte-Carlo returns minus V; lambda = 0 is
// the one-step TD error.
inline GaeOut compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                          const std::vector<double>& dones, double gamma, double lam) {
  const size_t T = rewards.size();
  if (values.size() != T + 1)
    throw ShapeError("compute_gae: need T+1 values for T rewards");
  if (dones.size() != T) throw ShapeError("compute_gae: dones length mismatch");
  if (gamma < 0.0 || gamma > 1.0 || lam < 0.0 || lam > 1.0)
    throw ValueError("compute_gae: gamma and lambda must lie in [0, 1]");
  GaeOut out;
  out.adv.resize(T);
  out.ret.resize(T);
  double acc = 0.0;
  for (size_t t = T; t-- > 0;) {
    const double nonterm = 1.0 - dones[t];
    const double delta = rewards[t] + gamma * values[t + 1] * nonterm - values[t];
    acc = delta + gamma * lam * nonterm * acc;
    out.adv[t] = acc;
    out.ret[t] = acc + values[t];
  }
  return out;
}

// In-place batch normalization of advantages (mean 0, std 1 with a floor).
// Returns {mean, std} of the input.
inline std::pair<double, double> normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) throw ValueError("normalize_advantages: empty batch");
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double sd = std::sqrt(var) < 1e-8 ? 1e-8 : std::sqrt(var);
  for (double& a : adv) a = (a - mean) / sd;
  return {mean, sd};
}

} // namespace comanip::rl
