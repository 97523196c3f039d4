#pragma once

// Gaussian actor-critic over the autodiff graph. The actor maps the
// 14-dim observation to an action mean through three gelu hidden layers;
// a state-independent log-std parameter completes the distribution. The
// critic sees three extra privileged fields (friction, payload force,
// added mass). Rollouts use a plain forward pass; updates build a
// minibatch loss graph with the clipped surrogate and clipped value loss.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "comanip/adam.hpp"
#include "comanip/env.hpp"
#include "comanip/error.hpp"
#include "comanip/graph.hpp"
#include "comanip/rng.hpp"
#include "comanip/tensor.hpp"

namespace comanip::rl {

struct PolicyConfig {
  int obs_dim = kObsDim;
  int critic_obs_dim = kCriticObsDim;
  int act_dim = kActDim;
  int hidden = 64;           // width of the three hidden layers
  double logstd_init = -0.5; // sigma ~= 0.61 against the [-1, 1] action box
};

// Fixed parameter creation order; checkpoints and init draws depend on it.
inline std::vector<std::pair<std::string, Shape>> policy_param_plan(const PolicyConfig& cfg) {
  if (cfg.obs_dim <= 0 || cfg.critic_obs_dim <= 0 || cfg.act_dim <= 0 || cfg.hidden <= 0)
    throw ConfigError("policy_param_plan: dimensions must be positive");
  std::vector<std::pair<std::string, Shape>> plan;
  auto mlp = [&](const std::string& px, int in, int out) {
    plan.emplace_back(px + ".l1.w", Shape{in, cfg.hidden});
    plan.emplace_back(px + ".l1.b", Shape{cfg.hidden});
    plan.emplace_back(px + ".l2.w", Shape{cfg.hidden, cfg.hidden});
    plan.emplace_back(px + ".l2.b", Shape{cfg.hidden});
    plan.emplace_back(px + ".l3.w", Shape{cfg.hidden, cfg.hidden});
    plan.emplace_back(px + ".l3.b", Shape{cfg.hidden});
    plan.emplace_back(px + ".out.w", Shape{cfg.hidden, out});
    plan.emplace_back(px + ".out.b", Shape{out});
  };
  mlp("pi", cfg.obs_dim, cfg.act_dim);
  plan.emplace_back("pi.logstd", Shape{cfg.act_dim});
  mlp("vf", cfg.critic_obs_dim, 1);
  return plan;
}

inline ad::ParamStore init_policy_params(const PolicyConfig& cfg, Rng& rng) {
  ad::ParamStore ps;
  for (const auto& [name, shape] : policy_param_plan(cfg)) {
    if (name == "pi.logstd") {
      ps[name] = Tensor::full(shape, cfg.logstd_init);
    } else if (shape.size() == 2) {
      ps[name] = Tensor::randn(shape, rng, 1.0 / std::sqrt(static_cast<double>(shape[0])));
    } else {
      ps[name] = Tensor(shape); // biases start at zero
    }
  }
  return ps;
}

namespace detail {

// y = x W + b with W (in, out); matches the graph's matmul summation order.
inline std::vector<double> affine(const std::vector<double>& x, const Tensor& w, const Tensor& b) {
  const int in = w.shape[0], out = w.shape[1];
  if (static_cast<int>(x.size()) != in) throw ShapeError("affine: input length mismatch");
  std::vector<double> y(b.data.begin(), b.data.end());
  for (int k = 0; k < in; ++k)
    for (int j = 0; j < out; ++j) y[static_cast<size_t>(j)] += x[static_cast<size_t>(k)] * w(k, j);
  return y;
}

inline std::vector<double> mlp_forward(const ad::ParamStore& ps, const std::string& px,
                                       std::vector<double> x) {
  for (const char* layer : {".l1", ".l2", ".l3"}) {
    x = affine(x, ps.at(px + layer + ".w"), ps.at(px + layer + ".b"));
    for (double& v : x) v = ad::detail::gelu_fwd(v);
  }
  return affine(x, ps.at(px + ".out.w"), ps.at(px + ".out.b"));
}

} // namespace detail

// Mean of the action distribution at an observation.
inline std::array<double, 3> policy_mean(const ad::ParamStore& ps,
                                         const std::array<double, kObsDim>& obs) {
  auto m = detail::mlp_forward(ps, "pi", std::vector<double>(obs.begin(), obs.end()));
  return {m[0], m[1], m[2]};
}

inline double value_of(const ad::ParamStore& ps, const std::array<double, kCriticObsDim>& cobs) {
  return detail::mlp_forward(ps, "vf", std::vector<double>(cobs.begin(), cobs.end()))[0];
}

// Diagonal-Gaussian log density.
inline double gaussian_logp(const std::array<double, 3>& a, const std::array<double, 3>& mu,
                            const Tensor& logstd) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  double lp = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double ls = logstd[static_cast<size_t>(i)];
    const double z = (a[static_cast<size_t>(i)] - mu[static_cast<size_t>(i)]) * std::exp(-ls);
    lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
  }
  return lp;
}

struct ActionSample {
  std::array<double, 3> mean;
  std::array<double, 3> action;
  double logp = 0.0;
};

// mean_mode skips the noise draw; the log-prob is then
// -1/2 * sum_i (log 2*pi + 2 * logstd_i).
inline ActionSample sample_action(const ad::ParamStore& ps, const std::array<double, kObsDim>& obs,
                                  Rng& rng, bool mean_mode = false) {
  ActionSample out;
  out.mean = policy_mean(ps, obs);
  const Tensor& logstd = ps.at("pi.logstd");
  out.action = out.mean;
  if (!mean_mode) {
    for (int i = 0; i < 3; ++i)
      out.action[static_cast<size_t>(i)] +=
          std::exp(logstd[static_cast<size_t>(i)]) * rng.normal();
  }
  out.logp = gaussian_logp(out.action, out.mean, logstd);
  return out;
}

// Minibatch PPO loss graph. Node ids are exposed so the update loop can read
// intermediate values (ratio for the clip fraction, logp for approximate KL).
struct PpoLossGraph {
  ad::Graph g;
  int B = 0;
  // Inputs.
  int obs = -1, cobs = -1, act = -1, logp_old = -1, adv = -1, ret = -1, v_old = -1;
  // Probes.
  int mu = -1, v = -1, logp_new = -1, ratio = -1, surrogate = -1, value_loss = -1;
  int total = -1; // last node; minimized
};

// total = -surrogate + value_coeff * value_loss - entropy_coeff * entropy,
// surrogate = mean_i min(r_i A_i, clamp(r_i, 1-c, 1+c) A_i),
// value_loss = mean_i max((v_i - R_i)^2, (v_old_i + clamp(v_i - v_old_i, -c, c) - R_i)^2).
inline PpoLossGraph build_ppo_loss(int batch, const PolicyConfig& cfg, double clip,
                                   double value_coeff, double entropy_coeff = 0.0) {
  if (batch <= 0) throw ValueError("build_ppo_loss: batch must be positive");
  if (clip <= 0.0 || clip >= 1.0) throw ConfigError("build_ppo_loss: clip must be in (0, 1)");
  PpoLossGraph lg;
  lg.B = batch;
  ad::Graph& g = lg.g;
  lg.obs = g.input("obs", {batch, cfg.obs_dim});
  lg.cobs = g.input("cobs", {batch, cfg.critic_obs_dim});
  lg.act = g.input("act", {batch, cfg.act_dim});
  lg.logp_old = g.input("logp_old", {batch, 1});
  lg.adv = g.input("adv", {batch, 1});
  lg.ret = g.input("ret", {batch, 1});
  lg.v_old = g.input("v_old", {batch, 1});

  auto plan = policy_param_plan(cfg);
  auto shape_of = [&](const std::string& n) {
    for (auto& [pn, sh] : plan)
      if (pn == n) return sh;
    throw ValueError("build_ppo_loss: unknown parameter " + n);
  };
  auto mlp = [&](const std::string& px, int x) {
    for (const char* layer : {".l1", ".l2", ".l3"}) {
      const std::string lw = px + layer + ".w", lb = px + layer + ".b";
      x = g.gelu(g.add(g.matmul(x, g.param(lw, shape_of(lw))), g.param(lb, shape_of(lb))));
    }
    return g.add(g.matmul(x, g.param(px + ".out.w", shape_of(px + ".out.w"))),
                 g.param(px + ".out.b", shape_of(px + ".out.b")));
  };

  lg.mu = mlp("pi", lg.obs);
  const int logstd = g.param("pi.logstd", {cfg.act_dim});
  // logp_i = -1/2 ||(a_i - mu_i) / sigma||^2 - sum(logstd) - (act/2) log 2*pi
  const int z = g.mul(g.sub(lg.act, lg.mu), g.exp(g.scale(logstd, -1.0)));
  const int row_ss = g.matmul(g.mul(z, z), g.constant(Tensor::full({cfg.act_dim, 1}, 1.0)));
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  lg.logp_new = g.add(g.sub(g.scale(row_ss, -0.5), g.sum(logstd)),
                      g.constant(-0.5 * cfg.act_dim * kLog2Pi));
  lg.ratio = g.exp(g.sub(lg.logp_new, lg.logp_old));
  const int clipped = g.clamp(lg.ratio, 1.0 - clip, 1.0 + clip);
  lg.surrogate = g.mean(g.minimum(g.mul(lg.ratio, lg.adv), g.mul(clipped, lg.adv)));

  lg.v = mlp("vf", lg.cobs);
  const int dv = g.sub(lg.v, lg.ret);
  const int v_clip = g.add(lg.v_old, g.clamp(g.sub(lg.v, lg.v_old), -clip, clip));
  const int dvc = g.sub(v_clip, lg.ret);
  lg.value_loss = g.mean(g.maximum(g.mul(dv, dv), g.mul(dvc, dvc)));

  int total = g.add(g.scale(lg.surrogate, -1.0), g.scale(lg.value_loss, value_coeff));
  if (entropy_coeff != 0.0) {
    // Gaussian entropy = sum(logstd) + (act/2)(1 + log 2*pi); maximized.
    const int ent = g.add(g.sum(logstd), g.constant(0.5 * cfg.act_dim * (1.0 + kLog2Pi)));
    total = g.sub(total, g.scale(ent, entropy_coeff));
  }
  lg.total = total;
  return lg;
}

} // namespace comanip::rl
