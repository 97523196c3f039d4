#pragma once

// Proximal policy optimization on the planar tracking environment: vectorized
// rollouts, GAE, minibatched clipped-surrogate updates with gradient-norm
// clipping and approximate-KL early stopping, plus a paired evaluator for the
// adaptive-vs-baseline comparison.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "comanip/adam.hpp"
#include "comanip/env.hpp"
#include "comanip/error.hpp"
#include "comanip/gae.hpp"
#include "comanip/policy.hpp"
#include "comanip/rng.hpp"

namespace comanip::rl {

struct PPOConfig {
  double clip = 0.2;
  double gamma = 0.998;
  double lam = 0.95;
  double value_coeff = 1.0;
  double entropy_coeff = 0.0;
  double lr = 1e-3;
  double max_grad_norm = 1.0;
  double kl_target = 0.01; // stop the update pass when approx KL exceeds this
  int envs = 64;
  int rollout = 256; // steps per env per update
  int epochs = 4;
  int minibatches = 8;
  int updates = 60;
};

// Flattened on-policy batch (N = envs * rollout rows, env-major order).
struct RolloutBatch {
  Tensor obs, cobs, act, logp, adv, ret, v_old;
  double mean_reward = 0.0;    // mean per-step total reward
  double tracking_error = 0.0; // mean |twist - cmd| over the three channels
};

// One persistent environment lane; its stream drives resets and pushes.
struct EnvSlot {
  ToyEnvState state;
  Rng rng;
};

inline std::vector<EnvSlot> make_env_slots(const ToyEnvConfig& env, const RandomizationConfig& rand,
                                           int n, uint64_t seed) {
  std::vector<EnvSlot> slots;
  slots.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng r = Rng::substream(seed, "ppo.env", static_cast<uint64_t>(i));
    ToyEnvState s = env_reset(env, rand, r);
    slots.push_back({s, r});
  }
  return slots;
}

// Steps every slot cfg.rollout times with stochastic actions, then assembles
// the flat batch with GAE advantages (computed per lane, raw, not normalized).
inline RolloutBatch collect_rollout(const ad::ParamStore& ps, const PPOConfig& cfg,
                                    const ToyEnvConfig& env, const RandomizationConfig& rand,
                                    std::vector<EnvSlot>& slots, Rng& act_rng) {
  const int E = static_cast<int>(slots.size());
  const int T = cfg.rollout;
  if (E == 0 || T <= 0) throw ValueError("collect_rollout: empty rollout");
  const int N = E * T;
  RolloutBatch b;
  b.obs = Tensor({N, kObsDim});
  b.cobs = Tensor({N, kCriticObsDim});
  b.act = Tensor({N, kActDim});
  b.logp = Tensor({N, 1});
  b.adv = Tensor({N, 1});
  b.ret = Tensor({N, 1});
  b.v_old = Tensor({N, 1});

  std::vector<double> rewards(static_cast<size_t>(T));
  std::vector<double> dones(static_cast<size_t>(T));
  std::vector<double> values(static_cast<size_t>(T) + 1);
  double reward_acc = 0.0, track_acc = 0.0;

  for (int e = 0; e < E; ++e) {
    EnvSlot& slot = slots[static_cast<size_t>(e)];
    for (int t = 0; t < T; ++t) {
      const int row = e * T + t;
      const auto obs = observe(slot.state);
      const auto cobs = observe_critic(slot.state);
      const ActionSample as = sample_action(ps, obs, act_rng);
      values[static_cast<size_t>(t)] = value_of(ps, cobs);
      for (int j = 0; j < kObsDim; ++j) b.obs(row, j) = obs[static_cast<size_t>(j)];
      for (int j = 0; j < kCriticObsDim; ++j) b.cobs(row, j) = cobs[static_cast<size_t>(j)];
      for (int j = 0; j < kActDim; ++j) b.act(row, j) = as.action[static_cast<size_t>(j)];
      b.logp(row, 0) = as.logp;
      b.v_old(row, 0) = values[static_cast<size_t>(t)];

      StepResult sr = env_step(slot.state, as.action, env, rand, slot.rng);
      rewards[static_cast<size_t>(t)] = sr.reward.total;
      dones[static_cast<size_t>(t)] = sr.done ? 1.0 : 0.0;
      reward_acc += sr.reward.total;
      const ToyEnvState& ns = sr.state;
      track_acc += (std::abs(ns.vx - ns.cmd[0]) + std::abs(ns.vy - ns.cmd[1]) +
                    std::abs(ns.omega - ns.cmd[2])) /
                   3.0;
      slot.state = sr.done ? env_reset(env, rand, slot.rng) : sr.state;
    }
    // If the lane just reset, dones[T-1] == 1 masks this bootstrap anyway.
    values[static_cast<size_t>(T)] = value_of(ps, observe_critic(slot.state));
    GaeOut g = compute_gae(rewards, values, dones, cfg.gamma, cfg.lam);
    for (int t = 0; t < T; ++t) {
      b.adv(e * T + t, 0) = g.adv[static_cast<size_t>(t)];
      b.ret(e * T + t, 0) = g.ret[static_cast<size_t>(t)];
    }
  }
  b.mean_reward = reward_acc / N;
  b.tracking_error = track_acc / N;
  return b;
}

struct PpoUpdateStats {
  // First minibatch of the first epoch, before any optimizer step.
  double surrogate_first = 0.0, value_loss_first = 0.0;
  double kl_first = 0.0, clip_fraction_first = 0.0;
  // Aggregates over applied minibatch passes.
  double kl_last = 0.0, clip_fraction_mean = 0.0, grad_norm_max = 0.0;
  int applied_steps = 0;
  bool early_stopped = false;
};

// One PPO update over the batch: advantages normalized batch-wide, then
// cfg.epochs shuffled passes over cfg.minibatches slices. A pass whose
// approximate KL (mean of logp_old - logp_new) exceeds kl_target aborts the
// remaining passes without applying that step.
inline PpoUpdateStats ppo_update(const RolloutBatch& batch, ad::ParamStore& ps,
                                 ad::AdamState& opt, const PPOConfig& cfg,
                                 const PolicyConfig& pol, Rng& shuffle_rng) {
  const int N = batch.obs.rows();
  if (N <= 0) throw ValueError("ppo_update: empty batch");
  if (cfg.minibatches <= 0 || N % cfg.minibatches != 0)
    throw ValueError("ppo_update: batch size must divide evenly into minibatches");
  const int B = N / cfg.minibatches;

  // Batch-wide advantage normalization.
  std::vector<double> adv(batch.adv.data);
  normalize_advantages(adv);

  PpoLossGraph lg = build_ppo_loss(B, pol, cfg.clip, cfg.value_coeff, cfg.entropy_coeff);
  ad::Evaluation ev(lg.g);
  ad::Binding binds;
  for (const auto& [name, tensor] : ps) binds.set(name, tensor);
  Tensor mb_obs({B, pol.obs_dim}), mb_cobs({B, pol.critic_obs_dim}), mb_act({B, pol.act_dim});
  Tensor mb_logp({B, 1}), mb_adv({B, 1}), mb_ret({B, 1}), mb_vold({B, 1});
  binds.set("obs", mb_obs);
  binds.set("cobs", mb_cobs);
  binds.set("act", mb_act);
  binds.set("logp_old", mb_logp);
  binds.set("adv", mb_adv);
  binds.set("ret", mb_ret);
  binds.set("v_old", mb_vold);

  std::vector<int> order(static_cast<size_t>(N));
  std::iota(order.begin(), order.end(), 0);

  PpoUpdateStats st;
  bool first_pass = true;
  double clip_acc = 0.0;
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  for (int epoch = 0; epoch < cfg.epochs && !st.early_stopped; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      for (int i = 0; i < B; ++i) {
        const int src = order[static_cast<size_t>(mb * B + i)];
        for (int j = 0; j < pol.obs_dim; ++j) mb_obs(i, j) = batch.obs(src, j);
        for (int j = 0; j < pol.critic_obs_dim; ++j) mb_cobs(i, j) = batch.cobs(src, j);
        for (int j = 0; j < pol.act_dim; ++j) mb_act(i, j) = batch.act(src, j);
        mb_logp(i, 0) = batch.logp(src, 0);
        mb_adv(i, 0) = adv[static_cast<size_t>(src)];
        mb_ret(i, 0) = batch.ret(src, 0);
        mb_vold(i, 0) = batch.v_old(src, 0);
      }
      ev.forward(binds);
      const double total = ev.value(lg.total)[0];
      if (!std::isfinite(total)) throw NumericError("ppo_update: loss diverged");
      const Tensor& ratio = ev.value(lg.ratio);
      const Tensor& logp_new = ev.value(lg.logp_new);
      double kl = 0.0, clipped = 0.0;
      for (int i = 0; i < B; ++i) {
        kl += mb_logp(i, 0) - logp_new(i, 0);
        if (std::abs(ratio(i, 0) - 1.0) > cfg.clip) clipped += 1.0;
      }
      kl /= B;
      clipped /= B;
      if (first_pass) {
        st.surrogate_first = ev.value(lg.surrogate)[0];
        st.value_loss_first = ev.value(lg.value_loss)[0];
        st.kl_first = kl;
        st.clip_fraction_first = clipped;
        first_pass = false;
      }
      if (kl > cfg.kl_target) {
        st.early_stopped = true;
        break;
      }
      ad::GradMap grads = ev.backward(lg.total);
      const double gn = ad::clip_grad_norm(grads, cfg.max_grad_norm);
      if (gn > st.grad_norm_max) st.grad_norm_max = gn;
      ad::adam_step(ps, grads, opt, adam_cfg);
      st.kl_last = kl;
      clip_acc += clipped;
      st.applied_steps += 1;
    }
  }
  st.clip_fraction_mean = st.applied_steps > 0 ? clip_acc / st.applied_steps : 0.0;
  return st;
}

struct PpoCurvePoint {
  int update = 0;
  double mean_reward = 0.0;
  double tracking_error = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

struct PpoTrainResult {
  ad::ParamStore params;
  std::vector<PpoCurvePoint> curve;
};

// Full training run. All randomness derives from the seed: "ppo.init" for
// parameters, "ppo.env"/i per lane, "ppo.act" for action noise, "ppo.mb" for
// minibatch shuffles. Baseline ablations pass rand.randomize_payload = false.
// on_update (optional) fires after each curve point, letting callers stream
// the curve to disk before a potential divergence abort.
inline PpoTrainResult train_ppo(const PPOConfig& cfg, const PolicyConfig& pol,
                                const ToyEnvConfig& env, const RandomizationConfig& rand,
                                uint64_t seed,
                                const std::function<void(const PpoCurvePoint&)>& on_update = {}) {
  if (cfg.updates <= 0 || cfg.envs <= 0) throw ValueError("train_ppo: empty schedule");
  PpoTrainResult out;
  Rng init_rng = Rng::substream(seed, "ppo.init");
  out.params = init_policy_params(pol, init_rng);
  std::vector<EnvSlot> slots = make_env_slots(env, rand, cfg.envs, seed);
  Rng act_rng = Rng::substream(seed, "ppo.act");
  Rng mb_rng = Rng::substream(seed, "ppo.mb");
  ad::AdamState opt;
  for (int u = 1; u <= cfg.updates; ++u) {
    RolloutBatch batch = collect_rollout(out.params, cfg, env, rand, slots, act_rng);
    PpoUpdateStats st = ppo_update(batch, out.params, opt, cfg, pol, mb_rng);
    PpoCurvePoint pt;
    pt.update = u;
    pt.mean_reward = batch.mean_reward;
    pt.tracking_error = batch.tracking_error;
    pt.clip_fraction = st.clip_fraction_mean;
    pt.approx_kl = st.kl_last;
    out.curve.push_back(pt);
    if (on_update) on_update(pt);
    if (!std::isfinite(pt.mean_reward))
      throw NumericError("train_ppo: diverged at update " + std::to_string(u));
  }
  return out;
}

inline void write_ppo_curve_csv(std::ostream& os, const std::vector<PpoCurvePoint>& curve) {
  os << "update,mean_reward,tracking_error,clip_fraction,approx_kl\n";
  for (const auto& p : curve) {
    os << p.update << ',' << p.mean_reward << ',' << p.tracking_error << ',' << p.clip_fraction
       << ',' << p.approx_kl << '\n';
  }
}

struct PolicyEval {
  double tracking_error = 0.0;            // mean abs error over the 3 channels
  std::array<double, 3> channel_error{};  // per-channel mean abs error
  double mean_reward = 0.0;
};

// Deterministic mean-mode evaluation. Episode e uses substream
// ("ppo.eval", e), so two policies evaluated with the same seed face
// byte-identical episode draws and push sequences (paired comparison).
inline PolicyEval evaluate_policy(const ad::ParamStore& ps, const ToyEnvConfig& env,
                                  const RandomizationConfig& rand, int episodes, uint64_t seed) {
  if (episodes <= 0) throw ValueError("evaluate_policy: episodes must be positive");
  PolicyEval ev;
  int64_t steps = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = Rng::substream(seed, "ppo.eval", static_cast<uint64_t>(e));
    ToyEnvState s = env_reset(env, rand, rng);
    bool done = false;
    while (!done) {
      const auto obs = observe(s);
      const auto mu = policy_mean(ps, obs);
      std::array<double, 3> a{mu[0], mu[1], mu[2]};
      StepResult sr = env_step(s, a, env, rand, rng);
      const ToyEnvState& ns = sr.state;
      ev.channel_error[0] += std::abs(ns.vx - ns.cmd[0]);
      ev.channel_error[1] += std::abs(ns.vy - ns.cmd[1]);
      ev.channel_error[2] += std::abs(ns.omega - ns.cmd[2]);
      ev.mean_reward += sr.reward.total;
      steps += 1;
      done = sr.done;
      s = sr.state;
    }
  }
  for (double& c : ev.channel_error) c /= static_cast<double>(steps);
  ev.tracking_error = (ev.channel_error[0] + ev.channel_error[1] + ev.channel_error[2]) / 3.0;
  ev.mean_reward /= static_cast<double>(steps);
  return ev;
}

} // namespace comanip::rl
