// Acceptance harness: `acceptance N` runs check N (1..8) and prints exactly
// one PASS/FAIL line with the measured numbers next to the pinned tolerance.
// Exit code 0 iff the check passed, so each check can gate CI on its own.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "comanip/diffusion.hpp"
#include "comanip/dyad.hpp"
#include "comanip/gae.hpp"
#include "comanip/gradcheck.hpp"
#include "comanip/metrics.hpp"
#include "comanip/policy.hpp"
#include "comanip/ppo.hpp"
#include "comanip/rng.hpp"
#include "comanip/wavelet.hpp"

namespace fs = std::filesystem;
using namespace comanip;
using Clock = std::chrono::steady_clock;

namespace {

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. autodiff soundness: randomized composite graphs vs central differences
// ---------------------------------------------------------------------------

constexpr double kGradTol = 1e-4;

// Five composite templates; each instantiation randomizes sizes and values.
double random_graph_check(int variant, Rng& rng) {
  const int m = 2 + static_cast<int>(rng.uniform(0, 3));  // 2..4
  const int k2 = 2 + static_cast<int>(rng.uniform(0, 3));
  const int s = 3 + static_cast<int>(rng.uniform(0, 3));

  ad::Graph g;
  ad::ParamStore ps;
  auto P = [&](const std::string& name, Shape shape) {
    ps[name] = Tensor::randn(shape, rng, 0.6);
    return g.param(name, shape);
  };

  switch (variant) {
    case 0: {  // cross-attention block with layer norm and gelu output head
      const int q = P("q", {m, k2});
      const int kk = P("k", {s, k2});
      const int v = P("v", {s, k2});
      const int logits = g.scale(g.matmul(q, kk, false, true), 1.0 / std::sqrt(k2));
      const int ctx = g.matmul(g.softmax_rows(logits), v);
      g.mean(g.gelu(g.layer_norm(ctx)));
      break;
    }
    case 1: {  // two-layer mlp with broadcast bias and row softmax
      const int x = P("x", {s, m});
      const int w1 = P("w1", {m, k2});
      const int w2 = P("w2", {k2, m});
      const int b = P("b", {1, m});
      const int h = g.layer_norm(g.gelu(g.matmul(x, w1)));
      const int out = g.softmax_rows(g.add(g.matmul(h, w2), b));
      g.sum(g.mul(out, x));
      break;
    }
    case 2: {  // smooth elementwise chain: exp, log, mul, sub
      const int a = P("a", {m, k2});
      const int b = P("b", {m, k2});
      const int pos = g.add(g.mul(b, b), g.constant(1.0));
      const int t1 = g.mul(g.exp(g.scale(a, 0.4)), g.log(pos));
      g.mean(g.add(t1, g.gelu(g.sub(a, b))));
      break;
    }
    case 3: {  // concat / slice / reshape plumbing around a matmul
      const int a = P("a", {m, k2});
      const int b = P("b", {m, k2});
      const int cat = g.concat(a, b, 1);              // (m, 2k)
      const int left = g.slice(cat, 1, 0, k2);        // == a
      const int flipped = g.reshape(g.concat(a, b, 0), {k2, 2 * m});
      const int mm = g.matmul(left, flipped);         // (m, 2m)
      g.mean(g.layer_norm(mm));
      break;
    }
    default: {  // pre-norm residual block
      const int x = P("x", {m, k2});
      const int w = P("w", {k2, k2});
      const int c = P("c", {m, k2});
      const int res = g.add(x, g.gelu(g.matmul(g.layer_norm(x), w)));
      g.mean(g.mul(g.softmax_rows(res), c));
      break;
    }
  }
  ad::Binding none;
  return ad::grad_check(g, none, ps).max_rel_err;
}

Outcome criterion_1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    Rng rng = Rng::substream(7001, "accept.graph", static_cast<uint64_t>(i));
    worst = std::max(worst, random_graph_check(i % 5, rng));
  }
  const double dt = secs_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "autodiff vs central differences: 50 graphs, max rel err %.2e (tol %g), %.1fs",
                worst, kGradTol, dt);
  return {worst < kGradTol && dt < 60.0, buf};
}

// ---------------------------------------------------------------------------
// 2. wavelet properties on random signals
// ---------------------------------------------------------------------------

constexpr double kLinTol = 1e-12;
constexpr double kConstTol = 1e-12;

Outcome criterion_2() {
  const auto t0 = Clock::now();
  double worst_lin = 0.0, worst_const = 0.0;
  int shift_misses = 0, shape_misses = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = Rng::substream(7002, "accept.sig", static_cast<uint64_t>(i));
    const int t = 32 << static_cast<int>(rng.uniform(0, 3));  // 32/64/128: no padding
    const int d = 1 + static_cast<int>(rng.uniform(0, 3));
    const int levels = 4;
    const auto filter = (i % 2) ? wav::WaveletFilter::db4() : wav::WaveletFilter::haar();

    const Tensor x = Tensor::randn({t, d}, rng);
    const Tensor y = Tensor::randn({t, d}, rng);
    const auto lx = wav::swt_approx(wav::pad_pow2(x), levels, filter);
    const auto ly = wav::swt_approx(wav::pad_pow2(y), levels, filter);

    // shape preservation
    if (static_cast<int>(lx.size()) != levels) ++shape_misses;
    for (const auto& lv : lx)
      if (lv.shape != (Shape{t, d})) ++shape_misses;

    // linearity
    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    Tensor comb({t, d});
    for (size_t j = 0; j < comb.numel(); ++j) comb[j] = a * x[j] + b * y[j];
    const auto lc = wav::swt_approx(wav::pad_pow2(comb), levels, filter);
    for (int l = 0; l < levels; ++l)
      for (size_t j = 0; j < lc[static_cast<size_t>(l)].numel(); ++j)
        worst_lin = std::max(worst_lin,
                             std::abs(lc[static_cast<size_t>(l)][j] -
                                      (a * lx[static_cast<size_t>(l)][j] +
                                       b * ly[static_cast<size_t>(l)][j])));

    // circular shift-equivariance, exact
    const int shift = 1 + static_cast<int>(rng.uniform(0, t - 1));
    Tensor xs({t, d});
    for (int n = 0; n < t; ++n)
      for (int c = 0; c < d; ++c) xs((n + shift) % t, c) = x(n, c);
    const auto ls = wav::swt_approx(wav::pad_pow2(xs), levels, filter);
    for (int l = 0; l < levels; ++l)
      for (int n = 0; n < t; ++n)
        for (int c = 0; c < d; ++c)
          if (ls[static_cast<size_t>(l)]((n + shift) % t, c) !=
              lx[static_cast<size_t>(l)](n, c))
            ++shift_misses;

    // constant preservation through all levels
    const double cv = rng.uniform(-5.0, 5.0);
    const auto lk = wav::swt_approx(wav::pad_pow2(Tensor::full({t, d}, cv)), levels, filter);
    for (const auto& lv : lk)
      for (double vv : lv.data) worst_const = std::max(worst_const, std::abs(vv - cv));
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "wavelet properties: 100 signals, linearity %.2e (tol %g), shift exact %s, "
                "constant %.2e (tol %g), %.1fs",
                worst_lin, kLinTol, shift_misses == 0 ? "yes" : "NO", worst_const, kConstTol,
                secs_since(t0));
  return {shape_misses == 0 && shift_misses == 0 && worst_lin < kLinTol &&
              worst_const < kConstTol,
          buf};
}

// ---------------------------------------------------------------------------
// 3. diffusion identities
// ---------------------------------------------------------------------------

Outcome criterion_3() {
  bool ok = true;
  std::string note;

  // (a) alpha-bar is the running product of (1 - beta)
  const auto sch = diff::NoiseSchedule::cosine(100);
  double prod = 1.0, worst_a = std::abs(sch.alpha_bar[0] - 1.0);
  for (int t = 1; t <= 100; ++t) {
    prod *= 1.0 - sch.beta[static_cast<size_t>(t - 1)];
    worst_a = std::max(worst_a,
                       std::abs(sch.alpha_bar[static_cast<size_t>(t)] - prod) / prod);
  }
  ok = ok && worst_a < 1e-12;

  // (b) constant-eps fixed point across K = 20 steps
  Rng rng = Rng::substream(7003, "accept.ddim");
  const Tensor y_init = Tensor::randn({6, 3}, rng);
  const Tensor ceps = Tensor::full({6, 3}, 0.37);
  auto const_fn = [&](const Tensor&, int) { return ceps; };
  const Tensor y20 = diff::ddim_sample(const_fn, sch, 20, y_init);
  const Tensor y1 = diff::ddim_sample(const_fn, sch, 1, y_init);
  const double sa = std::sqrt(sch.alpha_bar[100]);
  const double sb = std::sqrt(1.0 - sch.alpha_bar[100]);
  double worst_b = 0.0;
  for (size_t j = 0; j < y20.numel(); ++j) {
    const double want = (y_init[j] - sb * ceps[j]) / sa;
    worst_b = std::max(worst_b, std::abs(y20[j] - want));
    worst_b = std::max(worst_b, std::abs(y20[j] - y1[j]));
  }
  ok = ok && worst_b < 1e-10;

  // (c) zero-weight net: command is exactly row 0 of the scaled initial draw
  diff::EpsNetConfig cfg;
  cfg.d = 8;
  cfg.levels = 2;
  cfg.blocks = 1;
  cfg.horizon = 6;
  cfg.samples = 8;
  const auto m = diff::IntentModel::zeros(cfg, 100);
  Rng wr = Rng::substream(7003, "accept.wrench");
  const Tensor wf = Tensor::randn({cfg.window(), cfg.channels}, wr);
  const Tensor wt = Tensor::randn({cfg.window(), cfg.channels}, wr);
  const auto res = diff::infer_command(m, wf, wt, 20, 4242);
  Rng draw = Rng::substream(4242, "ddim-init");
  const Tensor yi = Tensor::randn({cfg.horizon, cfg.cmd_dim}, draw);
  bool exact_c = true;
  for (int c = 0; c < 3; ++c)
    if (res.command[static_cast<size_t>(c)] != yi(0, c) / sa) exact_c = false;
  ok = ok && exact_c;

  // (d) KL closed forms: standard-normal stats give 0, mu = 1 gives 0.5/dim
  double kl0 = -1.0, kl_half = -1.0;
  {
    ad::Graph g;
    diff::EpsNetBuilder nb(g, cfg);
    const int kl = nb.kl_node(nb.encode("", false));
    ad::ParamStore ps = diff::zero_eps_params(cfg);
    ad::Binding binds;
    for (const auto& [name, t] : ps) binds.set(name, t);
    const diff::Conditioning cond = diff::make_conditioning(cfg, wf, wt);
    nb.bind_conditioning(binds, "", cond);
    kl0 = ad::eval_graph(g, binds, kl)[0];

    ps["cond.mu.b"] = Tensor::full({cfg.d}, 1.0);
    binds.set("cond.mu.b", ps["cond.mu.b"]);
    kl_half = ad::eval_graph(g, binds, kl)[0];
  }
  ok = ok && kl0 == 0.0 && kl_half == 0.5;

  char buf[220];
  std::snprintf(buf, sizeof buf,
                "diffusion identities: schedule product %.1e (tol 1e-12); const-eps fixed point "
                "%.1e (tol 1e-10); zero-net %s; KL {%.1f, %.2f} exact",
                worst_a, worst_b, exact_c ? "exact" : "NOT exact", kl0, kl_half);
  return {ok, buf};
}

// ---------------------------------------------------------------------------
// 4. intent learning at desk scale
// ---------------------------------------------------------------------------

Outcome criterion_4() {
  const auto t0 = Clock::now();
  const uint64_t seed = 1;
  const std::vector<double> payloads{0.0, 2.5, 5.0, 10.0};
  const int reps = 3;

  diff::EpsNetConfig cfg;  // desk-scale width; epochs and thresholds stay pinned
  cfg.d = 32;
  cfg.levels = 3;
  cfg.blocks = 2;
  cfg.horizon = 6;
  cfg.samples = 33;

  dyad::DyadConfig dc;
  std::vector<TrainingSample> train, held;
  uint64_t trial = 0;
  for (double pay : payloads)
    for (int p = 0; p < dyad::kNumPrimitives; ++p)
      for (int r = 0; r < reps; ++r, ++trial) {
        dyad::DyadConfig c2 = dc;
        c2.payload = pay;
        const auto log = dyad::simulate_dyad(static_cast<dyad::Primitive>(p), c2,
                                             Rng::derive(seed, "dyad.trial", trial));
        // last repetition of every (payload, primitive) cell is held out
        const bool heldout = (r == reps - 1);
        auto w = dyad::window_dataset(log, cfg.horizon, heldout ? 8 : 4);
        auto& dst = heldout ? held : train;
        dst.insert(dst.end(), w.begin(), w.end());
      }

  diff::IntentTrainConfig tc;  // epochs = 30 per the acceptance definition
  const auto res = diff::train_intent(train, cfg, tc, seed);
  const auto ev = diff::evaluate_intent(res.model, held, 20, seed);
  const double dt = secs_since(t0);

  const double ratio = ev.mse / ev.zero_mse;
  const bool ok = ratio <= 0.20 && ev.sign_agreement >= 0.90 && dt <= 20.0 * 60.0;
  char buf[240];
  std::snprintf(buf, sizeof buf,
                "intent learning: %zu train / %zu held-out windows, 30 epochs; held-out MSE "
                "%.4f = %.1f%% of zero baseline %.4f (need <=20%%); translation sign agreement "
                "%.1f%% over %d (need >=90%%); %.1f min (cap 20)",
                train.size(), held.size(), ev.mse, 100.0 * ratio, ev.zero_mse,
                100.0 * ev.sign_agreement, ev.translation_samples, dt / 60.0);
  return {ok, buf};
}

// ---------------------------------------------------------------------------
// 5. GAE / PPO identities
// ---------------------------------------------------------------------------

Outcome criterion_5() {
  // lambda = 1 equals brute-force discounted returns minus the value baseline
  const int T = 50;
  Rng rng = Rng::substream(7005, "accept.gae");
  std::vector<double> r(T), v(T + 1), d(T, 0.0);
  for (int t = 0; t < T; ++t) r[static_cast<size_t>(t)] = rng.uniform(-1.0, 1.0);
  for (int t = 0; t <= T; ++t) v[static_cast<size_t>(t)] = rng.uniform(-1.0, 1.0);
  d[17] = 1.0;
  d[T - 1] = 1.0;
  const double gamma = 0.99;
  const auto out = rl::compute_gae(r, v, d, gamma, 1.0);
  double worst_gae = 0.0;
  for (int t = 0; t < T; ++t) {
    double ret = 0.0, disc = 1.0;
    for (int j = t; j < T; ++j) {
      ret += disc * r[static_cast<size_t>(j)];
      if (d[static_cast<size_t>(j)] > 0.5) break;
      disc *= gamma;
      if (j == T - 1) ret += disc * v[static_cast<size_t>(T)];
    }
    worst_gae = std::max(worst_gae, std::abs(out.adv[static_cast<size_t>(t)] +
                                             v[static_cast<size_t>(t)] - ret));
  }
  const bool gae_ok = worst_gae < 1e-10;

  // the three clip branches, driven through the real loss graph
  rl::PolicyConfig pc;
  pc.hidden = 8;
  Rng prng = Rng::substream(7005, "accept.policy");
  ad::ParamStore ps = rl::init_policy_params(pc, prng);
  rl::PpoLossGraph lg = rl::build_ppo_loss(1, pc, 0.2, 1.0);
  ad::Evaluation ev(lg.g);
  ad::Binding binds;
  for (const auto& [name, tensor] : ps) binds.set(name, tensor);
  Tensor obs({1, pc.obs_dim}), cobs({1, pc.critic_obs_dim}), act({1, pc.act_dim});
  Tensor logp_old({1, 1}), adv({1, 1}), ret({1, 1}), v_old({1, 1});
  binds.set("obs", obs);
  binds.set("cobs", cobs);
  binds.set("act", act);
  binds.set("logp_old", logp_old);
  binds.set("adv", adv);
  binds.set("ret", ret);
  binds.set("v_old", v_old);
  ev.forward(binds);
  const double lp = ev.value(lg.logp_new)(0, 0);
  const double ln2 = std::log(2.0);

  double worst_clip = 0.0;
  logp_old(0, 0) = lp - ln2;  // rho = 2, A = +1: clipped at 1.2
  adv(0, 0) = 1.0;
  ev.forward(binds);
  worst_clip = std::max(worst_clip, std::abs(ev.value(lg.surrogate)[0] - 1.2));
  logp_old(0, 0) = lp + ln2;  // rho = 0.5, A = -1: min(-0.5, -0.8) = -0.8
  adv(0, 0) = -1.0;
  ev.forward(binds);
  worst_clip = std::max(worst_clip, std::abs(ev.value(lg.surrogate)[0] - (-0.8)));
  logp_old(0, 0) = lp;  // rho = 1: objective passes the advantage through
  adv(0, 0) = 0.7;
  ev.forward(binds);
  worst_clip = std::max(worst_clip, std::abs(ev.value(lg.surrogate)[0] - 0.7));
  const bool clip_ok = worst_clip < 1e-12;

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "GAE/PPO identities: lambda=1 vs discounted-return oracle %.1e (tol 1e-10); "
                "clip branches {1.2, -0.8, 0.7} err %.1e (tol 1e-12)",
                worst_gae, worst_clip);
  return {gae_ok && clip_ok, buf};
}

// ---------------------------------------------------------------------------
// 6. load adaptation: payload randomization vs no-randomization baseline
// ---------------------------------------------------------------------------

Outcome criterion_6() {
  const auto t0 = Clock::now();
  const uint64_t seed = 1;
  rl::PPOConfig cfg;
  cfg.updates = 60;
  rl::PolicyConfig pol;
  rl::ToyEnvConfig env;
  rl::RandomizationConfig adapt;
  rl::RandomizationConfig base = adapt;
  base.randomize_payload = false;

  const auto ra = rl::train_ppo(cfg, pol, env, adapt, seed);
  const double t_a = secs_since(t0);
  const auto tb0 = Clock::now();
  const auto rb = rl::train_ppo(cfg, pol, env, base, seed);
  const double t_b = secs_since(tb0);

  rl::RandomizationConfig ev = adapt;  // held-out payload, same seeds for both
  ev.payload_lo = ev.payload_hi = 12.0;
  const auto ea = rl::evaluate_policy(ra.params, env, ev, 100, seed);
  const auto eb = rl::evaluate_policy(rb.params, env, ev, 100, seed);

  const double reduction = 1.0 - ea.tracking_error / eb.tracking_error;
  const bool ok = ea.tracking_error < eb.tracking_error && reduction >= 0.25 &&
                  t_a <= 30.0 * 60.0 && t_b <= 30.0 * 60.0;
  char buf[240];
  std::snprintf(buf, sizeof buf,
                "load adaptation @ 12 N / 100 episodes: adaptive err %.4f vs baseline %.4f, "
                "reduction %.1f%% (need >=25%% and strictly lower); train %.1f / %.1f min "
                "(cap 30 each)",
                ea.tracking_error, eb.tracking_error, 100.0 * reduction, t_a / 60.0, t_b / 60.0);
  return {ok, buf};
}

// ---------------------------------------------------------------------------
// 7. metrics: oversampled oracle, ramp fixture, table fixture
// ---------------------------------------------------------------------------

Outcome criterion_7() {
  // smooth synthetic trial on [0, 10]: a smoothstep reach with small wiggles,
  // so the pair settles and the completion band has a clean dwell
  auto s = [](double t) {
    const double u = t / 10.0;
    return 0.8 * u * u * (3.0 - 2.0 * u);
  };
  auto sd = [](double t) {
    const double u = t / 10.0;
    return 0.8 * 6.0 * u * (1.0 - u) / 10.0;
  };
  auto xh = [&](double t) {
    return std::array<double, 2>{s(t) + 0.02 * std::sin(t), 0.05 * std::cos(0.7 * t)};
  };
  auto xr = [&](double t) {
    return std::array<double, 2>{s(t) - 0.03 * std::sin(0.9 * t), 0.04 * std::sin(0.5 * t)};
  };
  auto vh = [&](double t) {
    return std::array<double, 2>{sd(t) + 0.02 * std::cos(t), -0.035 * std::sin(0.7 * t)};
  };
  auto vr = [&](double t) {
    return std::array<double, 2>{sd(t) - 0.027 * std::cos(0.9 * t), 0.02 * std::cos(0.5 * t)};
  };
  auto f1 = [](double t) {
    return std::array<double, 2>{3.0 + std::sin(0.4 * t), 0.5 * std::cos(0.3 * t)};
  };
  auto f2 = [](double t) {
    return std::array<double, 2>{2.0 - 0.5 * std::sin(0.6 * t), 0.3 * std::sin(0.2 * t)};
  };
  auto com = [&](double t) {
    const auto h = xh(t), r = xr(t);
    return 0.5 * (h[0] + r[0]);  // displacement axis
  };

  const int n = 20001;
  metrics::TrajectoryPair pair;
  metrics::WrenchPair wrench;
  Tensor comt({n, 1});
  pair.xh = Tensor({n, 2});
  pair.xr = Tensor({n, 2});
  pair.vh = Tensor({n, 2});
  pair.vr = Tensor({n, 2});
  wrench.f1 = Tensor({n, 2});
  wrench.f2 = Tensor({n, 2});
  for (int i = 0; i < n; ++i) {
    const double t = 10.0 * i / (n - 1);
    pair.t.push_back(t);
    wrench.t.push_back(t);
    comt(i, 0) = com(t);
    const auto a = xh(t), b = xr(t), c = vh(t), d = vr(t), e = f1(t), f = f2(t);
    for (int j = 0; j < 2; ++j) {
      pair.xh(i, j) = a[static_cast<size_t>(j)];
      pair.xr(i, j) = b[static_cast<size_t>(j)];
      pair.vh(i, j) = c[static_cast<size_t>(j)];
      pair.vr(i, j) = d[static_cast<size_t>(j)];
      wrench.f1(i, j) = e[static_cast<size_t>(j)];
      wrench.f2(i, j) = f[static_cast<size_t>(j)];
    }
  }
  const auto got = metrics::compute_metrics(pair, wrench, comt);

  // oracle: midpoint sums over a 10x finer grid of the same analytic curves,
  // between the same detected bounds
  const double ts = got.bounds.t_s, te = got.bounds.t_e;
  const int no = 10 * (n - 1);
  double s_dev = 0.0, s_vel = 0.0, s_force = 0.0;
  const double h = (te - ts) / no;
  for (int i = 0; i < no; ++i) {
    const double t = ts + (i + 0.5) * h;
    const auto a = xh(t), b = xr(t), c = vh(t), d = vr(t), e = f1(t), f = f2(t);
    s_dev += h * std::hypot(a[0] - b[0], a[1] - b[1]);
    s_vel += h * std::hypot(c[0] - d[0], c[1] - d[1]);
    s_force += h * (std::hypot(e[0], e[1]) + std::hypot(f[0], f[1]));
  }
  const double span = te - ts;
  const double worst_oracle = std::max(
      {std::abs(got.traj - s_dev / span), std::abs(got.vel - s_vel / span),
       std::abs(got.force - s_force / span), std::abs(got.t_c - span)});
  const bool oracle_ok = worst_oracle < 1e-6;

  // linear-ramp bound fixture: must invert the thresholds exactly
  std::vector<double> rt;
  Tensor rx({101, 1});
  for (int i = 0; i <= 100; ++i) {
    rt.push_back(i / 10.0);
    rx(i, 0) = i / 100.0;
  }
  const auto b = metrics::detect_bounds(rt, rx);
  const bool ramp_ok = b.t_s == 0.5 && b.t_e == 9.5 &&
                       metrics::completion_time(b) == 9.0;

  // comparison columns render verbatim
  const std::string rep = metrics::render_report(metrics::build_report({got}));
  bool table_ok = true;
  for (const char* cell : {"23.78", "0.1109", "0.165", "17.355"})
    if (rep.find(cell) == std::string::npos) table_ok = false;

  char buf[220];
  std::snprintf(buf, sizeof buf,
                "metrics: four metrics vs 10x-oversampled oracle %.1e (tol 1e-6); ramp bounds "
                "(0.5, 9.5, 9.0) %s; reference cells render %s",
                worst_oracle, ramp_ok ? "exact" : "WRONG", table_ok ? "verbatim" : "MISSING");
  return {oracle_ok && ramp_ok && table_ok, buf};
}

// ---------------------------------------------------------------------------
// 8. end-to-end determinism of the reproduce pipeline
// ---------------------------------------------------------------------------

Outcome criterion_8(const char* self) {
  // the CLI sits next to this binary's tree: build/tests/.. -> build/tools
  fs::path cli = fs::path(self).parent_path().parent_path() / "tools" / "comanip";
  if (!fs::exists(cli)) {
    std::error_code ec;
    const fs::path alt = fs::current_path() / ".." / "tools" / "comanip";
    if (fs::exists(alt, ec)) cli = alt;
  }
  if (!fs::exists(cli)) return {false, "cannot locate the comanip binary next to the test tree"};

  const fs::path base = fs::temp_directory_path() / "comanip_accept8";
  std::error_code ec;
  fs::remove_all(base, ec);
  const std::string overrides =
      " --data.payloads 0,5 --data.reps 2 --data.stride 6"
      " --intent.d 16 --intent.levels 2 --intent.epochs 6 --intent.k 10";
  auto run = [&](const std::string& out) {
    const std::string cmd = "\"" + cli.string() + "\" reproduce --seed 1 --out \"" + out + "\"" +
                            overrides + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const auto t0 = Clock::now();
  const int rc1 = run((base / "a").string());
  const int rc2 = run((base / "b").string());
  if (rc1 != 0 || rc2 != 0) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "reproduce exited with %d / %d", rc1, rc2);
    return {false, buf};
  }

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int files = 0, mismatches = 0;
  std::string first_bad;
  for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), base / "a");
    const fs::path other = base / "b" / rel;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      ++mismatches;
      if (first_bad.empty()) first_bad = rel.string();
    }
  }
  const bool ok = files > 0 && mismatches == 0;
  char buf[200];
  if (ok)
    std::snprintf(buf, sizeof buf,
                  "reproduce --seed 1 twice: %d artifacts byte-identical, %.1f min", files,
                  secs_since(t0) / 60.0);
  else
    std::snprintf(buf, sizeof buf, "reproduce differs on %d of %d artifacts (first: %s)",
                  mismatches, files, first_bad.c_str());
  return {ok, buf};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1..8>\n");
    return 2;
  }
  const int n = std::atoi(argv[1]);
  Outcome out;
  switch (n) {
    case 1: out = criterion_1(); break;
    case 2: out = criterion_2(); break;
    case 3: out = criterion_3(); break;
    case 4: out = criterion_4(); break;
    case 5: out = criterion_5(); break;
    case 6: out = criterion_6(); break;
    case 7: out = criterion_7(); break;
    case 8: out = criterion_8(argv[0]); break;
    default:
      std::fprintf(stderr, "usage: acceptance <1..8>\n");
      return 2;
  }
  std::printf("[%d] %s  %s\n", n, out.pass ? "PASS" : "FAIL", out.detail.c_str());
  return out.pass ? 0 : 1;
}
