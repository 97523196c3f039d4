#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "comanip/adam.hpp"
#include "comanip/dataset.hpp"
#include "comanip/error.hpp"
#include "comanip/graph.hpp"
#include "comanip/rng.hpp"
#include "comanip/schedule.hpp"
#include "comanip/wavelet.hpp"

namespace comanip::diff {

struct EpsNetConfig {
  int d = 128;        // model width
  int levels = 4;     // wavelet levels
  int blocks = 4;     // transformer blocks
  int horizon = 6;    // H command rows
  int samples = 33;   // S per horizon block
  int channels = 6;   // per-group wrench channels (two sensors x three axes)
  int cmd_dim = 3;    // (v_x, v_y, omega_z)
  bool shared_level_proj = true;  // one W_F/W_tau pair for all levels
  bool cross_block = false;       // queries attend across all horizon blocks
  std::string filter = "haar";

  int window() const { return horizon * samples; }
};

namespace detail {

inline std::string wf_name(const EpsNetConfig& cfg, int level) {
  return cfg.shared_level_proj ? "cond.wf" : "cond.wf" + std::to_string(level);
}
inline std::string wt_name(const EpsNetConfig& cfg, int level) {
  return cfg.shared_level_proj ? "cond.wt" : "cond.wt" + std::to_string(level);
}

// Parameter names in creation order, with shapes.
inline std::vector<std::pair<std::string, Shape>> param_plan(const EpsNetConfig& cfg) {
  const int d = cfg.d, c = cfg.channels;
  std::vector<std::pair<std::string, Shape>> plan;
  plan.push_back({"in.w", {cfg.cmd_dim, d}});
  plan.push_back({"in.b", {d}});
  const int nproj = cfg.shared_level_proj ? 1 : cfg.levels;
  for (int l = 0; l < nproj; ++l) {
    plan.push_back({cfg.shared_level_proj ? "cond.wf" : "cond.wf" + std::to_string(l), {c, d}});
    plan.push_back({cfg.shared_level_proj ? "cond.wt" : "cond.wt" + std::to_string(l), {c, d}});
  }
  plan.push_back({"cond.w1", {2 * d, d}});
  plan.push_back({"cond.b1", {d}});
  plan.push_back({"cond.w2", {d, d}});
  plan.push_back({"cond.b2", {d}});
  plan.push_back({"cond.mu.w", {d, d}});
  plan.push_back({"cond.mu.b", {d}});
  plan.push_back({"cond.ls.w", {d, d}});
  plan.push_back({"cond.ls.b", {d}});
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "blk" + std::to_string(b) + ".";
    plan.push_back({p + "q.w", {d, d}});
    plan.push_back({p + "q.b", {d}});
    plan.push_back({p + "o.w", {d, d}});
    plan.push_back({p + "o.b", {d}});
    plan.push_back({p + "f1.w", {d, d}});
    plan.push_back({p + "f1.b", {d}});
    plan.push_back({p + "f2.w", {d, d}});
    plan.push_back({p + "f2.b", {d}});
  }
  plan.push_back({"head.w", {d, cfg.cmd_dim}});
  plan.push_back({"head.b", {cfg.cmd_dim}});
  plan.push_back({"gate.w", {d, cfg.cmd_dim}});
  plan.push_back({"gate.b", {cfg.cmd_dim}});
  return plan;
}

}  // namespace detail

// Fresh parameters: weights ~ N(0, 1/fan_in), biases zero.
inline ad::ParamStore init_eps_params(const EpsNetConfig& cfg, Rng& rng) {
  ad::ParamStore ps;
  for (const auto& [name, shape] : detail::param_plan(cfg)) {
    if (shape.size() == 2) {
      const double std = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      Tensor t(shape);
      for (double& v : t.data) v = std * rng.normal();
      ps[name] = std::move(t);
    } else {
      ps[name] = Tensor(shape);
    }
  }
  return ps;
}

inline ad::ParamStore zero_eps_params(const EpsNetConfig& cfg) {
  ad::ParamStore ps;
  for (const auto& [name, shape] : detail::param_plan(cfg)) ps[name] = Tensor(shape);
  return ps;
}

// Wavelet conditioning for one window, split into force and torque groups and
// pre-sliced into per-(level, horizon-block) matrices for graph binding.
struct Conditioning {
  std::vector<Tensor> af;  // levels*H entries of (S, channels), index l*H + h
  std::vector<Tensor> at;
};

inline Conditioning make_conditioning(const EpsNetConfig& cfg, const Tensor& wrench_f,
                                      const Tensor& wrench_t) {
  const auto filter = wav::WaveletFilter::by_name(cfg.filter);
  const Tensor sf = wav::wavelet_stack(wrench_f, cfg.levels, cfg.horizon, cfg.samples, filter);
  const Tensor st = wav::wavelet_stack(wrench_t, cfg.levels, cfg.horizon, cfg.samples, filter);
  Conditioning c;
  for (int l = 0; l < cfg.levels; ++l)
    for (int h = 0; h < cfg.horizon; ++h) {
      c.af.push_back(wav::block_of(sf, h, l));
      c.at.push_back(wav::block_of(st, h, l));
    }
  return c;
}

// Symbolic builder for the conditional noise-prediction network. All tensors
// of one sample are namespaced by a prefix so batch graphs can hold many
// sample subgraphs against shared parameters.
class EpsNetBuilder {
 public:
  EpsNetBuilder(ad::Graph& g, const EpsNetConfig& cfg) : g_(g), cfg_(cfg) {}

  struct Cond {
    std::vector<int> mu;   // (S, d) per l*H+h
    std::vector<int> ls;   // log sigma^2
    std::vector<int> key;  // sampled (training) or mean (inference) keys
  };

  // Latent key statistics per Eq.-style reparameterization; when `sample` is
  // set, inputs "<px>u<l>_<h>" supply the standard-normal draws.
  Cond encode(const std::string& px, bool sample) {
    const int d = cfg_.d, S = cfg_.samples, c = cfg_.channels;
    Cond out;
    for (int l = 0; l < cfg_.levels; ++l) {
      const int wf = g_.param(detail::wf_name(cfg_, l), {c, d});
      const int wt = g_.param(detail::wt_name(cfg_, l), {c, d});
      for (int h = 0; h < cfg_.horizon; ++h) {
        const std::string suffix = std::to_string(l) + "_" + std::to_string(h);
        const int af = g_.input(px + "af" + suffix, {S, c});
        const int at = g_.input(px + "at" + suffix, {S, c});
        const int cat = g_.concat(g_.matmul(af, wf), g_.matmul(at, wt), 1);
        const int h1 = g_.gelu(g_.add(g_.matmul(cat, g_.param("cond.w1", {2 * d, d})),
                                      g_.param("cond.b1", {d})));
        // normalized so the mu / log-variance heads see O(1) rows whatever the
        // physical wrench scale is
        const int enc = g_.layer_norm(g_.add(g_.matmul(h1, g_.param("cond.w2", {d, d})),
                                             g_.param("cond.b2", {d})));
        const int mu = g_.add(g_.matmul(enc, g_.param("cond.mu.w", {d, d})),
                              g_.param("cond.mu.b", {d}));
        const int ls = g_.add(g_.matmul(enc, g_.param("cond.ls.w", {d, d})),
                              g_.param("cond.ls.b", {d}));
        int key = mu;
        if (sample) {
          const int u = g_.input(px + "u" + suffix, {S, d});
          key = g_.add(mu, g_.mul(g_.exp(g_.scale(ls, 0.5)), u));
        }
        out.mu.push_back(mu);
        out.ls.push_back(ls);
        out.key.push_back(key);
      }
    }
    return out;
  }

  // Mean per-dimension KL of the latent keys against the unit Gaussian:
  // 0.5 (mu^2 + e^ls - ls - 1), averaged over levels, blocks, rows, dims.
  int kl_node(const Cond& cond) {
    const double n_lh = static_cast<double>(cfg_.samples) * cfg_.d;
    int acc = -1;
    for (size_t i = 0; i < cond.mu.size(); ++i) {
      const int mu = cond.mu[i], ls = cond.ls[i];
      int term = g_.add(g_.add(g_.sum(g_.mul(mu, mu)), g_.sum(g_.exp(ls))),
                        g_.scale(g_.sum(ls), -1.0));
      term = g_.add(term, g_.constant(-n_lh));
      acc = acc < 0 ? term : g_.add(acc, term);
    }
    const double total = n_lh * static_cast<double>(cond.mu.size());
    return g_.scale(acc, 0.5 / total);
  }

  // eps prediction (H, cmd_dim) for inputs "<px>y" (noisy command window),
  // "<px>emb" (time-step embedding row), and the step scales "<px>gs" /
  // "<px>hs" (see eps_scales).
  int predict(const std::string& px, const Cond& cond) {
    const int d = cfg_.d, H = cfg_.horizon;
    const int y = g_.input(px + "y", {H, cfg_.cmd_dim});
    const int emb = g_.input(px + "emb", {d});
    const int gs = g_.input(px + "gs", {H, cfg_.cmd_dim});
    const int hs = g_.input(px + "hs", {H, cfg_.cmd_dim});
    int x = g_.add(g_.add(g_.matmul(y, g_.param("in.w", {cfg_.cmd_dim, d})),
                          g_.param("in.b", {d})),
                   emb);

    // keys/values for this sample; cross-block mode concatenates the horizon
    // blocks of each level into one attention pool
    std::vector<int> keys(static_cast<size_t>(cfg_.levels * H), -1);
    if (cfg_.cross_block) {
      for (int l = 0; l < cfg_.levels; ++l) {
        int cat = cond.key[static_cast<size_t>(l * H)];
        for (int h = 1; h < H; ++h) cat = g_.concat(cat, cond.key[static_cast<size_t>(l * H + h)], 0);
        for (int h = 0; h < H; ++h) keys[static_cast<size_t>(l * H + h)] = cat;
      }
    } else {
      keys = cond.key;
    }

    // floor keeps log() clear of exp-underflow zeros in extreme logit rows
    const int s_eff = cfg_.cross_block ? H * cfg_.samples : cfg_.samples;
    const int tiny = g_.constant(Tensor::full({1, s_eff}, 1e-300));
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string bp = "blk" + std::to_string(b) + ".";
      const int xn = g_.layer_norm(x);
      const int q = g_.add(g_.matmul(xn, g_.param(bp + "q.w", {d, d})),
                           g_.param(bp + "q.b", {d}));
      int rows = -1;
      for (int i = 0; i < H; ++i) {
        const int qi = g_.slice(q, 0, i, 1);
        std::vector<int> ctx(static_cast<size_t>(cfg_.levels));
        int ents = -1;
        for (int l = 0; l < cfg_.levels; ++l) {
          const int kv = keys[static_cast<size_t>(l * H + i)];
          const int logits = g_.scale(g_.matmul(qi, kv, false, true), 1.0 / std::sqrt(d));
          const int p = g_.softmax_rows(logits);
          const int plog = g_.mul(p, g_.log(g_.maximum(p, tiny)));
          const int ent = g_.scale(g_.sum(plog), -1.0);
          ctx[static_cast<size_t>(l)] = g_.matmul(p, kv);
          ents = ents < 0 ? ent : g_.concat(ents, ent, 0);
        }
        int mixed;
        if (cfg_.levels == 1) {
          mixed = ctx[0];
        } else {
          const int w = g_.softmax_rows(g_.reshape(g_.scale(ents, -1.0), {1, cfg_.levels}));
          mixed = g_.mul(ctx[0], g_.slice(w, 1, 0, 1));
          for (int l = 1; l < cfg_.levels; ++l)
            mixed = g_.add(mixed, g_.mul(ctx[static_cast<size_t>(l)], g_.slice(w, 1, l, 1)));
        }
        rows = rows < 0 ? mixed : g_.concat(rows, mixed, 0);
      }
      const int attn = g_.add(g_.matmul(rows, g_.param(bp + "o.w", {d, d})),
                              g_.param(bp + "o.b", {d}));
      x = g_.add(x, attn);
      const int f1 = g_.gelu(g_.add(g_.matmul(g_.layer_norm(x), g_.param(bp + "f1.w", {d, d})),
                                    g_.param(bp + "f1.b", {d})));
      const int ff = g_.add(g_.matmul(f1, g_.param(bp + "f2.w", {d, d})),
                            g_.param(bp + "f2.b", {d}));
      x = g_.add(x, ff);
    }
    // Output parameterization: eps_hat = gate(emb) * y / sqrt(1 - abar_t)
    //                                  + sqrt(abar_t / (1 - abar_t)) * head.
    // The sampler's clean estimate is then y * (1 - gate) / sqrt(abar) - head:
    // the trunk path enters it unamplified at every step (at the noisiest step
    // a raw head would be divided by sqrt(abar), thousands here), and the
    // gate's optimum is the constant 1, which a linear readout of the
    // embedding holds precisely. With all parameters zero the output is zero.
    const int gate = g_.add(g_.matmul(g_.reshape(emb, {1, d}), g_.param("gate.w", {d, cfg_.cmd_dim})),
                            g_.param("gate.b", {cfg_.cmd_dim}));
    const int skip = g_.mul(g_.matmul(g_.constant(Tensor::full({H, 1}, 1.0)), gate),
                            g_.mul(y, gs));
    const int head = g_.add(g_.matmul(g_.layer_norm(x), g_.param("head.w", {d, cfg_.cmd_dim})),
                            g_.param("head.b", {cfg_.cmd_dim}));
    return g_.add(g_.mul(head, hs), skip);
  }

  // Mean squared error against the "<px>eps" input.
  int mse_node(const std::string& px, int eps_hat) {
    const int target = g_.input(px + "eps", {cfg_.horizon, cfg_.cmd_dim});
    const int diff = g_.sub(eps_hat, target);
    return g_.mean(g_.mul(diff, diff));
  }

  void bind_conditioning(ad::Binding& binds, const std::string& px, const Conditioning& c) const {
    for (int l = 0; l < cfg_.levels; ++l)
      for (int h = 0; h < cfg_.horizon; ++h) {
        const std::string suffix = std::to_string(l) + "_" + std::to_string(h);
        binds.set(px + "af" + suffix, c.af[static_cast<size_t>(l * cfg_.horizon + h)]);
        binds.set(px + "at" + suffix, c.at[static_cast<size_t>(l * cfg_.horizon + h)]);
      }
  }

 private:
  ad::Graph& g_;
  EpsNetConfig cfg_;
};

// ===== standalone attention ops =====

struct AttentionResult {
  Tensor context;  // (n, d)
  Tensor rows;     // (n, S) mixed attention, row-stochastic
  Tensor weights;  // (n, L) entropy-derived level weights
};

// Shannon entropy (nats) of each attention row; 0 log 0 reads as 0.
inline double row_entropy(const double* p, int n) {
  double h = 0.0;
  for (int j = 0; j < n; ++j) {
    if (p[j] < 0.0) throw ValueError("entropy_weights: negative attention entry");
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  }
  return h;
}

// Level-mixing weights w_il proportional to exp(-H(row)), normalized across
// levels for each query row.
inline Tensor entropy_weights(const std::vector<Tensor>& rows_per_level) {
  if (rows_per_level.empty()) throw ValueError("entropy_weights: no levels");
  const int L = static_cast<int>(rows_per_level.size());
  const int n = rows_per_level[0].rows();
  for (const auto& r : rows_per_level)
    if (r.rows() != n) throw ShapeError("entropy_weights: row counts disagree across levels");
  Tensor w({n, L});
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    std::vector<double> negh(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
      const Tensor& r = rows_per_level[static_cast<size_t>(l)];
      negh[static_cast<size_t>(l)] =
          -row_entropy(r.data.data() + static_cast<size_t>(i) * r.cols(), r.cols());
      mx = std::max(mx, negh[static_cast<size_t>(l)]);
    }
    double z = 0.0;
    for (int l = 0; l < L; ++l) {
      w(i, l) = std::exp(negh[static_cast<size_t>(l)] - mx);
      z += w(i, l);
    }
    for (int l = 0; l < L; ++l) w(i, l) /= z;
  }
  return w;
}

// Scaled dot-product attention per level, rows mixed by entropy weights.
// Every query row attends to the same per-level key/value sets.
inline AttentionResult multiscale_attention(const Tensor& queries,
                                            const std::vector<Tensor>& keys,
                                            const std::vector<Tensor>& values) {
  if (keys.empty() || keys.size() != values.size())
    throw ValueError("multiscale_attention: keys/values level counts disagree");
  const int n = queries.rows(), d = queries.cols();
  const int L = static_cast<int>(keys.size());
  const int S = keys[0].rows();
  std::vector<Tensor> rows_per_level;
  std::vector<Tensor> ctx_per_level;
  for (int l = 0; l < L; ++l) {
    const Tensor& K = keys[static_cast<size_t>(l)];
    const Tensor& V = values[static_cast<size_t>(l)];
    if (K.cols() != d || K.rows() != S || V.rows() != S)
      throw ShapeError("multiscale_attention: key/value shapes disagree");
    Tensor p({n, S});
    for (int i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int j = 0; j < S; ++j) {
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += queries(i, c) * K(j, c);
        p(i, j) = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, p(i, j));
      }
      double z = 0.0;
      for (int j = 0; j < S; ++j) {
        p(i, j) = std::exp(p(i, j) - mx);
        z += p(i, j);
      }
      for (int j = 0; j < S; ++j) p(i, j) /= z;
    }
    Tensor ctx({n, V.cols()});
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < V.cols(); ++c) {
        double acc = 0.0;
        for (int j = 0; j < S; ++j) acc += p(i, j) * V(j, c);
        ctx(i, c) = acc;
      }
    rows_per_level.push_back(std::move(p));
    ctx_per_level.push_back(std::move(ctx));
  }
  AttentionResult out;
  out.weights = entropy_weights(rows_per_level);
  out.rows = Tensor({n, S});
  out.context = Tensor({n, values[0].cols()});
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < L; ++l) {
      const double w = out.weights(i, l);
      for (int j = 0; j < S; ++j) out.rows(i, j) += w * rows_per_level[static_cast<size_t>(l)](i, j);
      for (int c = 0; c < out.context.cols(); ++c)
        out.context(i, c) += w * ctx_per_level[static_cast<size_t>(l)](i, c);
    }
  return out;
}

// ===== model bundle =====

struct IntentModel {
  EpsNetConfig cfg;
  NoiseSchedule schedule;
  ad::ParamStore params;
  Tensor label_mean;  // identity transform unless trained with normalization
  Tensor label_std;

  static IntentModel fresh(const EpsNetConfig& cfg, int schedule_steps, Rng& rng) {
    IntentModel m;
    m.cfg = cfg;
    m.schedule = NoiseSchedule::cosine(schedule_steps);
    m.params = init_eps_params(cfg, rng);
    m.label_mean = Tensor({cfg.cmd_dim});
    m.label_std = Tensor::full({cfg.cmd_dim}, 1.0);
    return m;
  }

  static IntentModel zeros(const EpsNetConfig& cfg, int schedule_steps) {
    IntentModel m;
    m.cfg = cfg;
    m.schedule = NoiseSchedule::cosine(schedule_steps);
    m.params = zero_eps_params(cfg);
    m.label_mean = Tensor({cfg.cmd_dim});
    m.label_std = Tensor::full({cfg.cmd_dim}, 1.0);
    return m;
  }
};

// Step scales fed to the eps net: gs = 1/sqrt(1 - abar_t) multiplies the gated
// noisy-input skip, hs = sqrt(abar_t) * gs multiplies the trunk head.
struct EpsScales {
  Tensor gs;
  Tensor hs;
};

inline EpsScales eps_scales(const NoiseSchedule& sch, int t, int H, int C) {
  if (t < 1 || t > sch.steps) throw ValueError("eps_scales: t outside schedule");
  const double ab = sch.alpha_bar[static_cast<size_t>(t)];
  const double gs = 1.0 / std::sqrt(1.0 - ab);
  return {Tensor::full({H, C}, gs), Tensor::full({H, C}, std::sqrt(ab) * gs)};
}

// Single-sample noise prediction with mean (inference) keys.
inline Tensor predict_noise(const IntentModel& m, const Tensor& y_t, int t,
                            const Conditioning& cond) {
  ad::Graph g;
  EpsNetBuilder nb(g, m.cfg);
  nb.predict("", nb.encode("", false));
  ad::Binding binds;
  for (const auto& [name, tensor] : m.params) binds.set(name, tensor);
  nb.bind_conditioning(binds, "", cond);
  const Tensor emb = ad::sinusoidal_embed(t, m.cfg.d);
  const EpsScales sc = eps_scales(m.schedule, t, m.cfg.horizon, m.cfg.cmd_dim);
  binds.set("y", y_t);
  binds.set("emb", emb);
  binds.set("gs", sc.gs);
  binds.set("hs", sc.hs);
  return ad::eval_graph(g, binds);
}

// Deterministic reverse pass: K evenly strided steps, carrying the clean
// estimate so repeated scale/unscale round-off cannot accumulate. eps_fn is
// called with (y_t, t).
inline Tensor ddim_sample(const std::function<Tensor(const Tensor&, int)>& eps_fn,
                          const NoiseSchedule& sch, int k, const Tensor& y_init) {
  const std::vector<int> ts = ddim_indices(sch.steps, k);
  Tensor y0(y_init.shape);
  Tensor eps_prev(y_init.shape);
  for (size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const double ab = sch.alpha_bar[static_cast<size_t>(t)];
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    Tensor y_t(y_init.shape);
    if (i == 0) {
      y_t = y_init;
    } else {
      for (size_t j = 0; j < y_t.numel(); ++j) y_t[j] = sa * y0[j] + sb * eps_prev[j];
    }
    const Tensor eps = eps_fn(y_t, t);
    if (eps.shape != y_init.shape) throw ShapeError("ddim_sample: eps shape mismatch");
    if (i == 0) {
      for (size_t j = 0; j < y0.numel(); ++j) y0[j] = (y_t[j] - sb * eps[j]) / sa;
    } else {
      const double coef = sb / sa;
      for (size_t j = 0; j < y0.numel(); ++j) y0[j] += coef * (eps_prev[j] - eps[j]);
    }
    eps_prev = eps;
  }
  // final hop to index 0 has alpha_bar = 1: y_0 is the clean estimate
  return y0;
}

struct InferResult {
  Tensor command;  // (cmd_dim)
  Tensor window;   // (H, cmd_dim) full denoised command window
};

// Full pipeline for one wrench window: wavelet conditioning, seeded draw,
// DDIM with mean keys, undo label normalization, return the first command row.
inline InferResult infer_command(const IntentModel& m, const Tensor& wrench_f,
                                 const Tensor& wrench_t, int k, uint64_t seed) {
  const Conditioning cond = make_conditioning(m.cfg, wrench_f, wrench_t);

  ad::Graph g;
  EpsNetBuilder nb(g, m.cfg);
  nb.predict("", nb.encode("", false));
  ad::Binding binds;
  for (const auto& [name, tensor] : m.params) binds.set(name, tensor);
  nb.bind_conditioning(binds, "", cond);
  ad::Evaluation ev(g);

  Rng rng = Rng::substream(seed, "ddim-init");
  Tensor y_init = Tensor::randn({m.cfg.horizon, m.cfg.cmd_dim}, rng);

  Tensor y_holder, emb_holder;
  EpsScales sc_holder;
  auto eps_fn = [&](const Tensor& y_t, int t) {
    y_holder = y_t;
    emb_holder = ad::sinusoidal_embed(t, m.cfg.d);
    sc_holder = eps_scales(m.schedule, t, m.cfg.horizon, m.cfg.cmd_dim);
    binds.set("y", y_holder);
    binds.set("emb", emb_holder);
    binds.set("gs", sc_holder.gs);
    binds.set("hs", sc_holder.hs);
    return ev.forward(binds);
  };
  Tensor y0 = ddim_sample(eps_fn, m.schedule, k, y_init);

  InferResult out;
  out.window = Tensor(y0.shape);
  for (int r = 0; r < m.cfg.horizon; ++r)
    for (int c = 0; c < m.cfg.cmd_dim; ++c)
      out.window(r, c) = y0(r, c) * m.label_std[static_cast<size_t>(c)] +
                         m.label_mean[static_cast<size_t>(c)];
  out.command = Tensor({m.cfg.cmd_dim});
  for (int c = 0; c < m.cfg.cmd_dim; ++c) out.command[static_cast<size_t>(c)] = out.window(0, c);
  return out;
}

// ===== losses =====

struct DiffusionLossValues {
  double diff = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

inline DiffusionLossValues diffusion_loss(const std::vector<Tensor>& eps_hat,
                                          const std::vector<Tensor>& eps, double kl,
                                          double lambda_kl) {
  if (eps_hat.empty() || eps_hat.size() != eps.size())
    throw ValueError("diffusion_loss: empty or mismatched batch");
  DiffusionLossValues v;
  for (size_t i = 0; i < eps_hat.size(); ++i) {
    if (eps_hat[i].shape != eps[i].shape) throw ShapeError("diffusion_loss: shape mismatch");
    double acc = 0.0;
    for (size_t j = 0; j < eps_hat[i].numel(); ++j) {
      const double d = eps_hat[i][j] - eps[i][j];
      acc += d * d;
    }
    v.diff += acc / static_cast<double>(eps_hat[i].numel());
  }
  v.diff /= static_cast<double>(eps_hat.size());
  v.kl = kl;
  v.total = v.diff + lambda_kl * v.kl;
  return v;
}

// ===== training =====

struct IntentTrainConfig {
  int epochs = 30;
  int batch = 32;
  double lr = 1e-3;
  double lambda_kl = 0.01;
  int schedule_steps = 100;
  bool normalize_labels = true;
};

struct IntentCurvePoint {
  int step;
  double l_diff;
  double l_kl;
  double l_total;
};

struct IntentTrainResult {
  IntentModel model;
  std::vector<IntentCurvePoint> curve;
};

inline IntentTrainResult train_intent(const std::vector<TrainingSample>& samples,
                                      const EpsNetConfig& cfg, const IntentTrainConfig& tc,
                                      uint64_t seed) {
  if (samples.empty()) throw ValueError("train_intent: empty dataset");
  const int n = static_cast<int>(samples.size());
  const int B = std::min(tc.batch, n);
  const int H = cfg.horizon, C = cfg.cmd_dim, d = cfg.d, S = cfg.samples;

  Rng init_rng = Rng::substream(seed, "intent.init");
  IntentTrainResult res;
  res.model = IntentModel::fresh(cfg, tc.schedule_steps, init_rng);
  IntentModel& m = res.model;

  // label normalizer (per channel std; mean kept too)
  if (tc.normalize_labels) {
    std::vector<double> mean(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
    for (const auto& s : samples)
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < C; ++c) mean[static_cast<size_t>(c)] += s.label(r, c);
    const double cnt = static_cast<double>(n) * H;
    for (auto& v : mean) v /= cnt;
    for (const auto& s : samples)
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < C; ++c) {
          const double dlt = s.label(r, c) - mean[static_cast<size_t>(c)];
          var[static_cast<size_t>(c)] += dlt * dlt;
        }
    for (int c = 0; c < C; ++c) {
      m.label_mean[static_cast<size_t>(c)] = mean[static_cast<size_t>(c)];
      m.label_std[static_cast<size_t>(c)] =
          std::max(std::sqrt(var[static_cast<size_t>(c)] / cnt), 1e-8);
    }
  }

  // precompute wavelet conditioning and normalized labels
  std::vector<Conditioning> cond(samples.size());
  std::vector<Tensor> labels(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    cond[i] = make_conditioning(cfg, samples[i].wrench_f, samples[i].wrench_t);
    labels[i] = Tensor({H, C});
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < C; ++c)
        labels[i](r, c) = (samples[i].label(r, c) - m.label_mean[static_cast<size_t>(c)]) /
                          m.label_std[static_cast<size_t>(c)];
  }

  // one batch graph, rebound every step
  ad::Graph g;
  EpsNetBuilder nb(g, cfg);
  int ldiff = -1, lkl = -1;
  for (int b = 0; b < B; ++b) {
    const std::string px = "s" + std::to_string(b) + ".";
    auto c = nb.encode(px, true);
    const int mse = nb.mse_node(px, nb.predict(px, c));
    const int kl = nb.kl_node(c);
    ldiff = b == 0 ? mse : g.add(ldiff, mse);
    lkl = b == 0 ? kl : g.add(lkl, kl);
  }
  ldiff = g.scale(ldiff, 1.0 / B);
  lkl = g.scale(lkl, 1.0 / B);
  const int ltotal = g.add(ldiff, g.scale(lkl, tc.lambda_kl));

  ad::Evaluation ev(g);
  ad::AdamState adam;
  ad::AdamConfig acfg;
  acfg.lr = tc.lr;

  Rng draw = Rng::substream(seed, "intent.draw");
  std::vector<int> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  // per-batch storage kept alive across forward/backward
  std::vector<Tensor> ys(static_cast<size_t>(B)), embs(static_cast<size_t>(B)),
      epss(static_cast<size_t>(B));
  std::vector<EpsScales> scs(static_cast<size_t>(B));
  std::vector<std::vector<Tensor>> us(static_cast<size_t>(B));

  int step = 0;
  const int batches = std::max(n / B, 1);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffler = Rng::substream(seed, "intent.shuffle", static_cast<uint64_t>(epoch));
    shuffler.shuffle(order);
    for (int bi = 0; bi < batches; ++bi) {
      ad::Binding binds;
      for (const auto& [name, tensor] : m.params) binds.set(name, tensor);
      for (int b = 0; b < B; ++b) {
        const int si = order[static_cast<size_t>((bi * B + b) % n)];
        const std::string px = "s" + std::to_string(b) + ".";
        const int t = static_cast<int>(draw.uniform_int(1, tc.schedule_steps));
        epss[static_cast<size_t>(b)] = Tensor::randn({H, C}, draw);
        ys[static_cast<size_t>(b)] =
            forward_diffuse(labels[static_cast<size_t>(si)], t, m.schedule,
                            epss[static_cast<size_t>(b)]);
        embs[static_cast<size_t>(b)] = ad::sinusoidal_embed(t, d);
        scs[static_cast<size_t>(b)] = eps_scales(m.schedule, t, H, C);
        auto& ub = us[static_cast<size_t>(b)];
        ub.clear();
        for (int l = 0; l < cfg.levels; ++l)
          for (int h = 0; h < cfg.horizon; ++h) ub.push_back(Tensor::randn({S, d}, draw));
        binds.set(px + "y", ys[static_cast<size_t>(b)]);
        binds.set(px + "emb", embs[static_cast<size_t>(b)]);
        binds.set(px + "eps", epss[static_cast<size_t>(b)]);
        binds.set(px + "gs", scs[static_cast<size_t>(b)].gs);
        binds.set(px + "hs", scs[static_cast<size_t>(b)].hs);
        nb.bind_conditioning(binds, px, cond[static_cast<size_t>(si)]);
        for (int l = 0; l < cfg.levels; ++l)
          for (int h = 0; h < cfg.horizon; ++h)
            binds.set(px + "u" + std::to_string(l) + "_" + std::to_string(h),
                      ub[static_cast<size_t>(l * cfg.horizon + h)]);
      }
      ev.forward(binds);
      const double vdiff = ev.value(ldiff)[0];
      const double vkl = ev.value(lkl)[0];
      const double vtotal = ev.value(ltotal)[0];
      if (!std::isfinite(vtotal))
        throw NumericError("train_intent: loss diverged at step " + std::to_string(step));
      auto grads = ev.backward(ltotal);
      adam_step(m.params, grads, adam, acfg);
      res.curve.push_back({step, vdiff, vkl, vtotal});
      ++step;
    }
  }
  return res;
}

// ===== evaluation =====

struct IntentEval {
  double mse = 0.0;       // denoised window vs label
  double zero_mse = 0.0;  // predict-zero baseline
  double sign_agreement = 1.0;
  int translation_samples = 0;
};

// Primitives 0..3 are the translations (forward, backward, left, right).
inline IntentEval evaluate_intent(const IntentModel& m, const std::vector<TrainingSample>& samples,
                                  int k, uint64_t seed) {
  if (samples.empty()) throw ValueError("evaluate_intent: empty set");
  IntentEval e;
  int agree = 0;
  double se = 0.0, se0 = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    InferResult r = infer_command(m, s.wrench_f, s.wrench_t, k, Rng::derive(seed, "eval", i));
    for (int row = 0; row < m.cfg.horizon; ++row)
      for (int c = 0; c < m.cfg.cmd_dim; ++c) {
        const double dlt = r.window(row, c) - s.label(row, c);
        se += dlt * dlt;
        se0 += s.label(row, c) * s.label(row, c);
        ++count;
      }
    if (s.primitive >= 0 && s.primitive < 4) {
      std::array<double, 3> lm{}, pm{};
      for (int row = 0; row < m.cfg.horizon; ++row)
        for (int c = 0; c < 3; ++c) {
          lm[static_cast<size_t>(c)] += s.label(row, c);
          pm[static_cast<size_t>(c)] += r.window(row, c);
        }
      int axis = 0;
      for (int c = 1; c < 3; ++c)
        if (std::abs(lm[static_cast<size_t>(c)]) > std::abs(lm[static_cast<size_t>(axis)])) axis = c;
      ++e.translation_samples;
      if (lm[static_cast<size_t>(axis)] * pm[static_cast<size_t>(axis)] > 0.0) ++agree;
    }
  }
  e.mse = se / static_cast<double>(count);
  e.zero_mse = se0 / static_cast<double>(count);
  e.sign_agreement =
      e.translation_samples ? static_cast<double>(agree) / e.translation_samples : 1.0;
  return e;
}

}  // namespace comanip::diff
