// comanip: seeded experiment driver for the dyadic co-manipulation stack.
// Subcommands cover data generation, intent-model training and inference,
// closed-loop rollouts, RL training/evaluation, metrics, and a one-shot
// reproduce pipeline. Every numeric artifact is a pure function of
// (config, seed).

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "comanip/checkpoint.hpp"
#include "comanip/config.hpp"
#include "comanip/dataset.hpp"
#include "comanip/diffusion.hpp"
#include "comanip/dyad.hpp"
#include "comanip/dyad_io.hpp"
#include "comanip/metrics.hpp"
#include "comanip/ppo.hpp"

namespace fs = std::filesystem;
using namespace comanip;

namespace {

// Tracks files written by one command; on failure they are removed so a
// crashed run never leaves partial artifacts behind.
class ArtifactSink {
 public:
  explicit ArtifactSink(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }

  std::string path(const std::string& name) {
    const std::string p = (fs::path(dir_) / name).string();
    fs::create_directories(fs::path(p).parent_path());
    files_.push_back(name);
    return p;
  }

  void write_manifest(uint64_t config_hash) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["files"] = files_;
    std::ofstream os(path("manifest.json"));
    os << j.dump(1) << '\n';
  }

  void rollback() {
    for (const auto& name : files_) {
      std::error_code ec;
      fs::remove(fs::path(dir_) / name, ec);
    }
  }

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

// Resolved config is echoed next to the artifacts for provenance.
void echo_config(ArtifactSink& sink, const config::ExperimentConfig& cfg) {
  std::ofstream os(sink.path("config.json"));
  os << config::config_to_json(cfg).dump(1) << '\n';
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> extras;
  bool seed_set = false;
  uint64_t seed = 0;
  bool out_set = false;
  std::string out;
};

// Collects `--dotted.key value` pairs left over after CLI11 parsing.
std::vector<std::pair<std::string, std::string>> overrides_from(const CommonArgs& a) {
  std::vector<std::pair<std::string, std::string>> ov;
  const auto& toks = a.extras;
  for (size_t i = 0; i < toks.size(); ++i) {
    std::string t = toks[i];
    if (t.rfind("--", 0) != 0)
      throw ConfigError("unexpected argument '" + t + "' (overrides look like --key value)");
    t = t.substr(2);
    std::string value;
    if (const size_t eq = t.find('='); eq != std::string::npos) {
      value = t.substr(eq + 1);
      t = t.substr(0, eq);
    } else {
      if (i + 1 >= toks.size()) throw ConfigError("override '--" + t + "' is missing a value");
      value = toks[++i];
    }
    ov.emplace_back(t, value);
  }
  if (a.seed_set) ov.emplace_back("seed", std::to_string(a.seed));
  if (a.out_set) ov.emplace_back("out", a.out);
  return ov;
}

config::ExperimentConfig resolve_config(const CommonArgs& a) {
  return config::load_config(a.config_path, overrides_from(a));
}

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config_path, "config file (TOML-style or JSON)");
  sub->add_option("--seed", a.seed, "root seed")->each([&a](const std::string&) {
    a.seed_set = true;
  });
  sub->add_option("--out", a.out, "output directory")->each([&a](const std::string&) {
    a.out_set = true;
  });
  sub->allow_extras();
}

// --- gen-data ---------------------------------------------------------------

// Simulates payloads x 8 primitives x reps trials, saving each log and the
// windowed dataset. Trial seeding matches generate_dataset's derivation.
int cmd_gen_data(const config::ExperimentConfig& cfg) {
  ArtifactSink sink(cfg.out);
  echo_config(sink, cfg);
  std::vector<TrainingSample> samples;
  uint64_t trial = 0;
  char name[64];
  for (double payload : cfg.payloads) {
    dyad::DyadConfig dc = cfg.dyad;
    dc.payload = payload;
    for (int p = 0; p < dyad::kNumPrimitives; ++p) {
      for (int rep = 0; rep < cfg.reps; ++rep, ++trial) {
        const uint64_t ts = Rng::derive(cfg.seed, "dyad.trial", trial);
        dyad::DyadLog log = dyad::simulate_dyad(static_cast<dyad::Primitive>(p), dc, ts);
        std::snprintf(name, sizeof name, "logs/trial_%03llu_%s.jsonl",
                      static_cast<unsigned long long>(trial),
                      dyad::primitive_name(static_cast<dyad::Primitive>(p)));
        dyad::save_log(sink.path(name), log);
        auto w = dyad::window_dataset(log, cfg.intent.horizon, cfg.stride);
        samples.insert(samples.end(), w.begin(), w.end());
      }
    }
  }
  const uint64_t hash = dyad::dataset_config_hash(cfg.dyad, cfg.payloads, cfg.reps,
                                                  cfg.intent.horizon, cfg.stride, cfg.seed);
  save_dataset(sink.path("dataset.bin"), samples, hash);
  sink.write_manifest(config::config_hash(cfg));
  std::cout << "gen-data: " << trial << " trials, " << samples.size() << " windows -> "
            << sink.dir() << "\n";
  return 0;
}

// --- train-intent -----------------------------------------------------------

int cmd_train_intent(const config::ExperimentConfig& cfg, const std::string& data_path) {
  const std::string data = data_path.empty()
                               ? (fs::path(cfg.out) / "dataset.bin").string()
                               : data_path;
  std::vector<TrainingSample> samples = load_dataset(data);
  ArtifactSink sink(cfg.out);
  echo_config(sink, cfg);
  diff::IntentTrainResult res = diff::train_intent(samples, cfg.intent, cfg.intent_train, cfg.seed);
  save_intent_checkpoint(sink.path("intent.json"), res.model, config::config_hash(cfg));
  {
    std::ofstream os(sink.path("intent_curve.csv"));
    os << "step,l_diff,l_kl,l_total\n";
    for (const auto& p : res.curve)
      os << p.step << ',' << p.l_diff << ',' << p.l_kl << ',' << p.l_total << '\n';
  }
  sink.write_manifest(config::config_hash(cfg));
  std::cout << "train-intent: " << samples.size() << " windows, " << res.curve.size()
            << " steps, final loss "
            << (res.curve.empty() ? 0.0 : res.curve.back().l_total) << "\n";
  return 0;
}

// --- infer ------------------------------------------------------------------

int cmd_infer(const config::ExperimentConfig& cfg, const std::string& ckpt_path,
              const std::string& log_path, int frame) {
  diff::IntentModel model = load_intent_checkpoint(ckpt_path);
  dyad::DyadLog log = dyad::load_log(log_path);
  auto windows = dyad::window_dataset(log, model.cfg.horizon, 1);
  if (windows.empty()) throw ValueError("infer: log has no complete window");
  size_t idx = windows.size() - 1;
  if (frame >= 0) {
    if (frame >= static_cast<int>(windows.size()))
      throw ValueError("infer: frame index beyond available windows");
    idx = static_cast<size_t>(frame);
  }
  const TrainingSample& s = windows[idx];
  diff::InferResult r = diff::infer_command(model, s.wrench_f, s.wrench_t, cfg.ddim_k, cfg.seed);
  nlohmann::json j;
  j["command"] = r.command.data;
  j["window"] = nlohmann::json::array();
  for (int h = 0; h < r.window.rows(); ++h)
    j["window"].push_back({r.window(h, 0), r.window(h, 1), r.window(h, 2)});
  std::cout << j.dump(1) << '\n';
  return 0;
}

// --- rollout ----------------------------------------------------------------

dyad::SimOptions learned_follower(const diff::IntentModel& model, int k, uint64_t seed) {
  dyad::SimOptions opts;
  opts.follower = dyad::FollowerKind::kPolicy;
  opts.policy_window = model.cfg.window();
  auto counter = std::make_shared<uint64_t>(0);
  opts.policy = [model, k, seed, counter](const Tensor& wf, const Tensor& wt) {
    const uint64_t n = (*counter)++;
    diff::InferResult r =
        diff::infer_command(model, wf, wt, k, Rng::derive(seed, "rollout.infer", n));
    // Commanded twists are clamped to a physical envelope, like any real
    // velocity controller; keeps a half-trained model from destabilizing the sim.
    auto clamp = [](double v) { return std::clamp(v, -1.5, 1.5); };
    return std::array<double, 3>{clamp(r.command[0]), clamp(r.command[1]),
                                 clamp(r.command[2])};
  };
  return opts;
}

int cmd_rollout(const config::ExperimentConfig& cfg, const std::string& ckpt_path,
                const std::string& primitive) {
  diff::IntentModel model = load_intent_checkpoint(
      ckpt_path.empty() ? (fs::path(cfg.out) / "intent.json").string() : ckpt_path);
  const dyad::Primitive p = dyad::primitive_by_name(primitive);
  ArtifactSink sink(cfg.out);
  dyad::DyadLog log = dyad::simulate_dyad(p, cfg.dyad, cfg.seed,
                                          learned_follower(model, cfg.ddim_k, cfg.seed));
  const std::string name = std::string("rollout_") + primitive + ".jsonl";
  dyad::save_log(sink.path(name), log);
  sink.write_manifest(config::config_hash(cfg));
  std::cout << "rollout: " << primitive << " -> " << name << " (" << log.frames()
            << " frames)\n";
  return 0;
}

// --- train-ppo / eval-ppo ---------------------------------------------------

int cmd_train_ppo(const config::ExperimentConfig& cfg, const std::string& mode) {
  ArtifactSink sink(cfg.out);
  echo_config(sink, cfg);
  auto run = [&](bool adaptive) {
    rl::RandomizationConfig rand = cfg.rand;
    rand.randomize_payload = adaptive;
    const char* tag = adaptive ? "adaptive" : "baseline";
    std::ofstream curve(sink.path(std::string("ppo_curve_") + tag + ".csv"));
    curve << "update,mean_reward,tracking_error,clip_fraction,approx_kl\n";
    rl::PpoTrainResult res =
        rl::train_ppo(cfg.ppo, cfg.policy, cfg.env, rand, cfg.seed,
                      [&curve](const rl::PpoCurvePoint& p) {
                        curve << p.update << ',' << p.mean_reward << ',' << p.tracking_error << ','
                              << p.clip_fraction << ',' << p.approx_kl << '\n';
                        curve.flush();
                      });
    nlohmann::json extra;
    extra["mode"] = tag;
    extra["hidden"] = cfg.policy.hidden;
    extra["updates"] = cfg.ppo.updates;
    save_param_checkpoint(sink.path(std::string("policy_") + tag + ".json"), "policy", res.params,
                          extra);
    std::cout << "train-ppo " << tag << ": " << res.curve.size() << " updates, final reward "
              << (res.curve.empty() ? 0.0 : res.curve.back().mean_reward) << "\n";
  };
  if (mode == "adaptive" || mode == "both") run(true);
  if (mode == "baseline" || mode == "both") run(false);
  sink.write_manifest(config::config_hash(cfg));
  return 0;
}

int cmd_eval_ppo(const config::ExperimentConfig& cfg, const std::string& adaptive_path,
                 const std::string& baseline_path) {
  const std::string ap = adaptive_path.empty()
                             ? (fs::path(cfg.out) / "policy_adaptive.json").string()
                             : adaptive_path;
  const std::string bp = baseline_path.empty()
                             ? (fs::path(cfg.out) / "policy_baseline.json").string()
                             : baseline_path;
  ad::ParamStore pa = load_param_checkpoint(ap, "policy");
  ad::ParamStore pb = load_param_checkpoint(bp, "policy");
  rl::RandomizationConfig rand = cfg.rand;
  rand.payload_lo = rand.payload_hi = cfg.eval_payload; // held-out payload
  const rl::PolicyEval ea = rl::evaluate_policy(pa, cfg.env, rand, cfg.eval_episodes, cfg.seed);
  const rl::PolicyEval eb = rl::evaluate_policy(pb, cfg.env, rand, cfg.eval_episodes, cfg.seed);
  ArtifactSink sink(cfg.out);
  nlohmann::json j;
  j["payload"] = cfg.eval_payload;
  j["episodes"] = cfg.eval_episodes;
  j["adaptive"] = {{"tracking_error", ea.tracking_error},
                   {"channels", ea.channel_error},
                   {"mean_reward", ea.mean_reward}};
  j["baseline"] = {{"tracking_error", eb.tracking_error},
                   {"channels", eb.channel_error},
                   {"mean_reward", eb.mean_reward}};
  j["relative_reduction"] =
      eb.tracking_error > 0.0 ? 1.0 - ea.tracking_error / eb.tracking_error : 0.0;
  {
    std::ofstream os(sink.path("eval_ppo.json"));
    os << j.dump(1) << '\n';
  }
  sink.write_manifest(config::config_hash(cfg));
  std::printf("policy     tracking_error  mean_reward\n");
  std::printf("adaptive   %-15.6f %.6f\n", ea.tracking_error, ea.mean_reward);
  std::printf("baseline   %-15.6f %.6f\n", eb.tracking_error, eb.mean_reward);
  std::printf("relative reduction: %.1f%%\n", 100.0 * j["relative_reduction"].get<double>());
  return 0;
}

// --- metrics ----------------------------------------------------------------

metrics::MetricsValues metrics_from_file(const std::string& input,
                                         const metrics::BoundsOptions& opt) {
  if (input.size() > 4 && input.substr(input.size() - 4) == ".csv") {
    std::ifstream in(input);
    if (!in) throw IoError("cannot open '" + input + "'");
    metrics::CsvTrial trial = metrics::parse_metrics_csv(in);
    return metrics::compute_metrics(trial.pair, trial.wrench, trial.com, opt);
  }
  dyad::DyadLog log = dyad::load_log(input);
  return metrics::compute_metrics(metrics::pair_from_log(log), metrics::wrench_from_log(log),
                                  metrics::com_from_log(log), opt);
}

int cmd_metrics(const config::ExperimentConfig& cfg, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ValueError("metrics: need at least one --input file");
  std::vector<metrics::MetricsValues> trials;
  for (const auto& in : inputs) trials.push_back(metrics_from_file(in, cfg.bounds));
  metrics::MetricsReport report = metrics::build_report(trials);
  std::cout << metrics::render_report(report);
  ArtifactSink sink(cfg.out);
  {
    std::ofstream os(sink.path("metrics.json"));
    os << metrics::report_to_json(report).dump(1) << '\n';
  }
  sink.write_manifest(config::config_hash(cfg));
  return 0;
}

// --- reproduce --------------------------------------------------------------

// One-seed pipeline: gen-data, train-intent, closed-loop rollouts with the
// learned follower, and the metrics report against the built-in admittance
// follower on the same primitives.
int cmd_reproduce(const config::ExperimentConfig& cfg) {
  ArtifactSink sink(cfg.out);
  echo_config(sink, cfg);

  // Data.
  std::vector<TrainingSample> samples = dyad::generate_dataset(
      cfg.dyad, cfg.payloads, cfg.reps, cfg.intent.horizon, cfg.stride, cfg.seed);
  const uint64_t dhash = dyad::dataset_config_hash(cfg.dyad, cfg.payloads, cfg.reps,
                                                   cfg.intent.horizon, cfg.stride, cfg.seed);
  save_dataset(sink.path("dataset.bin"), samples, dhash);
  std::cout << "reproduce: dataset " << samples.size() << " windows\n";

  // Intent model.
  diff::IntentTrainResult res = diff::train_intent(samples, cfg.intent, cfg.intent_train, cfg.seed);
  save_intent_checkpoint(sink.path("intent.json"), res.model, config::config_hash(cfg));
  {
    std::ofstream os(sink.path("intent_curve.csv"));
    os << "step,l_diff,l_kl,l_total\n";
    for (const auto& p : res.curve)
      os << p.step << ',' << p.l_diff << ',' << p.l_kl << ',' << p.l_total << '\n';
  }
  std::cout << "reproduce: intent trained ("
            << (res.curve.empty() ? 0.0 : res.curve.back().l_total) << " final loss)\n";

  // Closed-loop rollouts: learned follower vs the admittance follower on the
  // translation primitives.
  const std::array<dyad::Primitive, 2> probes{dyad::Primitive::kForward, dyad::Primitive::kLeft};
  std::vector<metrics::MetricsValues> ours, admittance;
  for (dyad::Primitive p : probes) {
    const uint64_t rs = Rng::derive(cfg.seed, "reproduce.roll", static_cast<uint64_t>(p));
    dyad::DyadLog learned = dyad::simulate_dyad(
        p, cfg.dyad, rs, learned_follower(res.model, cfg.ddim_k, cfg.seed));
    dyad::DyadLog plain = dyad::simulate_dyad(p, cfg.dyad, rs);
    const std::string name = std::string("rollout_") + dyad::primitive_name(p) + ".jsonl";
    dyad::save_log(sink.path(name), learned);
    ours.push_back(metrics::compute_metrics(metrics::pair_from_log(learned),
                                            metrics::wrench_from_log(learned),
                                            metrics::com_from_log(learned), cfg.bounds));
    admittance.push_back(metrics::compute_metrics(metrics::pair_from_log(plain),
                                                  metrics::wrench_from_log(plain),
                                                  metrics::com_from_log(plain), cfg.bounds));
  }
  metrics::MetricsReport adm_report = metrics::build_report(admittance);
  metrics::BaselineColumn adm_col;
  adm_col.name = "Admittance";
  for (int k = 0; k < 4; ++k)
    adm_col.cells[static_cast<size_t>(k)] =
        metrics::detail::fmt_metric(adm_report.mean[static_cast<size_t>(k)]);
  metrics::MetricsReport report = metrics::build_report(
      ours, {adm_col, metrics::kHumanHumanColumn, metrics::kHumanHumanoidColumn});
  const std::string rendered = metrics::render_report(report);
  std::cout << rendered;
  {
    std::ofstream os(sink.path("report.txt"));
    os << rendered;
  }
  {
    std::ofstream os(sink.path("report.json"));
    os << metrics::report_to_json(report).dump(1) << '\n';
  }
  sink.write_manifest(config::config_hash(cfg));
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"dyadic co-manipulation experiments: data, intent diffusion, RL, metrics"};
  app.require_subcommand(1);

  CommonArgs gen_a, ti_a, inf_a, roll_a, tp_a, ep_a, met_a, rep_a;
  std::string ti_data, inf_ckpt, inf_log, roll_ckpt, roll_prim = "forward";
  std::string tp_mode = "both", ep_adaptive, ep_baseline;
  int inf_frame = -1;
  std::vector<std::string> met_inputs;

  CLI::App* gen = app.add_subcommand("gen-data", "simulate dyad trials and window the dataset");
  add_common(gen, gen_a);
  CLI::App* ti = app.add_subcommand("train-intent", "train the intent diffusion model");
  add_common(ti, ti_a);
  ti->add_option("--data", ti_data, "dataset file (default: <out>/dataset.bin)");
  CLI::App* inf = app.add_subcommand("infer", "denoise one command window from a log");
  add_common(inf, inf_a);
  inf->add_option("--ckpt", inf_ckpt, "intent checkpoint")->required();
  inf->add_option("--log", inf_log, "dyad log file")->required();
  inf->add_option("--frame", inf_frame, "window index (default: last)");
  CLI::App* roll = app.add_subcommand("rollout", "closed-loop sim with the learned follower");
  add_common(roll, roll_a);
  roll->add_option("--ckpt", roll_ckpt, "intent checkpoint (default: <out>/intent.json)");
  roll->add_option("--primitive", roll_prim, "leader primitive name");
  CLI::App* tp = app.add_subcommand("train-ppo", "train the load-adaptive / baseline policies");
  add_common(tp, tp_a);
  tp->add_option("--mode", tp_mode, "adaptive | baseline | both")
      ->check(CLI::IsMember({"adaptive", "baseline", "both"}));
  CLI::App* ep = app.add_subcommand("eval-ppo", "paired evaluation at the held-out payload");
  add_common(ep, ep_a);
  ep->add_option("--adaptive", ep_adaptive, "adaptive checkpoint (default: <out>/policy_adaptive.json)");
  ep->add_option("--baseline", ep_baseline, "baseline checkpoint (default: <out>/policy_baseline.json)");
  CLI::App* met = app.add_subcommand("metrics", "evaluate logged trials");
  add_common(met, met_a);
  met->add_option("--input", met_inputs, "dyad log (.jsonl) or bare CSV trial")->required();
  CLI::App* rep = app.add_subcommand("reproduce", "full pipeline from one seed");
  add_common(rep, rep_a);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  CommonArgs* args = nullptr;
  if (sub == gen) args = &gen_a;
  else if (sub == ti) args = &ti_a;
  else if (sub == inf) args = &inf_a;
  else if (sub == roll) args = &roll_a;
  else if (sub == tp) args = &tp_a;
  else if (sub == ep) args = &ep_a;
  else if (sub == met) args = &met_a;
  else args = &rep_a;
  args->extras = sub->remaining();

  try {
    const config::ExperimentConfig cfg = resolve_config(*args);
    if (sub == gen) return cmd_gen_data(cfg);
    if (sub == ti) return cmd_train_intent(cfg, ti_data);
    if (sub == inf) return cmd_infer(cfg, inf_ckpt, inf_log, inf_frame);
    if (sub == roll) return cmd_rollout(cfg, roll_ckpt, roll_prim);
    if (sub == tp) return cmd_train_ppo(cfg, tp_mode);
    if (sub == ep) return cmd_eval_ppo(cfg, ep_adaptive, ep_baseline);
    if (sub == met) return cmd_metrics(cfg, met_inputs);
    return cmd_reproduce(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
