#include "dgpo/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dgpo/checkpoint.hpp"
#include "dgpo/errors.hpp"
#include "dgpo/report.hpp"
#include "dgpo/rng.hpp"

#ifndef DGPO_CODE_HASH
#define DGPO_CODE_HASH "unknown"
#endif

namespace dgpo::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kDumpStream = 0xd00d;
constexpr int kDumpSamples = 512;

/// Files of one run share the prefix `<out>/<command>-s<seed>`.
struct RunPaths {
  fs::path dir;
  std::string stem;

  fs::path file(const std::string& suffix) const { return dir / (stem + "-" + suffix); }
  fs::path manifest() const { return file("manifest.json"); }
};

class Logger {
 public:
  Logger(std::ostream& os, bool quiet) : os_(os), quiet_(quiet) {}
  template <typename... Args>
  void info(const Args&... args) const {
    if (quiet_) return;
    (os_ << ... << args) << '\n';
    os_.flush();
  }

 private:
  std::ostream& os_;
  bool quiet_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

fs::path resolve_against(const std::string& p, const fs::path& base) {
  if (p.empty()) return {};
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

RunConfig load_config(const RunSpec& run) {
  RunConfig cfg;
  if (!run.config.empty()) {
    if (!fs::exists(run.config)) throw ConfigError("config file not found: " + run.config.string());
    cfg = resolve_config(parse_config_file(run.config), RunConfig{}, run.config.string());
    const fs::path base = fs::absolute(run.config).parent_path();
    if (!cfg.base_checkpoint.empty()) cfg.base_checkpoint = resolve_against(cfg.base_checkpoint, base).string();
    if (!cfg.eval_checkpoint.empty()) cfg.eval_checkpoint = resolve_against(cfg.eval_checkpoint, base).string();
    if (!cfg.plot_input.empty()) cfg.plot_input = resolve_against(cfg.plot_input, base).string();
  }
  if (run.seed) cfg.train.seed = *run.seed;
  if (cfg.checkpoint_every < 0) throw ConfigError("posttrain.checkpoint_every must be >= 0");
  cfg.train.validate();
  return cfg;
}

RunPaths claim_run(const fs::path& out, Subcommand cmd, std::uint64_t seed) {
  fs::create_directories(out);
  RunPaths paths{out, to_string(cmd) + "-s" + std::to_string(seed)};
  if (fs::exists(paths.manifest())) {
    throw std::runtime_error("refusing to overwrite existing run manifest " + paths.manifest().string() +
                             "; choose another --out or --seed");
  }
  return paths;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json metrics_json(const train::MetricsRecord& r) {
  return {{"iteration", r.iteration},
          {"mean_reward", r.mean_reward},
          {"sliced_w2", r.sliced_w2},
          {"train_loss", r.train_loss},
          {"degenerate_groups", r.degenerate_groups}};
}

/// Manifest written before any work starts and rewritten on completion.
class Manifest {
 public:
  Manifest(RunPaths paths, Subcommand cmd, const RunConfig& cfg) : paths_(std::move(paths)) {
    j_ = {{"command", to_string(cmd)},
          {"seed", cfg.train.seed},
          {"code_hash", code_hash()},
          {"config", config_to_json(cfg)},
          {"status", "running"},
          {"outputs", nlohmann::json::array()}};
    const fs::path cfg_path = paths_.file("config.toml");
    std::ofstream out(cfg_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + cfg_path.string());
    out << "# resolved configuration; pass back with --config to repeat this run\n" << to_config_text(cfg);
    add_output(cfg_path);
    flush();
  }

  const RunPaths& paths() const { return paths_; }
  void add_output(const fs::path& p) { j_["outputs"].push_back(p.filename().string()); }
  nlohmann::json& operator[](const std::string& key) { return j_[key]; }
  void finish(const std::string& status) {
    j_["status"] = status;
    flush();
  }

 private:
  void flush() const { write_json(paths_.manifest(), j_); }

  RunPaths paths_;
  nlohmann::json j_;
};

void dump_samples(Manifest& m, const nn::ModelParams& params, const train::TrainConfig& tc) {
  train::EvalSettings s = tc.eval_settings();
  s.n_samples = kDumpSamples;
  const std::uint64_t seed = derive_seed(tc.seed, kDumpStream);
  const train::Evaluation ev = train::evaluate(params, train::make_reward(tc), train::holdout_set(tc), seed, s);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(kDumpSamples));
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(seed, i);
  const auto centers = tc.task.centers();
  report::emit_scatter_svg(ev.samples, ev.labels, centers, m.paths().file("samples.svg"));
  report::write_samples_csv(m.paths().file("samples.csv"), ev.samples, ev.labels, seeds);
  m.add_output(m.paths().file("samples.svg"));
  m.add_output(m.paths().file("samples.csv"));
}

void save_params(Manifest& m, const nn::ModelParams& params, const std::string& tag) {
  const fs::path p = m.paths().file(tag + ".ckpt");
  nn::save_checkpoint({params, {}}, p);
  m.add_output(p);
}

void write_metrics(Manifest& m, const std::vector<train::MetricsRecord>& rows) {
  report::write_metrics_csv(m.paths().file("metrics.csv"), rows);
  report::write_timing_csv(m.paths().file("timing.csv"), rows);
  m.add_output(m.paths().file("metrics.csv"));
  m.add_output(m.paths().file("timing.csv"));
  if (!rows.empty()) m["final"] = metrics_json(rows.back());
}

nn::ModelParams load_model(const std::string& path, const train::TrainConfig& tc, const char* field) {
  if (path.empty()) throw ConfigError(std::string(field) + " is required for this command");
  if (!fs::exists(path)) throw ConfigError(std::string(field) + ": checkpoint not found: " + path);
  nn::ModelParams params = nn::load_checkpoint(path).params;
  if (nn::arch_to_json(params.arch) != nn::arch_to_json(tc.arch())) {
    throw ConfigError(std::string(field) + ": checkpoint architecture " + nn::arch_to_json(params.arch).dump() +
                      " does not match the [model]/[task] sections " + nn::arch_to_json(tc.arch()).dump());
  }
  return params;
}

/// Pretraining into `out`; returns the final checkpoint path.
fs::path pretrain_into(const RunConfig& cfg, const fs::path& out, const Logger& log) {
  Manifest m(claim_run(out, Subcommand::pretrain, cfg.train.seed), Subcommand::pretrain, cfg);
  const int every = cfg.checkpoint_every;
  auto observer = [&](const train::MetricsRecord& r, const nn::ModelParams& p) {
    log.info("pretrain step ", r.iteration, "  loss ", fmt(r.train_loss), "  sliced_w2 ", fmt(r.sliced_w2));
    if (r.iteration > 0 && (every == 0 || r.iteration % every == 0)) {
      save_params(m, p, "iter" + std::to_string(r.iteration));
    }
  };
  try {
    const train::PretrainResult res = train::pretrain(cfg.train, observer);
    write_metrics(m, res.metrics);
    m["initial_sliced_w2"] = res.initial_sliced_w2;
    m["final_sliced_w2"] = res.final_sliced_w2;
    save_params(m, res.params, "final");
    dump_samples(m, res.params, cfg.train);
    m.finish("complete");
  } catch (const train::DivergenceError& e) {
    save_params(m, e.last_good(), "last-good");
    m["error"] = e.what();
    m.finish("diverged");
    throw;
  }
  return m.paths().file("final.ckpt");
}

train::TrainResult posttrain_into(const RunConfig& cfg, const fs::path& out, const Logger& log,
                                  const std::string& label) {
  const nn::ModelParams base = load_model(cfg.base_checkpoint, cfg.train, "posttrain.base_checkpoint");
  Manifest m(claim_run(out, Subcommand::posttrain, cfg.train.seed), Subcommand::posttrain, cfg);
  if (cfg.train.algorithm == train::Algorithm::dpo || cfg.train.algorithm == train::Algorithm::dpo_offline) {
    m["dpo_pairing"] = "best-vs-worst (ties to the lowest index)";
  }
  const int every = cfg.checkpoint_every;
  auto observer = [&](const train::MetricsRecord& r, const nn::ModelParams& p) {
    log.info(label, "iter ", r.iteration, "  reward ", fmt(r.mean_reward), "  sliced_w2 ", fmt(r.sliced_w2),
             "  loss ", fmt(r.train_loss, 6));
    if (r.iteration > 0 && (every == 0 || r.iteration % every == 0)) {
      save_params(m, p, "iter" + std::to_string(r.iteration));
    }
  };
  try {
    train::TrainResult res = train::post_train(cfg.train, base, train::make_reward(cfg.train), observer);
    write_metrics(m, res.metrics);
    m["skipped_iterations"] = res.skipped_iterations;
    m["degenerate_groups"] = res.degenerate_groups;
    m["total_groups"] = res.total_groups;
    save_params(m, res.params, "final");
    dump_samples(m, res.params, cfg.train);
    m.finish("complete");
    return res;
  } catch (const train::DivergenceError& e) {
    save_params(m, e.last_good(), "last-good");
    m["error"] = e.what();
    m.finish("diverged");
    throw;
  }
}

/// Settings a canonical variant name implies before user overrides.
KeyValues variant_recipe(const std::string& name) {
  auto kv = [](std::initializer_list<std::pair<const char*, const char*>> items) {
    KeyValues out;
    for (const auto& [k, v] : items) out[k] = {v, 0};
    return out;
  };
  if (name == "dgpo" || name == "dgpo-ode") return kv({{"posttrain.algorithm", "dgpo"}, {"posttrain.sampler", "ode"}});
  if (name == "dgpo-sde") return kv({{"posttrain.algorithm", "dgpo"}, {"posttrain.sampler", "sde"}});
  if (name == "dgpo-offline") return kv({{"posttrain.algorithm", "dgpo-offline"}});
  if (name == "dpo") return kv({{"posttrain.algorithm", "dpo"}});
  if (name == "dpo-offline") return kv({{"posttrain.algorithm", "dpo-offline"}});
  if (name == "dgpo-noclip") return kv({{"posttrain.algorithm", "dgpo"}, {"posttrain.t_min", "0"}});
  if (name == "grpo") return kv({{"posttrain.algorithm", "grpo"}, {"posttrain.sampler", "sde"}});
  return {};
}

bool is_canonical(const std::string& name) { return !variant_recipe(name).empty(); }

const VariantOutcome* find_variant(const std::map<std::string, VariantOutcome>& v,
                                   std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = v.find(n);
    if (it != v.end() && !it->second.failed && !it->second.metrics.empty()) return &it->second;
  }
  return nullptr;
}

}  // namespace

std::string to_string(Subcommand c) {
  switch (c) {
    case Subcommand::pretrain: return "pretrain";
    case Subcommand::posttrain: return "posttrain";
    case Subcommand::eval: return "eval";
    case Subcommand::ablate: return "ablate";
    case Subcommand::plot: return "plot";
  }
  return "unknown";
}

std::string code_hash() { return DGPO_CODE_HASH; }

int cmd_pretrain(const RunSpec& run, std::ostream& os) {
  const RunConfig cfg = load_config(run);
  pretrain_into(cfg, run.out, Logger(os, run.quiet));
  return kExitOk;
}

int cmd_posttrain(const RunSpec& run, std::ostream& os) {
  const RunConfig cfg = load_config(run);
  posttrain_into(cfg, run.out, Logger(os, run.quiet), "");
  return kExitOk;
}

int cmd_eval(const RunSpec& run, std::ostream& os) {
  const RunConfig cfg = load_config(run);
  const Logger log(os, run.quiet);
  const nn::ModelParams params = load_model(cfg.eval_checkpoint, cfg.train, "eval.checkpoint");
  Manifest m(claim_run(run.out, Subcommand::eval, cfg.train.seed), Subcommand::eval, cfg);
  const train::TrainConfig& tc = cfg.train;
  const std::uint64_t seed = derive_seed(tc.seed, kDumpStream);
  train::Evaluation ev = train::evaluate(params, train::make_reward(tc), train::holdout_set(tc), seed,
                                         tc.eval_settings());
  write_metrics(m, {ev.record});
  std::vector<std::uint64_t> seeds(ev.labels.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(seed, i);
  report::write_samples_csv(m.paths().file("samples.csv"), ev.samples, ev.labels, seeds);
  report::emit_scatter_svg(ev.samples, ev.labels, tc.task.centers(), m.paths().file("samples.svg"));
  m.add_output(m.paths().file("samples.csv"));
  m.add_output(m.paths().file("samples.svg"));
  if (tc.sampler == train::SamplerKind::sde) {
    const auto batch = diffusion::sample_sde(diffusion::model_denoiser(params), ev.labels, seeds,
                                             tc.rollout_steps, tc.noise_scale, params.arch.data_dim);
    report::write_trajectory_csv(m.paths().file("trajectories.csv"), batch.trajectories, seeds);
    m.add_output(m.paths().file("trajectories.csv"));
  }
  log.info("eval  reward ", fmt(ev.record.mean_reward), "  sliced_w2 ", fmt(ev.record.sliced_w2));
  m.finish("complete");
  return kExitOk;
}

int cmd_plot(const RunSpec& run, std::ostream& os) {
  const RunConfig cfg = load_config(run);
  if (cfg.plot_input.empty()) throw ConfigError("plot.input is required for the plot command");
  if (!fs::exists(cfg.plot_input)) throw ConfigError("plot.input: file not found: " + cfg.plot_input);
  Manifest m(claim_run(run.out, Subcommand::plot, cfg.train.seed), Subcommand::plot, cfg);
  const report::SampleDump dump = report::read_samples_csv(cfg.plot_input);
  report::emit_scatter_svg(dump.samples, dump.labels, cfg.train.task.centers(), m.paths().file("samples.svg"));
  m.add_output(m.paths().file("samples.svg"));
  m.finish("complete");
  Logger(os, run.quiet).info("plot  ", dump.samples.rows(), " points -> ", m.paths().file("samples.svg").string());
  return kExitOk;
}

int cmd_ablate(const RunSpec& run, std::ostream& os) {
  const RunConfig cfg = load_config(run);
  const Logger log(os, run.quiet);
  if (cfg.variants.empty()) throw ConfigError("ablate: no variants listed in [ablate] variants");

  std::map<std::string, RunConfig> plans;
  for (const std::string& name : cfg.variants) {
    if (plans.contains(name)) throw ConfigError("ablate: variant '" + name + "' listed twice");
    const auto it = cfg.variant_overrides.find(name);
    if (!is_canonical(name) && it == cfg.variant_overrides.end()) {
      throw ConfigError("ablate: variant '" + name + "' is neither canonical nor defined by a [variant." + name +
                        "] section");
    }
    RunConfig v = resolve_config(variant_recipe(name), cfg, "variant " + name);
    if (it != cfg.variant_overrides.end()) v = resolve_config(it->second, v, "variant " + name);
    v.variants.clear();
    v.variant_overrides.clear();
    v.train.validate();
    plans[name] = std::move(v);
  }

  Manifest m(claim_run(run.out, Subcommand::ablate, cfg.train.seed), Subcommand::ablate, cfg);
  std::string base_ckpt = cfg.base_checkpoint;
  if (base_ckpt.empty()) {
    log.info("ablate: no posttrain.base_checkpoint given, pretraining one");
    base_ckpt = pretrain_into(cfg, run.out / "pretrain", log).string();
  }

  std::map<std::string, VariantOutcome> outcomes;
  for (const std::string& name : cfg.variants) {
    RunConfig v = plans[name];
    v.base_checkpoint = base_ckpt;
    VariantOutcome& o = outcomes[name];
    o.name = name;
    try {
      o.metrics = posttrain_into(v, run.out / name, log, name + "  ").metrics;
    } catch (const std::exception& e) {
      o.failed = true;
      o.error = e.what();
      log.info("ablate: variant ", name, " failed: ", e.what());
    }
  }

  const fs::path combined = m.paths().file("combined.csv");
  {
    std::ofstream out(combined, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + combined.string());
    out << "# schema=" << report::kCsvSchema << "\nvariant,iteration,reward,sliced_w2\n";
    for (const std::string& name : cfg.variants) {
      for (const auto& r : outcomes[name].metrics) {
        out << name << ',' << r.iteration << ',' << format_double(r.mean_reward) << ','
            << format_double(r.sliced_w2) << '\n';
      }
    }
  }
  m.add_output(combined);

  const train::MetricsRecord* base = nullptr;
  for (const std::string& name : cfg.variants) {
    if (!outcomes[name].metrics.empty()) {
      base = &outcomes[name].metrics.front();
      break;
    }
  }
  const std::vector<OrderingCheck> checks =
      base ? check_orderings(outcomes, *base) : std::vector<OrderingCheck>{};

  std::ostringstream summary;
  summary << "variant,final_iteration,final_reward,final_sliced_w2,status\n";
  nlohmann::json vj = nlohmann::json::object();
  bool any_failed = false;
  for (const std::string& name : cfg.variants) {
    const VariantOutcome& o = outcomes[name];
    any_failed = any_failed || o.failed;
    if (o.failed || o.metrics.empty()) {
      summary << name << ",,,,failed: " << o.error << '\n';
      vj[name] = {{"status", "failed"}, {"error", o.error}};
    } else {
      summary << name << ',' << o.metrics.back().iteration << ',' << format_double(o.final_reward()) << ','
              << format_double(o.final_sliced_w2()) << ",ok\n";
      vj[name] = {{"status", "ok"}, {"final", metrics_json(o.metrics.back())}};
    }
  }
  if (base) summary << "\nbase_reward," << format_double(base->mean_reward) << "\nbase_sliced_w2,"
                    << format_double(base->sliced_w2) << '\n';
  summary << "\nordering,claim,result,detail\n";
  nlohmann::json oj = nlohmann::json::array();
  for (const OrderingCheck& c : checks) {
    const char* result = !c.evaluated ? "not-evaluated" : (c.held ? "held" : "violated");
    summary << c.name << ",\"" << c.claim << "\"," << result << ",\"" << c.detail << "\"\n";
    oj.push_back({{"name", c.name}, {"claim", c.claim}, {"result", result}, {"detail", c.detail}});
  }
  const fs::path summary_path = m.paths().file("summary.csv");
  {
    std::ofstream out(summary_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + summary_path.string());
    out << "# schema=" << report::kCsvSchema << '\n' << summary.str();
  }
  m.add_output(summary_path);
  m["variants"] = vj;
  m["orderings"] = oj;
  m["base_checkpoint"] = base_ckpt;
  m.finish(any_failed ? "failed" : "complete");
  log.info(summary.str());
  if (any_failed) {
    std::cerr << "ablate: one or more variants failed\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_command(const RunSpec& run, std::ostream& log) {
  try {
    switch (run.command) {
      case Subcommand::pretrain: return cmd_pretrain(run, log);
      case Subcommand::posttrain: return cmd_posttrain(run, log);
      case Subcommand::eval: return cmd_eval(run, log);
      case Subcommand::ablate: return cmd_ablate(run, log);
      case Subcommand::plot: return cmd_plot(run, log);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

std::optional<double> matched_sliced_w2(const std::vector<train::MetricsRecord>& rows, double target_reward) {
  if (rows.empty()) return std::nullopt;
  if (std::abs(rows.back().mean_reward - target_reward) <= kClipRewardMatch) return rows.back().sliced_w2;
  const train::MetricsRecord* best = nullptr;
  for (const auto& r : rows) {
    if (!best || std::abs(r.mean_reward - target_reward) < std::abs(best->mean_reward - target_reward)) best = &r;
  }
  if (std::abs(best->mean_reward - target_reward) <= kClipRewardMatch) return best->sliced_w2;
  return std::nullopt;
}

std::vector<OrderingCheck> check_orderings(const std::map<std::string, VariantOutcome>& variants,
                                           const train::MetricsRecord& base) {
  std::vector<OrderingCheck> out;
  const VariantOutcome* dgpo = find_variant(variants, {"dgpo", "dgpo-ode"});
  const VariantOutcome* sde = find_variant(variants, {"dgpo-sde"});
  const VariantOutcome* offline = find_variant(variants, {"dgpo-offline"});
  const VariantOutcome* dpo = find_variant(variants, {"dpo"});
  const VariantOutcome* noclip = find_variant(variants, {"dgpo-noclip"});
  auto r = [](double v) { return fmt(v); };

  OrderingCheck a{"ode-vs-sde", "ODE-rollout DGPO final reward >= SDE-rollout DGPO final reward", false, false, {}};
  if (dgpo && sde) {
    a.evaluated = true;
    a.held = dgpo->final_reward() >= sde->final_reward();
    a.detail = "ode " + r(dgpo->final_reward()) + " vs sde " + r(sde->final_reward());
  }
  out.push_back(a);

  OrderingCheck b{"online-vs-offline", "online DGPO >= offline DGPO >= base model on final reward", false, false, {}};
  if (dgpo && offline) {
    b.evaluated = true;
    b.held = dgpo->final_reward() >= offline->final_reward() && offline->final_reward() >= base.mean_reward;
    b.detail = "online " + r(dgpo->final_reward()) + ", offline " + r(offline->final_reward()) + ", base " +
               r(base.mean_reward);
  }
  out.push_back(b);

  OrderingCheck c{"dgpo-vs-dpo", "online DGPO final reward >= online DPO final reward", false, false, {}};
  if (dgpo && dpo) {
    c.evaluated = true;
    c.held = dgpo->final_reward() >= dpo->final_reward();
    c.detail = "dgpo " + r(dgpo->final_reward()) + " vs dpo " + r(dpo->final_reward());
  }
  out.push_back(c);

  OrderingCheck d{"timestep-clip",
                  "at matched reward (within 0.02) the t_min=0.3 run's sliced-W2 <= the t_min=0 run's", false, false, {}};
  if (dgpo && noclip) {
    d.evaluated = true;
    const auto matched = matched_sliced_w2(noclip->metrics, dgpo->final_reward());
    if (!matched) {
      d.held = false;
      d.detail = "no t_min=0 evaluation within 0.02 of clip reward " + r(dgpo->final_reward()) +
                 " (t_min=0 final " + r(noclip->final_reward()) + ")";
    } else {
      d.held = dgpo->final_sliced_w2() <= *matched;
      d.detail = "clip sliced_w2 " + r(dgpo->final_sliced_w2()) + " vs no-clip " + r(*matched) + " at reward " +
                 r(dgpo->final_reward());
    }
  }
  out.push_back(d);
  return out;
}

}  // namespace dgpo::cli
