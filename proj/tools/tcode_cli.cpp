// tcode: train, evaluate, verify and export equivariant embeddings.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tcode/tcode.hpp"

namespace fs = std::filesystem;
using namespace tcode;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

struct Common {
  std::string config;
  std::vector<std::string> sets;
  bool json = false;
  std::optional<std::uint64_t> seed;
  std::string out;
};

class Printer {
public:
  explicit Printer(bool json) : json_(json) {}

  bool json() const { return json_; }

  /// A JSON line under --json; `text` otherwise.
  void emit(const tcode::json& record, const std::string& text) const {
    if (json_) {
      std::cout << record.dump() << '\n';
    } else if (!text.empty()) {
      std::cout << text << '\n';
    }
    std::cout.flush();
  }

private:
  bool json_;
};

void add_common(CLI::App& cmd, Common& c, bool with_config = true) {
  if (with_config) {
    cmd.add_option("--config", c.config, "Run config (JSON)");
    cmd.add_option("--set", c.sets, "Override a config key: dotted.path=value (repeatable)");
  }
  cmd.add_flag("--json", c.json, "Machine-readable JSON lines on stdout");
  cmd.add_option("--seed", c.seed, "Seed");
  cmd.add_option("--out", c.out, "Output directory");
}

TrainConfig build_config(json j, const Common& c) {
  for (const auto& s : c.sets) apply_override(j, s);
  if (c.seed) j["seed"] = *c.seed;
  TrainConfig config = parse_config(j);
  config.validate();
  return config;
}

TrainConfig load_config(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  return build_config(read_json_file(c.config), c);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string preservation_line(const std::string& label, const PreservationReport& r) {
  return label + ": distance median " + fmt(r.distance.median) + " p90 " + fmt(r.distance.p90) +
         ", inner product median " + fmt(r.inner_product.median) + ", cosine median " + fmt(r.cosine.median);
}

void print_evaluation(const Printer& p, const EvaluationSummary& s) {
  if (p.json()) {
    json j = to_json(s);
    j["event"] = "evaluation";
    p.emit(j, "");
    return;
  }
  p.emit({}, preservation_line("held-out", s.whole));
  for (std::size_t b = 0; b < s.blocks.size(); ++b) p.emit({}, preservation_line("block " + std::to_string(b), s.blocks[b]));
  if (s.scores) {
    for (std::size_t i = 0; i < s.scores->size(); ++i) {
      std::string row = "invariance score block " + std::to_string(i) + ":";
      for (double v : (*s.scores)[i]) row += " " + fmt(v);
      p.emit({}, row);
    }
  }
  if (s.quads) p.emit({}, preservation_line("quads", *s.quads));
}

void print_ranking(const Printer& p, const RankingReport& r) {
  json j = to_json(r);
  j["event"] = "ranking";
  p.emit(j, "H@1 " + fmt(r.hits_at_1) + "  MRR " + fmt(r.mrr) + "  (" + std::to_string(r.instances) +
                " transitions, " + std::to_string(r.reference_count) + " references)");
}

TrainResult run_training(const TrainConfig& config, const fs::path& out, bool resume_run, const Printer& p) {
  p.emit({{"event", "config"}, {"config", to_json(config)}, {"config_hash", config_hash(config)}},
         "config " + config_hash(config) + " -> " + out.string());
  TrainOptions o;
  o.out_dir = out;
  o.on_event = [&](const json& e) {
    const std::string kind = e.at("event");
    if (p.json()) {
      p.emit(e, "");
    } else if (kind == "checkpoint") {
      p.emit({}, "checkpoint " + e.at("path").get<std::string>());
    } else if (kind == "step" && e.at("step").get<std::size_t>() % 500 == 0) {
      p.emit({}, "step " + std::to_string(e.at("step").get<std::size_t>()) + "  total " + fmt(e.at("total")) +
                     "  symmetry " + fmt(e.at("symmetry")) + "  barrier " + fmt(e.at("barrier")));
    }
  };
  if (resume_run && latest_checkpoint(out)) return resume(out, config, o);
  return train(config, o);
}

/// The model to evaluate: a finished run directory, or a fresh in-memory training run.
struct Subject {
  TrainConfig config;
  EncoderModel model;
};

Subject subject(const Common& c, const std::string& run_dir, const Printer& p) {
  if (!run_dir.empty()) {
    if (!c.config.empty()) throw ConfigError("give either --run or --config, not both");
    LoadedRun run = load_run(run_dir, c.sets);
    return {std::move(run.config), std::move(run.model)};
  }
  Common train_only = c;
  train_only.seed.reset();
  TrainConfig config = load_config(train_only);
  if (!p.json()) p.emit({}, "training " + std::to_string(config.steps) + " steps in memory");
  diag::ScopedCapture quiet;
  TrainResult r = train(config);
  return {std::move(config), std::move(r.model)};
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

int cmd_train(const Common& c, bool resume_run) {
  const Printer p(c.json);
  const TrainConfig config = load_config(c);
  const fs::path out = c.out.empty() ? fs::path("runs") / config_hash(config).substr(0, 12) : fs::path(c.out);
  const TrainResult r = run_training(config, out, resume_run, p);
  const double last = r.record.steps.empty() ? 0.0 : r.record.steps.back().total;
  p.emit({{"event", "done"}, {"steps", r.record.steps.size()}, {"final_total", last}, {"out", out.string()}},
         "done: " + std::to_string(r.record.steps.size()) + " steps, final total " + fmt(last) + ", record in " +
             out.string());
  return kOk;
}

int cmd_eval(const Common& c, const std::string& run_dir) {
  const Printer p(c.json);
  const Subject s = subject(c, run_dir, p);
  const EvaluationSummary summary = evaluate_model(s.config, s.model, c.seed.value_or(s.config.seed));
  print_evaluation(p, summary);
  if (!c.out.empty()) write_json(fs::path(c.out) / "evaluation.json", to_json(summary));
  return kOk;
}

int cmd_rank(const Common& c, const std::string& run_dir) {
  const Printer p(c.json);
  const Subject s = subject(c, run_dir, p);
  const RankingReport r = rank_model(s.config, s.model, c.seed.value_or(s.config.seed));
  print_ranking(p, r);
  if (!c.out.empty()) write_json(fs::path(c.out) / "ranking.json", to_json(r));
  return kOk;
}

int cmd_export(const Common& c, const std::string& run_dir) {
  const Printer p(c.json);
  const Subject s = subject(c, run_dir, p);
  const fs::path dir = !c.out.empty() ? fs::path(c.out) : !run_dir.empty() ? fs::path(run_dir) : fs::path(".");
  const fs::path path = dir / "embeddings.csv";
  export_model(s.config, s.model, c.seed.value_or(s.config.seed), path);
  p.emit({{"event", "export"}, {"path", path.string()}, {"rows", s.config.evaluation.export_count}},
         "wrote " + std::to_string(s.config.evaluation.export_count) + " rows to " + path.string());
  return kOk;
}

int cmd_gradcheck(const Common& c, const std::string& losses, std::size_t instances) {
  const Printer p(c.json);
  if (instances == 0) throw ConfigError("--instances must be positive");
  const auto families = gradient_case_families();
  std::vector<const GradientCaseFamily*> chosen;
  if (losses == "all") {
    for (const auto& f : families) chosen.push_back(&f);
  } else {
    std::stringstream ss(losses);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto it = std::find_if(families.begin(), families.end(), [&](const auto& f) { return f.name == name; });
      if (it == families.end()) {
        std::string known;
        for (const auto& f : families) known += (known.empty() ? "" : ", ") + f.name;
        throw ConfigError("unknown loss '" + name + "' (known: " + known + ")");
      }
      chosen.push_back(&*it);
    }
  }
  constexpr double tolerance = 1e-4;
  bool pass = true;
  if (!c.json) p.emit({}, "loss                 instances  max relative error");
  for (const GradientCaseFamily* f : chosen) {
    const GradCheckSummary s = run_gradient_family(*f, instances, c.seed.value_or(0));
    const bool ok = s.max_relative_error < tolerance;
    pass = pass && ok;
    char row[128];
    std::snprintf(row, sizeof row, "%-20s %9zu  %.3e %s", s.name.c_str(), s.instances, s.max_relative_error,
                  ok ? "" : "FAIL");
    p.emit({{"event", "gradcheck"},
            {"loss", s.name},
            {"instances", s.instances},
            {"max_relative_error", s.max_relative_error},
            {"pass", ok}},
           row);
  }
  return pass ? kOk : kNumerical;
}

int cmd_verify_action(const Common& c, std::size_t size, bool fault) {
  const Printer p(c.json);
  if (size < 2) throw ConfigError("--size must be at least 2");
  ShiftedSignals s = shifted_signals(size, c.seed.value_or(0));
  if (fault) {
    // g = 1 now sends point 0 one step too far.
    s.gset.action[1][0] = s.gset.action[1][0] + 1 == size ? 0 : s.gset.action[1][0] + 1;
  }
  const InducedActionReport r = verify_induced_action(s.f_table, s.gset);
  json j = {{"event", "verify-action"},
            {"group", "C" + std::to_string(size)},
            {"checks", r.checks},
            {"violations", r.violations.size()},
            {"ok", r.ok()}};
  std::string text = "C" + std::to_string(size) + ": " + std::to_string(r.checks) + " checks, " +
                     std::to_string(r.violations.size()) + " violations";
  if (r.collision) {
    j["collision"] = {r.collision->first, r.collision->second};
    text += ", encoder not injective (" + std::to_string(r.collision->first) + " and " +
            std::to_string(r.collision->second) + " collide)";
  }
  if (!r.violations.empty()) {
    const auto& v = r.violations.front();
    const bool identity = v.axiom == InducedActionViolation::Axiom::identity;
    j["first_violation"] = {{"axiom", identity ? "identity" : "composition"}, {"g", v.g}, {"h", v.h}, {"point", v.point}};
    text += "; first: " + std::string(identity ? "identity" : "composition") + " at g=" + std::to_string(v.g) +
            " h=" + std::to_string(v.h) + " x=" + std::to_string(v.point);
  }
  p.emit(j, text);
  return r.ok() ? kOk : kValidation;
}

int cmd_demo(const Common& c, const std::string& name, bool resume_run) {
  const Printer p(c.json);
  if (!c.config.empty()) throw ConfigError("demo takes a preset name, not --config");
  const TrainConfig config = build_config(to_json(preset(name)), c);
  const fs::path out = c.out.empty() ? fs::path("demo_" + name) : fs::path(c.out);
  const TrainResult r = run_training(config, out, resume_run, p);
  json summary = {{"preset", name}, {"config_hash", config_hash(config)}, {"steps", r.record.steps.size()}};
  const EvaluationSummary e = evaluate_model(config, r.model, config.seed);
  print_evaluation(p, e);
  summary["evaluation"] = to_json(e);
  if (has_finite_actions(config.environment)) {
    const RankingReport rank = rank_model(config, r.model, config.seed);
    print_ranking(p, rank);
    summary["ranking"] = to_json(rank);
  }
  if (std::holds_alternative<PendulumSim>(config.environment)) {
    const PendulumProbe probe = pendulum_probe(config, r.model, config.seed);
    json j = to_json(probe);
    j["event"] = "probe";
    p.emit(j, "1-NN probe: theta circular MAE " + fmt(probe.theta_mae) + " rad, omega sign accuracy " +
                  fmt(probe.omega_sign_accuracy));
    summary["probe"] = to_json(probe);
  }
  export_model(config, r.model, config.seed, out / "embeddings.csv");
  write_json(out / "summary.json", summary);
  p.emit({{"event", "done"}, {"out", out.string()}}, "artifacts in " + out.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn and check equivariant embeddings via symmetry-regularization losses"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Common common;
  std::string run_dir, losses = "all", preset_name;
  std::size_t instances = 20, size = 8;
  bool resume_run = false, fault = false;

  auto* train_cmd = app.add_subcommand("train", "Train an encoder and write the run record");
  add_common(*train_cmd, common);
  train_cmd->add_flag("--resume", resume_run, "Continue from the latest checkpoint in --out");

  auto* eval_cmd = app.add_subcommand("eval", "Held-out preservation residuals and decomposition scores");
  auto* rank_cmd = app.add_subcommand("rank", "H@1 / MRR of a latent transition model");
  auto* export_cmd = app.add_subcommand("export", "Write embeddings and ground-truth states as CSV");
  for (CLI::App* cmd : {eval_cmd, rank_cmd, export_cmd}) {
    add_common(*cmd, common);
    cmd->add_option("--run", run_dir, "Trained run directory (otherwise train --config in memory)");
  }

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  add_common(*grad_cmd, common, false);
  grad_cmd->add_option("--losses", losses, "Comma-separated loss names, or 'all'");
  grad_cmd->add_option("--instances", instances, "Random instances per loss");

  auto* verify_cmd = app.add_subcommand("verify-action", "Check the induced latent action on a cyclic G-set");
  add_common(*verify_cmd, common, false);
  verify_cmd->add_option("--size", size, "Order of the cyclic group");
  verify_cmd->add_flag("--fault", fault, "Corrupt one action-table entry first");

  auto* demo_cmd = app.add_subcommand("demo", "Run a preset end to end and export its embeddings");
  add_common(*demo_cmd, common);
  demo_cmd->add_option("preset", preset_name, "Preset name")->required()->check(CLI::IsMember(preset_names()));
  demo_cmd->add_flag("--resume", resume_run, "Continue from the latest checkpoint in --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*train_cmd) return cmd_train(common, resume_run);
    if (*eval_cmd) return cmd_eval(common, run_dir);
    if (*rank_cmd) return cmd_rank(common, run_dir);
    if (*export_cmd) return cmd_export(common, run_dir);
    if (*grad_cmd) return cmd_gradcheck(common, losses, instances);
    if (*verify_cmd) return cmd_verify_action(common, size, fault);
    if (*demo_cmd) return cmd_demo(common, preset_name, resume_run);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kValidation;
  } catch (const DimensionError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}
