#pragma once

// Seeded training loop. Every per-step random draw is derived from (seed, step),
// so a run resumed from a checkpoint replays the uninterrupted run exactly.
//
// Output directory layout:
//   config.json                effective config
//   run.ndjson                 one JSON event per line (start, step, checkpoint, resume, end, abort)
//   timing.json                wall-clock only, kept out of the run record so runs compare bitwise
//   checkpoints/step_NNNNNN.ckpt

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcode/adam.hpp"
#include "tcode/autodiff.hpp"
#include "tcode/checkpoint.hpp"
#include "tcode/config.hpp"
#include "tcode/decomposition.hpp"
#include "tcode/environments.hpp"
#include "tcode/errors.hpp"
#include "tcode/mlp.hpp"
#include "tcode/objectives.hpp"
#include "tcode/rng.hpp"

namespace tcode {

struct StepRecord {
  std::size_t step = 0;
  double symmetry = 0.0;
  double barrier = 0.0;     // unweighted; the total uses lambda * barrier
  double invariance = 0.0;  // unweighted; active mode only
  double total = 0.0;
  double learning_rate = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct RunRecord {
  json config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<std::string> checkpoints;  // relative to the output directory
  double wall_seconds = 0.0;
};

struct TrainResult {
  RunRecord record;
  EncoderModel model;
  AdamState adam;
};

struct TrainOptions {
  /// Where to write the run record and checkpoints; nothing is written when empty.
  std::optional<std::filesystem::path> out_dir;
  /// Receives every run-record event as it is produced.
  std::function<void(const json&)> on_event;
  /// Test hook, called before each step with the live model.
  std::function<void(EncoderModel&, std::size_t)> before_step;
};

inline json to_json(const StepRecord& s) {
  return {{"event", "step"},        {"step", s.step},   {"symmetry", s.symmetry}, {"barrier", s.barrier},
          {"invariance", s.invariance}, {"total", s.total}, {"lr", s.learning_rate}};
}

inline StepRecord step_from_json(const json& j) {
  return {j.at("step").get<std::size_t>(), j.at("symmetry").get<double>(),   j.at("barrier").get<double>(),
          j.at("invariance").get<double>(), j.at("total").get<double>(), j.at("lr").get<double>()};
}

inline std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu.ckpt", step);
  return std::string("checkpoints/") + buf;
}

inline EncoderModel initial_model(const TrainConfig& c) {
  return EncoderModel::initialized(c.layer_widths(), c.activations(), derive_seed(c.seed, Stream::init));
}

inline AdamState initial_adam(const TrainConfig& c) {
  AdamState s;
  s.config.learning_rate = c.optimizer.learning_rate;
  s.config.weight_decay = c.optimizer.weight_decay;
  return s;
}

namespace detail {

/// Builds the loss for step `t` on a fresh tape and returns its terms.
struct StepLoss {
  Var total;
  double symmetry = 0.0, barrier = 0.0, invariance = 0.0;
};

inline StepLoss build_step_loss(Tape& tape, EncoderModel& model, const TrainConfig& c, std::size_t t) {
  const std::size_t b = c.batch_size, k = c.transforms, n = c.encoder.output_dim;
  const std::size_t groups = c.active() ? subgroup_count(c.environment) : 1;
  const std::uint64_t triple_seed = derive_seed(c.seed, Stream::triples, t);
  BarrierSpec unit = c.barrier;
  unit.coefficient = 1.0;

  // All observations of the step go through the encoder in one pass.
  std::vector<TransformBatch> batches;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::uint64_t seed = derive_seed(c.seed, Stream::sampling, t * groups + g);
    batches.push_back(sample_batch(c.environment, b, k, seed,
                                   c.active() ? std::optional<std::size_t>(g) : std::nullopt).batch);
  }
  const std::size_t rows = (k + 1) * b, d = observation_size(c.environment);
  Tensor x(Shape{groups * rows, d});
  for (std::size_t g = 0; g < groups; ++g) {
    const Tensor s = batches[g].stacked();
    std::copy(s.data().begin(), s.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(g * rows * d));
  }
  Var z = model.forward(tape.constant(std::move(x)));

  StepLoss out;
  Var barrier;
  std::vector<SubgroupEmbedding> stacks;
  for (std::size_t g = 0; g < groups; ++g) {
    Var zg = groups == 1 ? z : slice_leading(z, g * rows, (g + 1) * rows);
    Var term = injectivity_loss(slice_leading(zg, 0, b), unit);
    barrier = barrier.valid() ? add(barrier, term) : term;
    stacks.push_back({g, reshape(zg, Shape{k + 1, b, n})});
  }

  Var objective;
  if (c.objective) {
    objective = symmetry_loss(stacks[0].embeddings, *c.objective, triple_seed);
    out.symmetry = tape.value(objective)[0];
  } else if (!c.active()) {
    objective = passive_loss(stacks[0].embeddings, *c.decomposition, triple_seed);
    out.symmetry = tape.value(objective)[0];
  } else {
    const ActiveLossTerms terms = active_loss_terms(stacks, *c.decomposition, triple_seed);
    objective = terms.total;
    out.symmetry = tape.value(terms.symmetry)[0];
    out.invariance = tape.value(terms.invariance)[0];
  }
  out.barrier = tape.value(barrier)[0];
  out.total = add(objective, scale(barrier, c.barrier.coefficient));
  return out;
}

class RunWriter {
public:
  RunWriter(std::optional<std::filesystem::path> dir, std::function<void(const json&)> sink, bool append)
      : dir_(std::move(dir)), sink_(std::move(sink)) {
    if (!dir_) return;
    std::error_code ec;
    std::filesystem::create_directories(*dir_ / "checkpoints", ec);
    if (ec) throw IoError("cannot create output directory " + dir_->string() + ": " + ec.message());
    out_.open(*dir_ / "run.ndjson", append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot write " + (*dir_ / "run.ndjson").string());
  }

  void emit(const json& event) {
    if (sink_) sink_(event);
    if (!dir_) return;
    out_ << event.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("failed writing run record in " + dir_->string());
  }

  const std::optional<std::filesystem::path>& dir() const { return dir_; }

private:
  std::optional<std::filesystem::path> dir_;
  std::function<void(const json&)> sink_;
  std::ofstream out_;
};

inline void run_steps(TrainResult& r, const TrainConfig& c, std::size_t first, RunWriter& writer,
                      const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const auto params = r.model.parameters();
  auto write_checkpoint = [&](std::size_t completed) {
    if (!writer.dir()) return;
    const std::string rel = checkpoint_name(completed);
    save_checkpoint(*writer.dir() / rel, Checkpoint{r.model, r.adam, c.seed, completed, r.record.config_hash});
    r.record.checkpoints.push_back(rel);
    writer.emit({{"event", "checkpoint"}, {"step", completed}, {"path", rel}});
  };

  for (std::size_t t = first; t < c.steps; ++t) {
    if (options.before_step) options.before_step(r.model, t);
    Tape tape;
    r.model.zero_grad();
    StepLoss loss = build_step_loss(tape, r.model, c, t);
    StepRecord rec{t, loss.symmetry, loss.barrier, loss.invariance, tape.value(loss.total)[0],
                   c.optimizer.rate_at(t)};
    auto abort = [&](const std::string& why) {
      writer.emit({{"event", "abort"}, {"step", t}, {"reason", why}});
      throw NumericalError(why + " at step " + std::to_string(t) + "; last good checkpoint kept");
    };
    if (!std::isfinite(rec.total)) abort("non-finite loss");
    tape.backward(loss.total);
    try {
      adam_step(r.adam, params, rec.learning_rate);
    } catch (const NumericalError&) {
      abort("non-finite gradient");
    }
    r.record.steps.push_back(rec);
    writer.emit(to_json(rec));
    if ((t + 1) % c.checkpoint_every == 0 || t + 1 == c.steps) write_checkpoint(t + 1);
  }
  if (writer.dir() && (r.record.checkpoints.empty() && c.steps == first)) write_checkpoint(first);
  r.record.wall_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  writer.emit({{"event", "end"}, {"steps", c.steps}});
  if (writer.dir()) {
    write_text_file(*writer.dir() / "timing.json",
                    json{{"wall_seconds", r.record.wall_seconds}, {"steps", c.steps}}.dump() + "\n");
  }
}

}  // namespace detail

/// Trains from scratch. With steps == 0 the initialized model is returned and the curve is empty.
inline TrainResult train(const TrainConfig& config, const TrainOptions& options = {}) {
  config.validate();
  TrainResult r{{}, initial_model(config), initial_adam(config)};
  r.record.config = to_json(config);
  r.record.config_hash = config_hash(config);
  r.record.seed = config.seed;
  if (options.out_dir) write_text_file(*options.out_dir / "config.json", r.record.config.dump(2) + "\n");
  detail::RunWriter writer(options.out_dir, options.on_event, false);
  writer.emit({{"event", "start"}, {"config", r.record.config}, {"config_hash", r.record.config_hash},
               {"seed", config.seed}});
  detail::run_steps(r, config, 0, writer, options);
  return r;
}

/// Reads the run record of an output directory.
inline RunRecord read_run_record(const std::filesystem::path& dir) {
  std::ifstream in(dir / "run.ndjson");
  if (!in) throw IoError("no run record in " + dir.string());
  RunRecord rec;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json e = json::parse(line);
      const std::string kind = e.at("event");
      if (kind == "start") {
        rec.config = e.at("config");
        rec.config_hash = e.at("config_hash");
        rec.seed = e.at("seed");
      } else if (kind == "step") {
        rec.steps.push_back(step_from_json(e));
      } else if (kind == "checkpoint") {
        rec.checkpoints.push_back(e.at("path"));
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed run record in " + dir.string() + ": " + e.what());
  }
  return rec;
}

/// Latest checkpoint in an output directory, by step number.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  std::optional<std::filesystem::path> best;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "checkpoints", ec)) {
    const auto& p = entry.path();
    if (p.extension() != ".ckpt") continue;
    if (!best || p.filename() > best->filename()) best = p;
  }
  return best;
}

/// Continues the run in `dir` from its latest checkpoint up to `config.steps`.
/// The config must hash like the one that produced the checkpoint.
inline TrainResult resume(const std::filesystem::path& dir, const TrainConfig& config,
                          const TrainOptions& options = {}) {
  config.validate();
  const auto path = latest_checkpoint(dir);
  if (!path) throw IoError("no checkpoint to resume from in " + dir.string());
  Checkpoint ck = load_checkpoint(*path);
  const std::string hash = config_hash(config);
  if (ck.config_hash != hash) {
    throw ConfigError("refusing to resume: checkpoint config hash " + ck.config_hash + " differs from " + hash);
  }
  if (ck.model.widths() != config.layer_widths() || ck.model.activations() != config.activations()) {
    throw ConfigError("refusing to resume: checkpoint architecture differs from config");
  }
  ck.adam.config = initial_adam(config).config;

  RunRecord old = read_run_record(dir);
  TrainResult r{{}, std::move(ck.model), std::move(ck.adam)};
  r.record.config = to_json(config);
  r.record.config_hash = hash;
  r.record.seed = config.seed;
  if (ck.step >= config.steps) {
    r.record.steps = std::move(old.steps);
    r.record.checkpoints = std::move(old.checkpoints);
    return r;
  }

  // Rewrite the record up to the checkpoint, then append.
  std::vector<std::string> kept;
  {
    std::ifstream in(dir / "run.ndjson");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json e = json::parse(line);
      const std::string kind = e.at("event");
      if (kind == "end" || kind == "abort") continue;
      if (kind == "step" && e.at("step").get<std::size_t>() >= ck.step) continue;
      if (kind == "checkpoint" && e.at("step").get<std::size_t>() > ck.step) continue;
      if (kind == "step") r.record.steps.push_back(step_from_json(e));
      if (kind == "checkpoint") r.record.checkpoints.push_back(e.at("path"));
      kept.push_back(line);
    }
  }
  std::string text;
  for (const auto& l : kept) text += l + "\n";
  write_text_file(dir / "run.ndjson", text);
  write_text_file(dir / "config.json", r.record.config.dump(2) + "\n");

  TrainOptions opts = options;
  opts.out_dir = dir;
  detail::RunWriter writer(dir, opts.on_event, true);
  writer.emit({{"event", "resume"}, {"step", ck.step}});
  detail::run_steps(r, config, ck.step, writer, opts);
  return r;
}

}  // namespace tcode
