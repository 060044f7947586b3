#pragma once

// End-to-end evaluation of a trained encoder against its config: held-out
// preservation residuals, decomposition scores, latent ranking, state probes
// and embedding export. Shared by the command-line tool and the acceptance run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tcode/config.hpp"
#include "tcode/evaluation.hpp"
#include "tcode/trainer.hpp"

namespace tcode {

namespace detail {

// Evaluation-stream indices above every batch index used by evaluation_batches.
inline constexpr std::uint64_t kExportIndex = std::uint64_t{1} << 32;
inline constexpr std::uint64_t kProbeTrainIndex = kExportIndex + 1;
inline constexpr std::uint64_t kProbeTestIndex = kExportIndex + 2;
inline constexpr std::uint64_t kQuadIndex = kExportIndex + 3;
inline constexpr std::uint64_t kRankTrainIndex = kExportIndex + 4;
inline constexpr std::uint64_t kRankTestIndex = kExportIndex + 5;

}  // namespace detail

struct EvaluationSummary {
  PreservationReport whole;
  /// One report per decomposition block, on full-group batches.
  std::vector<PreservationReport> blocks;
  std::optional<std::vector<std::vector<double>>> scores;
  /// Residuals on RL-style transitions, for environments with a finite action set.
  std::optional<PreservationReport> quads;
};

inline json to_json(const EvaluationSummary& s) {
  json j = {{"preservation", to_json(s.whole)}};
  if (!s.blocks.empty()) {
    j["blocks"] = json::array();
    for (const auto& b : s.blocks) j["blocks"].push_back(to_json(b));
  }
  if (s.scores) j["invariance_scores"] = *s.scores;
  if (s.quads) j["quads"] = to_json(*s.quads);
  return j;
}

/// Held-out quads for `config`: per-action buffers rolled out on the evaluation stream.
inline std::vector<TransformBatch> held_out_quads(const TrainConfig& config, std::uint64_t seed) {
  const EvaluationConfig& e = config.evaluation;
  const QuadBuffers buffers = collect_rl_quads(config.environment, e.rl_episodes, e.rl_steps,
                                               derive_seed(seed, Stream::evaluation, detail::kQuadIndex));
  return quad_batches(buffers, e.batches, e.batch_size, seed);
}

/// Every evaluation applicable to the config, drawn from the evaluation stream of `seed`.
inline EvaluationSummary evaluate_model(const TrainConfig& config, const EncoderModel& model, std::uint64_t seed) {
  const EvaluationConfig& e = config.evaluation;
  const Embedder f = embedder_of(model);
  const std::size_t min_points = config.objective && config.objective->kind == ObjectiveKind::conformal ? 3 : 2;
  if (e.batch_size < min_points || e.transforms == 0 || e.batches == 0) {
    throw ConfigError("evaluation needs batches >= 1, batch_size >= " + std::to_string(min_points) +
                      " and transforms >= 1");
  }
  const auto batches = evaluation_batches(config.environment, e.batches, e.batch_size, e.transforms, seed);
  EvaluationSummary out;
  out.whole = preservation_eval(f, batches);
  if (config.decomposition) {
    std::size_t begin = 0;
    for (const auto& block : config.decomposition->blocks) {
      PreservationOptions o;
      o.columns = std::make_pair(begin, begin + block.dim);
      out.blocks.push_back(preservation_eval(f, batches, o));
      begin += block.dim;
    }
    if (subgroup_count(config.environment) == config.decomposition->blocks.size()) {
      out.scores = decomposition_scores(f, config.environment, *config.decomposition, e.batches, e.batch_size,
                                        e.transforms, seed);
    }
  }
  if (has_finite_actions(config.environment)) out.quads = preservation_eval(f, held_out_quads(config, seed));
  return out;
}

/// Fits a latent transition model on one rollout set and ranks another.
inline RankingReport rank_model(const TrainConfig& config, const EncoderModel& model, std::uint64_t seed) {
  if (!has_finite_actions(config.environment)) throw ConfigError("ranking needs an environment with a finite action set");
  const EvaluationConfig& e = config.evaluation;
  const Embedder f = embedder_of(model);
  const QuadBuffers fit = collect_rl_quads(config.environment, e.rl_episodes, e.rl_steps,
                                           derive_seed(seed, Stream::evaluation, detail::kRankTrainIndex));
  const QuadBuffers test = collect_rl_quads(config.environment, e.rl_episodes, e.rl_steps,
                                            derive_seed(seed, Stream::evaluation, detail::kRankTestIndex));
  const LatentTransitions fit_data = encode_transitions(f, fit), test_data = encode_transitions(f, test);
  TransitionFitOptions o;
  o.hidden = e.transition_hidden;
  o.steps = e.transition_steps;
  o.learning_rate = e.transition_learning_rate;
  o.batch_size = e.transition_batch;
  o.seed = seed;
  const TransitionModel transition = fit_transition(fit_data, fit.buffers.size(), o);
  return rank_eval(transition, test_data, reference_latents(fit_data, e.reference_count, seed));
}

/// Embeds `export_count` held-out observations together with their ground-truth states.
inline void export_model(const TrainConfig& config, const EncoderModel& model, std::uint64_t seed,
                         const std::filesystem::path& path) {
  const ObservationSet set = sample_observations(config.environment, config.evaluation.export_count,
                                                 derive_seed(seed, Stream::evaluation, detail::kExportIndex));
  export_embeddings(path, model.embed(set.observations), set.states, set.state_names);
}

struct PendulumProbe {
  double theta_mae = 0.0;
  double omega_sign_accuracy = 0.0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

inline json to_json(const PendulumProbe& p) {
  return {{"theta_circular_mae", p.theta_mae},
          {"omega_sign_accuracy", p.omega_sign_accuracy},
          {"train_count", p.train_count},
          {"test_count", p.test_count}};
}

/// 1-nearest-neighbour regression of (theta, sign omega) from the embedding.
inline PendulumProbe pendulum_probe(const TrainConfig& config, const EncoderModel& model, std::uint64_t seed,
                                    std::size_t train_count = 2000, std::size_t test_count = 500) {
  if (!std::holds_alternative<PendulumSim>(config.environment)) throw ConfigError("state probe needs the pendulum");
  if (train_count == 0 || test_count == 0) throw ConfigError("state probe needs non-empty train and test sets");
  const ObservationSet train = sample_observations(config.environment, train_count,
                                                   derive_seed(seed, Stream::evaluation, detail::kProbeTrainIndex));
  const ObservationSet test = sample_observations(config.environment, test_count,
                                                  derive_seed(seed, Stream::evaluation, detail::kProbeTestIndex));
  const auto nn = nearest_neighbors(model.embed(train.observations), model.embed(test.observations));
  PendulumProbe p{0.0, 0.0, train_count, test_count};
  for (std::size_t i = 0; i < nn.size(); ++i) {
    p.theta_mae += circular_distance(train.states(nn[i], 0), test.states(i, 0));
    p.omega_sign_accuracy += (train.states(nn[i], 1) > 0.0) == (test.states(i, 1) > 0.0) ? 1.0 : 0.0;
  }
  p.theta_mae /= static_cast<double>(test_count);
  p.omega_sign_accuracy /= static_cast<double>(test_count);
  return p;
}

/// Config and final model of a run directory, checked against the checkpoint hash.
struct LoadedRun {
  TrainConfig config;
  EncoderModel model;
  std::size_t step = 0;
};

inline LoadedRun load_run(const std::filesystem::path& dir, const std::vector<std::string>& overrides = {}) {
  json j = read_json_file(dir / "config.json");
  for (const auto& o : overrides) apply_override(j, o);
  TrainConfig config = parse_config(j);
  config.validate();
  const auto path = latest_checkpoint(dir);
  if (!path) throw IoError("no checkpoint in " + dir.string());
  Checkpoint ck = load_checkpoint(*path);
  if (ck.config_hash != config_hash(config)) {
    throw ConfigError("checkpoint " + path->string() + " was trained with a different config");
  }
  return {std::move(config), std::move(ck.model), ck.step};
}

}  // namespace tcode
