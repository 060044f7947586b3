#pragma once

// Run configuration: a single JSON document, parsed strictly (unknown keys are
// errors). Missing keys take defaults, and to_json() writes every field back so
// the echoed config re-runs to the same result.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcode/decomposition.hpp"
#include "tcode/environments.hpp"
#include "tcode/errors.hpp"
#include "tcode/hash.hpp"
#include "tcode/mlp.hpp"
#include "tcode/objectives.hpp"

namespace tcode {

using nlohmann::json;

enum class LrSchedule { constant, halve };

struct EncoderConfig {
  std::vector<std::size_t> hidden{128, 128};
  Activation activation = Activation::elu;
  std::size_t output_dim = 4;
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-7;
  LrSchedule schedule = LrSchedule::constant;
  std::size_t halve_every = 1000;

  double rate_at(std::size_t step) const {
    if (schedule == LrSchedule::constant) return learning_rate;
    return std::ldexp(learning_rate, -static_cast<int>(step / halve_every));
  }
};

/// Settings for evaluation commands (eval, rank, export).
struct EvaluationConfig {
  std::size_t batches = 8;
  std::size_t batch_size = 64;
  std::size_t transforms = 3;
  std::size_t export_count = 1000;
  std::size_t reference_count = 64;
  std::size_t rl_episodes = 40;
  std::size_t rl_steps = 50;
  std::vector<std::size_t> transition_hidden{64};
  std::size_t transition_steps = 2000;
  double transition_learning_rate = 1e-2;
  std::size_t transition_batch = 64;
};

struct TrainConfig {
  int version = 1;
  std::uint64_t seed = 0;
  AnyEnvironment environment = DoubleBumpWorld{};
  EncoderConfig encoder;
  std::optional<GroupObjective> objective = GroupObjective::euclidean();
  std::optional<DecompositionSpec> decomposition;
  BarrierSpec barrier;
  OptimizerConfig optimizer;
  std::size_t steps = 5000;
  std::size_t batch_size = 64;
  std::size_t transforms = 3;
  std::size_t checkpoint_every = 500;
  EvaluationConfig evaluation;

  std::vector<std::size_t> layer_widths() const {
    std::vector<std::size_t> w{observation_size(environment)};
    w.insert(w.end(), encoder.hidden.begin(), encoder.hidden.end());
    w.push_back(encoder.output_dim);
    return w;
  }
  std::vector<Activation> activations() const {
    return std::vector<Activation>(encoder.hidden.size(), encoder.activation);
  }
  bool active() const { return decomposition && decomposition->mode == DecompositionMode::active; }

  /// Checks everything that would otherwise fail mid-run.
  void validate() const {
    if (version != 1) throw ConfigError("unsupported config version " + std::to_string(version));
    std::visit([](const auto& e) { e.validate(); }, environment);
    if (encoder.output_dim == 0) throw ConfigError("encoder.output_dim must be positive");
    for (std::size_t h : encoder.hidden) {
      if (h == 0) throw ConfigError("encoder.hidden widths must be positive");
    }
    if (objective.has_value() == decomposition.has_value()) {
      throw ConfigError("config needs exactly one of 'objective' or 'decomposition'");
    }
    if (objective) {
      if (objective->kind == ObjectiveKind::informed) {
        throw ConfigError("informed objectives need known group elements and are not trainable from environment batches");
      }
      objective->validate(encoder.output_dim);
    } else {
      decomposition->validate(encoder.output_dim);
      if (decomposition->mode == DecompositionMode::active &&
          decomposition->blocks.size() != subgroup_count(environment)) {
        throw ConfigError("active decomposition needs one block per environment subgroup (" +
                          std::to_string(subgroup_count(environment)) + ")");
      }
    }
    barrier.validate();
    if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate)) {
      throw ConfigError("optimizer.learning_rate must be positive");
    }
    if (optimizer.weight_decay < 0.0 || !std::isfinite(optimizer.weight_decay)) {
      throw ConfigError("optimizer.weight_decay must be >= 0");
    }
    if (optimizer.schedule == LrSchedule::halve && optimizer.halve_every == 0) {
      throw ConfigError("optimizer.halve_every must be positive for the halve schedule");
    }
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (transforms < 1) throw ConfigError("transforms must be >= 1");
    const bool conformal = [&] {
      if (objective) return objective->kind == ObjectiveKind::conformal;
      for (const auto& b : decomposition->blocks) {
        if (b.objective.kind == ObjectiveKind::conformal) return true;
      }
      return false;
    }();
    if (conformal && batch_size < 3) throw ConfigError("conformal objectives need batch_size >= 3");
    if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
    if (evaluation.batch_size < 2 || evaluation.transforms < 1 || evaluation.batches == 0) {
      throw ConfigError("evaluation needs batch_size >= 2, transforms >= 1, batches >= 1");
    }
    if (evaluation.reference_count < 2) throw ConfigError("evaluation.reference_count must be >= 2");
  }
};

// ---------------------------------------------------------------------------
// Strict reading helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Object reader that remembers consumed keys and rejects the rest.
class Reader {
public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(child(key) + " has the wrong type (" + std::string(j_.at(key).type_name()) + ")");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + child(key) + "'");
    }
  }

private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline AnyEnvironment parse_environment(const json& j, const std::string& path) {
  Reader r(j, path);
  std::string kind = "double_bump";
  r.get("kind", kind);
  AnyEnvironment env;
  if (kind == "double_bump") {
    DoubleBumpWorld e;
    r.get("length", e.length);
    r.get("width", e.width);
    env = e;
  } else if (kind == "pendulum") {
    PendulumSim e;
    r.get("gravity", e.gravity);
    r.get("rod_length", e.rod_length);
    r.get("dt", e.dt);
    r.get("damping", e.damping);
    r.get("max_speed", e.max_speed);
    r.get("torques", e.torques);
    r.get("reset_speed", e.reset_speed);
    r.get("resolution", e.resolution);
    env = e;
  } else if (kind == "planar_rotation") {
    PlanarRotationWorld e;
    r.get("points", e.points);
    env = e;
  } else if (kind == "block_shuffle") {
    BlockShuffleWorld e;
    r.get("slots", e.slots);
    r.get("slot_width", e.slot_width);
    r.get("group", e.group);
    r.get("feature_seed", e.feature_seed);
    env = e;
  } else if (kind == "mountain_car") {
    MountainCar e;
    r.get("force", e.force);
    r.get("gravity", e.gravity);
    r.get("min_position", e.min_position);
    r.get("max_position", e.max_position);
    r.get("max_speed", e.max_speed);
    r.get("resolution", e.resolution);
    env = e;
  } else {
    throw ConfigError("unknown environment kind '" + kind + "'");
  }
  r.finish();
  return env;
}

inline json environment_to_json(const AnyEnvironment& env) {
  return std::visit(
      [](const auto& e) -> json {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, DoubleBumpWorld>) {
          return {{"kind", "double_bump"}, {"length", e.length}, {"width", e.width}};
        } else if constexpr (std::is_same_v<E, PendulumSim>) {
          return {{"kind", "pendulum"},       {"gravity", e.gravity},     {"rod_length", e.rod_length},
                  {"dt", e.dt},               {"damping", e.damping},     {"max_speed", e.max_speed},
                  {"torques", e.torques},     {"reset_speed", e.reset_speed}, {"resolution", e.resolution}};
        } else if constexpr (std::is_same_v<E, PlanarRotationWorld>) {
          return {{"kind", "planar_rotation"}, {"points", e.points}};
        } else if constexpr (std::is_same_v<E, BlockShuffleWorld>) {
          return {{"kind", "block_shuffle"},
                  {"slots", e.slots},
                  {"slot_width", e.slot_width},
                  {"group", e.group},
                  {"feature_seed", e.feature_seed}};
        } else {
          return {{"kind", "mountain_car"},        {"force", e.force},         {"gravity", e.gravity},
                  {"min_position", e.min_position}, {"max_position", e.max_position}, {"max_speed", e.max_speed},
                  {"resolution", e.resolution}};
        }
      },
      env);
}

inline GroupObjective parse_objective(const json& j, const std::string& path) {
  Reader r(j, path);
  std::string kind = "euclidean", reduction = "mean";
  r.get("kind", kind);
  r.get("reduction", reduction);
  GroupObjective o;
  o.kind = parse_objective_kind(kind);
  if (reduction == "mean") {
    o.reduction = Reduction::mean;
  } else if (reduction == "sum") {
    o.reduction = Reduction::sum;
  } else {
    throw ConfigError("unknown reduction '" + reduction + "' at " + r.child("reduction"));
  }
  r.get("include_diagonal", o.include_diagonal);
  r.get("max_triples", o.max_triples);
  if (o.kind == ObjectiveKind::finite) {
    std::string strategy = "assignment";
    r.get("block_size", o.finite.block_size);
    r.get("block_count", o.finite.block_count);
    r.get("strategy", strategy);
    r.get("permutations", o.finite.permutations);
    o.finite.strategy = parse_matching_strategy(strategy);
    if (o.finite.permutations.empty()) o.finite.permutations = all_permutations(o.finite.block_count);
  }
  if (o.kind == ObjectiveKind::informed) {
    std::vector<std::vector<std::vector<double>>> actions;
    r.get("latent_actions", actions);
    for (const auto& m : actions) {
      const std::size_t n = m.size();
      std::vector<double> flat;
      for (const auto& row : m) {
        if (row.size() != n) throw ConfigError("latent action matrices must be square");
        flat.insert(flat.end(), row.begin(), row.end());
      }
      o.latent_actions.emplace_back(Shape{n, n}, flat);
    }
  }
  r.finish();
  return o;
}

inline json objective_to_json(const GroupObjective& o) {
  json j = {{"kind", to_string(o.kind)},
            {"reduction", o.reduction == Reduction::mean ? "mean" : "sum"},
            {"include_diagonal", o.include_diagonal},
            {"max_triples", o.max_triples}};
  if (o.kind == ObjectiveKind::finite) {
    j["block_size"] = o.finite.block_size;
    j["block_count"] = o.finite.block_count;
    j["strategy"] = to_string(o.finite.strategy);
    j["permutations"] = o.finite.permutations;
  }
  if (o.kind == ObjectiveKind::informed) {
    json actions = json::array();
    for (const Tensor& a : o.latent_actions) {
      json m = json::array();
      for (std::size_t r = 0; r < a.dim(0); ++r) m.push_back(std::vector<double>(a.row(r).begin(), a.row(r).end()));
      actions.push_back(m);
    }
    j["latent_actions"] = actions;
  }
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing and serialization
// ---------------------------------------------------------------------------

inline TrainConfig parse_config(const json& j) {
  using detail::Reader;
  Reader r(j, "");
  TrainConfig c;
  r.get("version", c.version);
  r.get("seed", c.seed);
  if (r.has("environment")) c.environment = detail::parse_environment(r.at("environment"), "environment");

  if (r.has("encoder")) {
    Reader e(r.at("encoder"), "encoder");
    std::string activation = std::string(to_string(c.encoder.activation));
    e.get("hidden", c.encoder.hidden);
    e.get("activation", activation);
    e.get("output_dim", c.encoder.output_dim);
    c.encoder.activation = parse_activation(activation);
    e.finish();
  }

  const bool has_objective = r.has("objective"), has_decomposition = r.has("decomposition");
  if (has_objective && has_decomposition) throw ConfigError("config needs exactly one of 'objective' or 'decomposition'");
  if (has_objective) c.objective = detail::parse_objective(r.at("objective"), "objective");
  if (has_decomposition) {
    c.objective.reset();
    Reader d(r.at("decomposition"), "decomposition");
    DecompositionSpec spec;
    std::string mode = "passive";
    d.get("mode", mode);
    d.get("invariance_weight", spec.invariance_weight);
    spec.mode = parse_decomposition_mode(mode);
    if (d.has("blocks")) {
      const json& blocks = d.at("blocks");
      if (!blocks.is_array()) throw ConfigError("decomposition.blocks must be an array");
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string path = "decomposition.blocks." + std::to_string(i);
        Reader b(blocks[i], path);
        BlockSpec block;
        b.get("dim", block.dim);
        if (b.has("objective")) block.objective = detail::parse_objective(b.at("objective"), path + ".objective");
        b.finish();
        spec.blocks.push_back(std::move(block));
      }
    }
    d.finish();
    c.decomposition = std::move(spec);
  }

  if (r.has("barrier")) {
    Reader b(r.at("barrier"), "barrier");
    std::string kind = std::string(to_string(c.barrier.kind));
    b.get("kind", kind);
    b.get("coefficient", c.barrier.coefficient);
    b.get("epsilon", c.barrier.epsilon);
    c.barrier.kind = parse_barrier_kind(kind);
    b.finish();
  }

  if (r.has("optimizer")) {
    Reader o(r.at("optimizer"), "optimizer");
    std::string schedule = "constant";
    o.get("learning_rate", c.optimizer.learning_rate);
    o.get("weight_decay", c.optimizer.weight_decay);
    o.get("schedule", schedule);
    o.get("halve_every", c.optimizer.halve_every);
    if (schedule == "constant") {
      c.optimizer.schedule = LrSchedule::constant;
    } else if (schedule == "halve") {
      c.optimizer.schedule = LrSchedule::halve;
    } else {
      throw ConfigError("unknown optimizer.schedule '" + schedule + "' (expected constant or halve)");
    }
    o.finish();
  }

  r.get("steps", c.steps);
  r.get("batch_size", c.batch_size);
  r.get("transforms", c.transforms);
  r.get("checkpoint_every", c.checkpoint_every);

  if (r.has("evaluation")) {
    Reader e(r.at("evaluation"), "evaluation");
    auto& v = c.evaluation;
    e.get("batches", v.batches);
    e.get("batch_size", v.batch_size);
    e.get("transforms", v.transforms);
    e.get("export_count", v.export_count);
    e.get("reference_count", v.reference_count);
    e.get("rl_episodes", v.rl_episodes);
    e.get("rl_steps", v.rl_steps);
    e.get("transition_hidden", v.transition_hidden);
    e.get("transition_steps", v.transition_steps);
    e.get("transition_learning_rate", v.transition_learning_rate);
    e.get("transition_batch", v.transition_batch);
    e.finish();
  }
  r.finish();
  return c;
}

inline json to_json(const TrainConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["environment"] = detail::environment_to_json(c.environment);
  j["encoder"] = {{"hidden", c.encoder.hidden},
                  {"activation", to_string(c.encoder.activation)},
                  {"output_dim", c.encoder.output_dim}};
  if (c.objective) j["objective"] = detail::objective_to_json(*c.objective);
  if (c.decomposition) {
    json blocks = json::array();
    for (const auto& b : c.decomposition->blocks) {
      blocks.push_back({{"dim", b.dim}, {"objective", detail::objective_to_json(b.objective)}});
    }
    j["decomposition"] = {{"mode", to_string(c.decomposition->mode)},
                          {"invariance_weight", c.decomposition->invariance_weight},
                          {"blocks", blocks}};
  }
  j["barrier"] = {{"kind", to_string(c.barrier.kind)},
                  {"coefficient", c.barrier.coefficient},
                  {"epsilon", c.barrier.epsilon}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"schedule", c.optimizer.schedule == LrSchedule::constant ? "constant" : "halve"},
                    {"halve_every", c.optimizer.halve_every}};
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["transforms"] = c.transforms;
  j["checkpoint_every"] = c.checkpoint_every;
  const auto& v = c.evaluation;
  j["evaluation"] = {{"batches", v.batches},
                     {"batch_size", v.batch_size},
                     {"transforms", v.transforms},
                     {"export_count", v.export_count},
                     {"reference_count", v.reference_count},
                     {"rl_episodes", v.rl_episodes},
                     {"rl_steps", v.rl_steps},
                     {"transition_hidden", v.transition_hidden},
                     {"transition_steps", v.transition_steps},
                     {"transition_learning_rate", v.transition_learning_rate},
                     {"transition_batch", v.transition_batch}};
  return j;
}

/// Git-style content hash of the training-relevant config. Run length and
/// checkpoint cadence are excluded so a run can be resumed with more steps.
inline std::string config_hash(const TrainConfig& c) {
  json j = to_json(c);
  j.erase("steps");
  j.erase("checkpoint_every");
  j.erase("evaluation");
  return git_blob_hash(j.dump());
}

// ---------------------------------------------------------------------------
// Overrides and files
// ---------------------------------------------------------------------------

/// Applies `key=value` with a dotted key path. The value is read as JSON when it
/// parses as JSON and as a plain string otherwise. Numeric segments index arrays.
inline void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = key.find('.', begin);
    const std::string part = key.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
    json* next = nullptr;
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(part);
      } catch (const std::exception&) {
        throw ConfigError("override key '" + key + "': '" + part + "' is not an array index");
      }
      if (index >= node->size()) throw ConfigError("override key '" + key + "': index out of range");
      next = &(*node)[index];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
      next = &(*node)[part];
    }
    node = next;
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  *node = std::move(value);
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace tcode
