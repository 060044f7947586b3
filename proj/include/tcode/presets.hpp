#pragma once

// Preset run configs for the synthetic experiments. The same documents ship as
// configs/<name>.json.

#include <string>
#include <string_view>
#include <vector>

#include "tcode/config.hpp"

namespace tcode {

namespace detail {

inline TrainConfig doublebump_decomposition(DecompositionMode mode) {
  TrainConfig c;
  c.environment = DoubleBumpWorld{64, 16};
  c.encoder = {{128, 128}, Activation::elu, 4};
  c.objective.reset();
  DecompositionSpec spec;
  spec.mode = mode;
  spec.blocks = {{2, GroupObjective::euclidean()}, {2, GroupObjective::euclidean()}};
  c.decomposition = spec;
  c.barrier = {BarrierKind::log_barrier, 1.0, 1.0};
  c.optimizer = {1e-2, 1e-5, LrSchedule::halve, 1000};
  c.steps = 5000;
  c.batch_size = 64;
  c.transforms = 7;
  c.evaluation.transforms = 7;
  return c;
}

}  // namespace detail

inline TrainConfig doublebump_passive_preset() { return detail::doublebump_decomposition(DecompositionMode::passive); }

inline TrainConfig doublebump_active_preset() { return detail::doublebump_decomposition(DecompositionMode::active); }

inline TrainConfig doublebump_conformal_preset() {
  TrainConfig c;
  c.environment = DoubleBumpWorld{64, 16};
  c.encoder = {{128, 128, 128}, Activation::relu, 4};
  c.objective = GroupObjective::conformal();
  c.barrier = {BarrierKind::log_barrier, 1e-7, 1.0};
  c.optimizer = {1e-3, 1e-7, LrSchedule::constant, 1000};
  c.steps = 10000;
  c.batch_size = 64;
  c.transforms = 15;
  c.evaluation.transforms = 15;
  return c;
}

inline TrainConfig pendulum_preset() {
  TrainConfig c;
  c.environment = PendulumSim{};
  c.encoder = {{128}, Activation::relu, 3};
  c.objective = GroupObjective::euclidean();
  c.objective->reduction = Reduction::sum;
  c.barrier = {BarrierKind::log_barrier, 1.0, 1.0};
  c.optimizer = {1e-3, 1e-7, LrSchedule::constant, 1000};
  c.steps = 5000;
  c.batch_size = 64;
  c.transforms = 3;
  c.evaluation.transforms = 1;
  return c;
}

inline std::vector<std::string> preset_names() {
  return {"doublebump_active", "doublebump_conformal", "doublebump_passive", "pendulum"};
}

inline TrainConfig preset(std::string_view name) {
  if (name == "doublebump_passive") return doublebump_passive_preset();
  if (name == "doublebump_active") return doublebump_active_preset();
  if (name == "doublebump_conformal") return doublebump_conformal_preset();
  if (name == "pendulum") return pendulum_preset();
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

}  // namespace tcode
