#pragma once

// Synthetic G-sets. Each environment exposes a hidden state, a group of
// transformations acting on states, and a deterministic observation map. The
// learner only ever sees observations; states and group elements are returned
// separately as evaluation ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tcode/errors.hpp"
#include "tcode/objectives.hpp"
#include "tcode/rng.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

// clang-format off
template <class E>
concept Environment = requires(const E& env, Rng& rng, const typename E::State& s, const typename E::Action& a,
                               std::span<double> out) {
  { env.observation_size() } -> std::convertible_to<std::size_t>;
  { env.subgroup_count() } -> std::convertible_to<std::size_t>;
  { env.sample_state(rng) } -> std::same_as<typename E::State>;
  { env.sample_action(rng, std::optional<std::size_t>{}) } -> std::same_as<typename E::Action>;
  { env.act(a, s) } -> std::same_as<typename E::State>;
  env.observe(s, out);
  { env.state_names() } -> std::same_as<std::vector<std::string>>;
  { env.state_values(s) } -> std::same_as<std::vector<double>>;
  { env.action_values(a) } -> std::same_as<std::vector<double>>;
};

/// Environments whose transformations come from a finite action set (RL-style).
template <class E>
concept FiniteActionEnvironment = Environment<E> && requires(const E& env) {
  { env.actions() } -> std::same_as<std::vector<typename E::Action>>;
};
// clang-format on

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

/// Anti-aliased segment from `a` to `b` on a square raster: intensity falls off
/// linearly from 1 (within half a pixel of the centre line) to 0 at half_width + 0.5.
inline void draw_segment(std::span<double> raster, std::size_t side, std::array<double, 2> a, std::array<double, 2> b,
                         double half_width) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
      double t = len2 > 0.0 ? ((px - a[0]) * dx + (py - a[1]) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - (a[0] + t * dx), ey = py - (a[1] + t * dy);
      const double d = std::sqrt(ex * ex + ey * ey);
      const double v = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
      double& cell = raster[r * side + c];
      cell = std::max(cell, v);
    }
  }
}

// ---------------------------------------------------------------------------
// Double-bump world: Z_L x Z_L acting by independent cyclic shifts.
// ---------------------------------------------------------------------------

struct DoubleBumpWorld {
  struct State {
    std::size_t rect = 0;
    std::size_t tri = 0;
  };
  /// Shift amounts; subgroup 0 moves only the rectangle, subgroup 1 only the triangle.
  struct Action {
    std::size_t rect = 0;
    std::size_t tri = 0;
  };

  std::size_t length = 64;
  std::size_t width = 16;

  void validate() const {
    if (length < 2 || width == 0 || width > length) throw ConfigError("double bump needs 0 < width <= length");
  }

  std::size_t observation_size() const { return length; }
  std::size_t subgroup_count() const { return 2; }

  double rectangle(std::size_t t) const { return t < width ? 1.0 : 0.0; }
  double triangle(std::size_t t) const {
    if (t >= width) return 0.0;
    const double w = static_cast<double>(width);
    return 1.0 - std::abs(2.0 * static_cast<double>(t) - (w - 1.0)) / w;
  }

  State sample_state(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> shift(0, length - 1);
    State s;
    s.rect = shift(rng);
    s.tri = shift(rng);
    return s;
  }

  Action sample_action(Rng& rng, std::optional<std::size_t> subgroup) const {
    std::uniform_int_distribution<std::size_t> shift(0, length - 1);
    Action a;
    if (!subgroup || *subgroup == 0) a.rect = shift(rng);
    if (!subgroup || *subgroup == 1) a.tri = shift(rng);
    if (subgroup && *subgroup > 1) throw ConfigError("double bump has two subgroups");
    return a;
  }

  State act(const Action& a, const State& s) const { return {(s.rect + a.rect) % length, (s.tri + a.tri) % length}; }

  void observe(const State& s, std::span<double> out) const {
    for (std::size_t p = 0; p < length; ++p) {
      out[p] = rectangle((p + length - s.rect) % length) + triangle((p + length - s.tri) % length);
    }
  }

  std::vector<std::string> state_names() const { return {"rect_shift", "tri_shift"}; }
  std::vector<double> state_values(const State& s) const {
    return {static_cast<double>(s.rect), static_cast<double>(s.tri)};
  }
  std::vector<double> action_values(const Action& a) const {
    return {static_cast<double>(a.rect), static_cast<double>(a.tri)};
  }
};

// ---------------------------------------------------------------------------
// Pendulum: theta'' = -(g/l) sin(theta) - damping * omega + u, semi-implicit Euler.
// theta = 0 hangs straight down. Observation: two consecutive 32x32 frames.
// ---------------------------------------------------------------------------

struct PendulumSim {
  struct State {
    double theta = 0.0;
    double omega = 0.0;
  };
  struct Action {
    double torque = 0.0;
  };

  double gravity = 10.0;
  double rod_length = 1.0;
  double dt = 0.05;
  double damping = 0.0;
  double max_speed = 8.0;
  std::vector<double> torques{-2.0, 0.0, 2.0};
  /// Reset distribution: theta uniform on the circle, omega uniform in [-reset_speed, reset_speed].
  double reset_speed = 4.0;
  std::size_t resolution = 32;

  void validate() const {
    if (!(dt > 0.0) || !(rod_length > 0.0) || !(max_speed > 0.0)) throw ConfigError("pendulum needs positive dt, length, max speed");
    if (torques.empty()) throw ConfigError("pendulum needs at least one torque");
    if (resolution < 4) throw ConfigError("pendulum resolution too small");
    if (reset_speed < 0.0 || reset_speed > max_speed) throw ConfigError("pendulum reset speed must lie in [0, max_speed]");
  }

  std::size_t frame_size() const { return resolution * resolution; }
  std::size_t observation_size() const { return 2 * frame_size(); }
  std::size_t subgroup_count() const { return 1; }

  State step(const State& s, double torque) const {
    State n;
    n.omega = s.omega + dt * (-(gravity / rod_length) * std::sin(s.theta) - damping * s.omega + torque);
    n.omega = std::clamp(n.omega, -max_speed, max_speed);
    n.theta = wrap_angle(s.theta + dt * n.omega);
    return n;
  }

  double energy(const State& s) const {
    return 0.5 * s.omega * s.omega - (gravity / rod_length) * std::cos(s.theta);
  }

  State sample_state(Rng& rng) const {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-reset_speed, reset_speed);
    State s;
    s.theta = angle(rng);
    s.omega = speed(rng);
    return s;
  }

  std::vector<Action> actions() const {
    std::vector<Action> out;
    for (double t : torques) out.push_back({t});
    return out;
  }

  Action sample_action(Rng& rng, std::optional<std::size_t> subgroup) const {
    if (subgroup && *subgroup != 0) throw ConfigError("pendulum has a single action group");
    std::uniform_int_distribution<std::size_t> pick(0, torques.size() - 1);
    return {torques[pick(rng)]};
  }

  State act(const Action& a, const State& s) const { return step(s, a.torque); }

  void render(double theta, std::span<double> frame) const {
    std::fill(frame.begin(), frame.end(), 0.0);
    const double side = static_cast<double>(resolution);
    const std::array<double, 2> pivot{side / 2.0, side / 2.0};
    const double reach = 0.42 * side;
    const std::array<double, 2> tip{pivot[0] + reach * std::sin(theta), pivot[1] + reach * std::cos(theta)};
    draw_segment(frame, resolution, pivot, tip, 1.0);
  }

  /// Frames at the previous step (theta - dt * omega) and the current step.
  void observe(const State& s, std::span<double> out) const {
    render(s.theta - dt * s.omega, out.first(frame_size()));
    render(s.theta, out.subspan(frame_size(), frame_size()));
  }

  std::vector<std::string> state_names() const { return {"theta", "omega"}; }
  std::vector<double> state_values(const State& s) const { return {s.theta, s.omega}; }
  std::vector<double> action_values(const Action& a) const { return {a.torque}; }
};

// ---------------------------------------------------------------------------
// Mountain car (classic-control dynamics), rendered like the pendulum.
// ---------------------------------------------------------------------------

struct MountainCar {
  struct State {
    double position = -0.5;
    double velocity = 0.0;
  };
  struct Action {
    int push = 0;  // -1, 0, +1
  };

  double force = 0.001;
  double gravity = 0.0025;
  double min_position = -1.2;
  double max_position = 0.6;
  double max_speed = 0.07;
  std::size_t resolution = 32;

  void validate() const {
    if (!(max_position > min_position) || !(max_speed > 0.0)) throw ConfigError("mountain car bounds invalid");
  }

  std::size_t frame_size() const { return resolution * resolution; }
  std::size_t observation_size() const { return 2 * frame_size(); }
  std::size_t subgroup_count() const { return 1; }

  State sample_state(Rng& rng) const {
    std::uniform_real_distribution<double> pos(min_position, max_position);
    std::uniform_real_distribution<double> vel(-max_speed, max_speed);
    State s;
    s.position = pos(rng);
    s.velocity = vel(rng);
    return s;
  }

  std::vector<Action> actions() const { return {{-1}, {0}, {1}}; }

  Action sample_action(Rng& rng, std::optional<std::size_t> subgroup) const {
    if (subgroup && *subgroup != 0) throw ConfigError("mountain car has a single action group");
    std::uniform_int_distribution<int> pick(-1, 1);
    return {pick(rng)};
  }

  State act(const Action& a, const State& s) const {
    State n = s;
    n.velocity += a.push * force - gravity * std::cos(3.0 * s.position);
    n.velocity = std::clamp(n.velocity, -max_speed, max_speed);
    n.position = std::clamp(n.position + n.velocity, min_position, max_position);
    if (n.position == min_position && n.velocity < 0.0) n.velocity = 0.0;
    return n;
  }

  void render(double position, std::span<double> frame) const {
    std::fill(frame.begin(), frame.end(), 0.0);
    const double side = static_cast<double>(resolution);
    const double u = (position - min_position) / (max_position - min_position);
    const double x = 2.0 + u * (side - 4.0);
    const double y = side / 2.0 - 0.4 * side * std::sin(3.0 * position);
    draw_segment(frame, resolution, {x, y}, {x, y}, 1.5);
  }

  void observe(const State& s, std::span<double> out) const {
    render(s.position - s.velocity, out.first(frame_size()));
    render(s.position, out.subspan(frame_size(), frame_size()));
  }

  std::vector<std::string> state_names() const { return {"position", "velocity"}; }
  std::vector<double> state_values(const State& s) const { return {s.position, s.velocity}; }
  std::vector<double> action_values(const Action& a) const { return {static_cast<double>(a.push)}; }
};

// ---------------------------------------------------------------------------
// Planar rotation: SO(2) acting on a fixed point set; observation = coordinates.
// ---------------------------------------------------------------------------

struct PlanarRotationWorld {
  struct State {
    double angle = 0.0;
  };
  struct Action {
    double angle = 0.0;
  };

  std::vector<std::array<double, 2>> points{{1.0, 0.0}, {0.3, 0.8}, {-0.6, 0.2}, {-0.1, -0.7}, {0.5, -0.4}};

  void validate() const {
    if (points.empty()) throw ConfigError("planar rotation needs at least one point");
  }

  std::size_t observation_size() const { return 2 * points.size(); }
  std::size_t subgroup_count() const { return 1; }

  State sample_state(Rng& rng) const {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    return {angle(rng)};
  }

  Action sample_action(Rng& rng, std::optional<std::size_t> subgroup) const {
    if (subgroup && *subgroup != 0) throw ConfigError("planar rotation has a single action group");
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    return {angle(rng)};
  }

  State act(const Action& a, const State& s) const { return {wrap_angle(s.angle + a.angle)}; }

  void observe(const State& s, std::span<double> out) const {
    const double c = std::cos(s.angle), sn = std::sin(s.angle);
    for (std::size_t i = 0; i < points.size(); ++i) {
      out[2 * i] = c * points[i][0] - sn * points[i][1];
      out[2 * i + 1] = sn * points[i][0] + c * points[i][1];
    }
  }

  std::vector<std::string> state_names() const { return {"angle"}; }
  std::vector<double> state_values(const State& s) const { return {s.angle}; }
  std::vector<double> action_values(const Action& a) const { return {a.angle}; }
};

// ---------------------------------------------------------------------------
// Block shuffle: a permutation group reorders m fixed object slots.
// ---------------------------------------------------------------------------

struct BlockShuffleWorld {
  struct State {
    Permutation order;  // order[s] = object shown in slot s
  };
  struct Action {
    Permutation perm;  // content of slot p moves to slot perm[p]
  };

  std::size_t slots = 4;
  std::size_t slot_width = 3;
  std::vector<Permutation> group;  // empty = full symmetric group
  std::uint64_t feature_seed = 17;

  void validate() const {
    if (slots == 0 || slot_width == 0) throw ConfigError("block shuffle needs positive slots and width");
    if (!group.empty()) FiniteGroup{slot_width, slots, group, MatchingStrategy::enumerate}.validate();
  }

  std::vector<Permutation> members() const { return group.empty() ? all_permutations(slots) : group; }

  std::vector<std::vector<double>> features() const {
    Rng rng(feature_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> f(slots, std::vector<double>(slot_width));
    for (auto& row : f) {
      for (double& v : row) v = gauss(rng);
    }
    return f;
  }

  std::size_t observation_size() const { return slots * slot_width; }
  std::size_t subgroup_count() const { return 1; }

  State sample_state(Rng& rng) const {
    Permutation identity(slots);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    return act(sample_action(rng, std::nullopt), State{identity});
  }

  Action sample_action(Rng& rng, std::optional<std::size_t> subgroup) const {
    if (subgroup && *subgroup != 0) throw ConfigError("block shuffle has a single action group");
    const auto all = members();
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    return {all[pick(rng)]};
  }

  State act(const Action& a, const State& s) const {
    State n{Permutation(slots)};
    for (std::size_t p = 0; p < slots; ++p) n.order[a.perm[p]] = s.order[p];
    return n;
  }

  void observe(const State& s, std::span<double> out) const {
    const auto f = features();
    for (std::size_t p = 0; p < slots; ++p) {
      std::copy(f[s.order[p]].begin(), f[s.order[p]].end(), out.begin() + static_cast<std::ptrdiff_t>(p * slot_width));
    }
  }

  std::vector<std::string> state_names() const {
    std::vector<std::string> names;
    for (std::size_t p = 0; p < slots; ++p) names.push_back("slot" + std::to_string(p));
    return names;
  }
  std::vector<double> state_values(const State& s) const { return {s.order.begin(), s.order.end()}; }
  std::vector<double> action_values(const Action& a) const { return {a.perm.begin(), a.perm.end()}; }
};

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// B base observations and K transformed copies; copy k of every observation
/// used the same (unknown to the learner) group element.
struct TransformBatch {
  Tensor base;         // [B x D]
  Tensor transformed;  // [K x B x D]

  std::size_t batch_size() const { return base.dim(0); }
  std::size_t transform_count() const { return transformed.dim(0); }
  std::size_t observation_size() const { return base.dim(1); }

  /// Observations stacked as [((K+1) * B) x D], base first.
  Tensor stacked() const {
    const std::size_t b = batch_size(), k = transform_count(), d = observation_size();
    std::vector<double> data;
    data.reserve((k + 1) * b * d);
    data.insert(data.end(), base.data().begin(), base.data().end());
    data.insert(data.end(), transformed.data().begin(), transformed.data().end());
    return Tensor(Shape{(k + 1) * b, d}, std::move(data));
  }
};

/// Hidden states and group elements behind a batch. Evaluation only.
struct GroundTruth {
  std::vector<std::string> state_names;
  Tensor base_states;         // [B x S]
  Tensor transformed_states;  // [K x B x S]
  Tensor actions;             // [K x A]
};

struct SampledBatch {
  TransformBatch batch;
  GroundTruth truth;
};

/// Draws B i.i.d. states and K group elements (optionally from one subgroup).
template <Environment Env>
SampledBatch sample_batch(const Env& env, std::size_t batch_size, std::size_t transforms, std::uint64_t seed,
                          std::optional<std::size_t> subgroup = std::nullopt) {
  if (batch_size < 2) throw ConfigError("sample_batch needs B >= 2");
  if (transforms < 1) throw ConfigError("sample_batch needs K >= 1");
  Rng rng(seed);
  const std::size_t d = env.observation_size();
  const auto names = env.state_names();
  const std::size_t s = names.size();

  std::vector<typename Env::State> states;
  states.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) states.push_back(env.sample_state(rng));
  std::vector<typename Env::Action> actions;
  actions.reserve(transforms);
  for (std::size_t k = 0; k < transforms; ++k) actions.push_back(env.sample_action(rng, subgroup));

  SampledBatch out;
  out.batch.base = Tensor(Shape{batch_size, d});
  out.batch.transformed = Tensor(Shape{transforms, batch_size, d});
  out.truth.state_names = names;
  out.truth.base_states = Tensor(Shape{batch_size, s});
  out.truth.transformed_states = Tensor(Shape{transforms, batch_size, s});
  const std::size_t a_width = env.action_values(actions.front()).size();
  out.truth.actions = Tensor(Shape{transforms, a_width});

  for (std::size_t i = 0; i < batch_size; ++i) {
    env.observe(states[i], out.batch.base.row(i));
    const auto sv = env.state_values(states[i]);
    std::copy(sv.begin(), sv.end(), out.truth.base_states.row(i).begin());
  }
  for (std::size_t k = 0; k < transforms; ++k) {
    const auto av = env.action_values(actions[k]);
    std::copy(av.begin(), av.end(), out.truth.actions.row(k).begin());
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto moved = env.act(actions[k], states[i]);
      env.observe(moved, out.batch.transformed.data().subspan((k * batch_size + i) * d, d));
      const auto sv = env.state_values(moved);
      std::copy(sv.begin(), sv.end(), out.truth.transformed_states.data().begin() +
                                          static_cast<std::ptrdiff_t>((k * batch_size + i) * s));
    }
  }
  return out;
}

/// Observations and state variables of `count` independently sampled states.
struct ObservationSet {
  Tensor observations;  // [N x D]
  Tensor states;        // [N x S]
  std::vector<std::string> state_names;
};

template <Environment Env>
ObservationSet sample_observations(const Env& env, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  ObservationSet out;
  out.state_names = env.state_names();
  out.observations = Tensor(Shape{count, env.observation_size()});
  out.states = Tensor(Shape{count, out.state_names.size()});
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = env.sample_state(rng);
    env.observe(s, out.observations.row(i));
    const auto sv = env.state_values(s);
    std::copy(sv.begin(), sv.end(), out.states.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// RL-style per-action transition buffers
// ---------------------------------------------------------------------------

struct Transition {
  std::vector<double> observation;
  std::vector<double> next_observation;
  std::vector<double> state;
  std::vector<double> next_state;
};

/// One buffer per action. Any two transitions from the same buffer were produced
/// by the same action, which is what the pairwise objectives need.
struct QuadBuffers {
  std::vector<std::vector<double>> action_values;
  std::vector<std::vector<Transition>> buffers;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& b : buffers) n += b.size();
    return n;
  }

  /// K = 1 batch of `count` transitions drawn uniformly with replacement from one buffer.
  TransformBatch sample(std::size_t action, std::size_t count, Rng& rng) const {
    if (action >= buffers.size()) throw SamplingError("no buffer for action index " + std::to_string(action));
    const auto& buf = buffers[action];
    if (buf.empty()) {
      std::string name;
      for (double v : action_values[action]) name += (name.empty() ? "" : ",") + std::to_string(v);
      throw SamplingError("buffer for action " + std::to_string(action) + " (" + name + ") is empty");
    }
    const std::size_t d = buf.front().observation.size();
    TransformBatch out{Tensor(Shape{count, d}), Tensor(Shape{1, count, d})};
    std::uniform_int_distribution<std::size_t> pick(0, buf.size() - 1);
    for (std::size_t i = 0; i < count; ++i) {
      const Transition& t = buf[pick(rng)];
      std::copy(t.observation.begin(), t.observation.end(), out.base.row(i).begin());
      std::copy(t.next_observation.begin(), t.next_observation.end(), out.transformed.row(i).begin());
    }
    return out;
  }
};

/// Unrolls episodes with uniformly random actions and files each transition under its action.
template <FiniteActionEnvironment Env>
QuadBuffers collect_rl_quads(const Env& env, std::size_t episodes, std::size_t steps_per_episode,
                             std::uint64_t seed) {
  const auto actions = env.actions();
  if (actions.empty()) throw ConfigError("environment exposes no actions");
  Rng rng(seed);
  QuadBuffers out;
  out.buffers.resize(actions.size());
  for (const auto& a : actions) out.action_values.push_back(env.action_values(a));
  std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
  const std::size_t d = env.observation_size();
  for (std::size_t e = 0; e < episodes; ++e) {
    auto state = env.sample_state(rng);
    for (std::size_t t = 0; t < steps_per_episode; ++t) {
      const std::size_t a = pick(rng);
      auto next = env.act(actions[a], state);
      Transition tr{std::vector<double>(d), std::vector<double>(d), env.state_values(state), env.state_values(next)};
      env.observe(state, tr.observation);
      env.observe(next, tr.next_observation);
      out.buffers[a].push_back(std::move(tr));
      state = next;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runtime selection
// ---------------------------------------------------------------------------

using AnyEnvironment = std::variant<DoubleBumpWorld, PendulumSim, PlanarRotationWorld, BlockShuffleWorld, MountainCar>;

inline std::size_t observation_size(const AnyEnvironment& env) {
  return std::visit([](const auto& e) { return e.observation_size(); }, env);
}

inline std::size_t subgroup_count(const AnyEnvironment& env) {
  return std::visit([](const auto& e) { return e.subgroup_count(); }, env);
}

inline std::vector<std::string> state_names(const AnyEnvironment& env) {
  return std::visit([](const auto& e) { return e.state_names(); }, env);
}

inline SampledBatch sample_batch(const AnyEnvironment& env, std::size_t batch_size, std::size_t transforms,
                                 std::uint64_t seed, std::optional<std::size_t> subgroup = std::nullopt) {
  return std::visit([&](const auto& e) { return sample_batch(e, batch_size, transforms, seed, subgroup); }, env);
}

inline ObservationSet sample_observations(const AnyEnvironment& env, std::size_t count, std::uint64_t seed) {
  return std::visit([&](const auto& e) { return sample_observations(e, count, seed); }, env);
}

inline bool has_finite_actions(const AnyEnvironment& env) {
  return std::visit([](const auto& e) { return FiniteActionEnvironment<std::decay_t<decltype(e)>>; }, env);
}

inline QuadBuffers collect_rl_quads(const AnyEnvironment& env, std::size_t episodes, std::size_t steps_per_episode,
                                    std::uint64_t seed) {
  return std::visit(
      [&](const auto& e) -> QuadBuffers {
        if constexpr (FiniteActionEnvironment<std::decay_t<decltype(e)>>) {
          return collect_rl_quads(e, episodes, steps_per_episode, seed);
        } else {
          throw ConfigError("environment has no finite action set");
        }
      },
      env);
}

}  // namespace tcode
