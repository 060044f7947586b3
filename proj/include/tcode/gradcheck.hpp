#pragma once

// Central finite-difference gradient checks, plus a registry of seeded random
// instances for every loss in the library (used by tests and `tcode gradcheck`).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tcode/autodiff.hpp"
#include "tcode/decomposition.hpp"
#include "tcode/objectives.hpp"
#include "tcode/rng.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf, 1e-10) over all inputs.
inline double relative_gradient_error(const LossBuilder& loss, const std::vector<Tensor>& inputs, double h = 1e-5) {
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var out = loss(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) {
      auto g = tape.grad(v);
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(tape.value(v).size(), 0.0);
    }
  }
  auto evaluate = [&](const std::vector<Tensor>& at) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : at) vars.push_back(tape.constant(t));
    return tape.value(loss(tape, vars))[0];
  };

  double diff = 0.0, scale = 1e-10;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i][k];
      probe[i][k] = x + h;
      const double up = evaluate(probe);
      probe[i][k] = x - h;
      const double down = evaluate(probe);
      probe[i][k] = x;
      const double numeric = (up - down) / (2.0 * h);
      diff = std::max(diff, std::abs(numeric - analytic[i][k]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i][k])});
    }
  }
  return diff / scale;
}

struct GradientCase {
  LossBuilder loss;
  std::vector<Tensor> inputs;
};

struct GradientCaseFamily {
  std::string name;
  std::function<GradientCase(std::uint64_t)> make;
};

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, scale);
  for (double& v : t.data()) v = gauss(rng);
  return t;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline GradientCase barrier_case(BarrierKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = pick(rng, 2, 4), n = pick(rng, 1, 8);
  Tensor z = random_tensor({b, n}, rng);
  BarrierSpec spec{kind, 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(rng), 0.0};
  // Hinge margin between the smallest and largest pair distance so both branches occur.
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double d = std::sqrt(squared_distance(z.row(i), z.row(j)));
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  spec.epsilon = b == 2 ? 1.5 * hi : 0.5 * (lo + hi);
  return {[spec](Tape&, std::span<const Var> in) { return injectivity_loss(in[0], spec); }, {z}};
}

inline GradientCase stack_case(std::uint64_t seed, std::size_t min_points, bool even,
                               std::function<Var(Var)> loss) {
  Rng rng(seed);
  const std::size_t b = pick(rng, min_points, 4), k = pick(rng, 1, 3);
  std::size_t n = pick(rng, 2, 8);
  if (even && n % 2) --n;
  return {[loss](Tape&, std::span<const Var> in) { return loss(in[0]); }, {random_tensor({k + 1, b, n}, rng)}};
}

inline GradientCase finite_case(MatchingStrategy strategy, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = pick(rng, 1, 4), bs = pick(rng, 1, 2), m = pick(rng, 2, 4);
  FiniteGroup group = FiniteGroup::symmetric(bs, m, strategy);
  return {[group](Tape&, std::span<const Var> in) { return finite_group_loss(in[0], in[1], group); },
          {random_tensor({b, bs * m}, rng), random_tensor({b, bs * m}, rng)}};
}

inline GradientCase informed_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = pick(rng, 1, 4), n = pick(rng, 1, 8);
  std::vector<Tensor> actions;
  for (int g = 0; g < 3; ++g) actions.push_back(random_tensor({n, n}, rng));
  std::vector<std::size_t> ids(b);
  for (auto& id : ids) id = pick(rng, 0, 2);
  const GroupObjective objective = GroupObjective::informed(std::move(actions));
  return {[objective, ids](Tape&, std::span<const Var> in) { return informed_loss(in[0], in[1], ids, objective); },
          {random_tensor({b, n}, rng), random_tensor({b, n}, rng)}};
}

inline GradientCase active_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = pick(rng, 3, 4), k = pick(rng, 1, 2);
  DecompositionSpec spec;
  spec.mode = DecompositionMode::active;
  spec.invariance_weight = 0.7;
  spec.blocks = {{pick(rng, 1, 3), GroupObjective::euclidean()}, {2, GroupObjective::conformal()}};
  const std::size_t n = spec.total_dim();
  return {[spec](Tape&, std::span<const Var> in) {
            const std::vector<SubgroupEmbedding> batches{{0, in[0]}, {1, in[1]}};
            return active_loss(batches, spec);
          },
          {random_tensor({k + 1, b, n}, rng), random_tensor({k + 1, b, n}, rng)}};
}

inline GradientCase passive_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t b = pick(rng, 3, 4), k = pick(rng, 1, 3);
  DecompositionSpec spec;
  spec.mode = DecompositionMode::passive;
  spec.blocks = {{pick(rng, 1, 3), GroupObjective::euclidean()}, {2, GroupObjective::orthogonal()},
                 {2, GroupObjective::conformal()}};
  return {[spec](Tape&, std::span<const Var> in) { return passive_loss(in[0], spec); },
          {random_tensor({k + 1, b, spec.total_dim()}, rng)}};
}

}  // namespace detail

/// Every differentiable loss in the library, each as a family of seeded random instances
/// (dims <= 8, batch <= 4).
inline std::vector<GradientCaseFamily> gradient_case_families() {
  using namespace detail;
  return {
      {"hinge", [](std::uint64_t s) { return barrier_case(BarrierKind::hinge, s); }},
      {"reciprocal", [](std::uint64_t s) { return barrier_case(BarrierKind::reciprocal, s); }},
      {"log_barrier", [](std::uint64_t s) { return barrier_case(BarrierKind::log_barrier, s); }},
      {"informed", informed_case},
      {"finite_enumerate", [](std::uint64_t s) { return finite_case(MatchingStrategy::enumerate, s); }},
      {"finite_assignment", [](std::uint64_t s) { return finite_case(MatchingStrategy::assignment, s); }},
      {"finite_chamfer", [](std::uint64_t s) { return finite_case(MatchingStrategy::chamfer, s); }},
      {"euclidean", [](std::uint64_t s) { return stack_case(s, 2, false, [](Var z) { return euclidean_loss(z); }); }},
      {"orthogonal",
       [](std::uint64_t s) { return stack_case(s, 2, false, [](Var z) { return orthogonal_loss(z, false); }); }},
      {"unitary", [](std::uint64_t s) { return stack_case(s, 2, true, [](Var z) { return orthogonal_loss(z, true); }); }},
      {"conformal", [](std::uint64_t s) { return stack_case(s, 3, false, [](Var z) { return conformal_loss(z); }); }},
      {"invariance",
       [](std::uint64_t s) { return stack_case(s, 1, false, [](Var z) { return invariant_feature_loss(z); }); }},
      {"active", active_case},
      {"passive", passive_case},
  };
}

struct GradCheckSummary {
  std::string name;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
};

inline GradCheckSummary run_gradient_family(const GradientCaseFamily& family, std::size_t instances,
                                            std::uint64_t seed = 0, double h = 1e-5) {
  GradCheckSummary out{family.name, instances, 0.0};
  for (std::size_t i = 0; i < instances; ++i) {
    const GradientCase c = family.make(derive_seed(seed, Stream::evaluation, i * 131 + family.name.size()));
    out.max_relative_error = std::max(out.max_relative_error, relative_gradient_error(c.loss, c.inputs, h));
  }
  return out;
}

}  // namespace tcode
