#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "tcode/environments.hpp"

using namespace tcode;

namespace {

std::vector<double> observe(const auto& env, const auto& state) {
  std::vector<double> out(env.observation_size());
  env.observe(state, out);
  return out;
}

/// Classical RK4 on the undamped, unforced pendulum.
std::pair<double, double> rk4(double theta, double omega, double g, double h, std::size_t steps) {
  auto f = [g](double th, double om) { return std::pair{om, -g * std::sin(th)}; };
  for (std::size_t i = 0; i < steps; ++i) {
    const auto [a1, b1] = f(theta, omega);
    const auto [a2, b2] = f(theta + 0.5 * h * a1, omega + 0.5 * h * b1);
    const auto [a3, b3] = f(theta + 0.5 * h * a2, omega + 0.5 * h * b2);
    const auto [a4, b4] = f(theta + h * a3, omega + h * b3);
    theta += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    omega += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
  }
  return {theta, omega};
}

/// Largest |E - E0| along a zero-torque semi-implicit trajectory of duration T.
double max_energy_drift(double dt, double duration) {
  PendulumSim p;
  p.dt = dt;
  PendulumSim::State s{1.2, 0.0};
  const double e0 = p.energy(s);
  double drift = 0.0;
  const auto steps = static_cast<std::size_t>(std::lround(duration / dt));
  for (std::size_t i = 0; i < steps; ++i) {
    s = p.step(s, 0.0);
    drift = std::max(drift, std::abs(p.energy(s) - e0));
  }
  return drift;
}

}  // namespace

// ---------------------------------------------------------------------------
// Double bump
// ---------------------------------------------------------------------------

TEST(DoubleBump, SignalShapeAndMass) {
  DoubleBumpWorld w;
  const auto x = observe(w, DoubleBumpWorld::State{0, 32});
  ASSERT_EQ(x.size(), 64u);
  for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(x[p], 1.0);
  // Triangle samples (2t+1)/16 rising then falling; total mass 8.
  EXPECT_DOUBLE_EQ(x[32], 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(x[39], 15.0 / 16.0);
  EXPECT_DOUBLE_EQ(x[40], 15.0 / 16.0);
  double mass = 0.0;
  for (double v : x) mass += v;
  EXPECT_DOUBLE_EQ(mass, 24.0);
  // Overlapping bumps add without clipping.
  const auto overlap = observe(w, DoubleBumpWorld::State{0, 0});
  EXPECT_DOUBLE_EQ(*std::max_element(overlap.begin(), overlap.end()), 1.0 + 15.0 / 16.0);
}

TEST(DoubleBump, ShiftCompositionIsExact) {
  DoubleBumpWorld w;
  for (std::size_t a : {0u, 5u, 63u})
    for (std::size_t b : {1u, 40u})
      for (std::size_t c : {7u, 60u})
        for (std::size_t d : {0u, 33u}) {
          const DoubleBumpWorld::State s{11, 50};
          const auto twice = w.act({c, d}, w.act({a, b}, s));
          const auto once = w.act({(a + c) % 64, (b + d) % 64}, s);
          EXPECT_EQ(observe(w, twice), observe(w, once));
        }
}

TEST(DoubleBump, SubgroupsMoveOneBumpEach) {
  DoubleBumpWorld w;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(w.sample_action(rng, 0).tri, 0u);
    EXPECT_EQ(w.sample_action(rng, 1).rect, 0u);
  }
  // A rectangle-only shift of the state is a cyclic shift of the rectangle component.
  const DoubleBumpWorld::State s{3, 20};
  const auto moved = observe(w, w.act({9, 0}, s));
  for (std::size_t p = 0; p < 64; ++p) {
    EXPECT_DOUBLE_EQ(moved[p], w.rectangle((p + 64 - 12) % 64) + w.triangle((p + 64 - 20) % 64));
  }
  EXPECT_THROW(w.sample_action(rng, 2), ConfigError);
}

TEST(SampleBatch, DoubleBumpWithFifteenTransforms) {
  const auto s = sample_batch(DoubleBumpWorld{}, 64, 15, 9);
  EXPECT_EQ(s.batch.base.shape(), (Shape{64, 64}));
  EXPECT_EQ(s.batch.transformed.shape(), (Shape{15, 64, 64}));
  EXPECT_EQ(s.batch.stacked().shape(), (Shape{16 * 64, 64}));
  EXPECT_EQ(s.truth.transformed_states.shape(), (Shape{15, 64, 2}));
  // Every transformed observation equals the base shifted by the same element.
  DoubleBumpWorld w;
  for (std::size_t k = 0; k < 15; ++k) {
    const DoubleBumpWorld::Action a{static_cast<std::size_t>(s.truth.actions(k, 0)),
                                    static_cast<std::size_t>(s.truth.actions(k, 1))};
    for (std::size_t i = 0; i < 64; i += 9) {
      const DoubleBumpWorld::State st{static_cast<std::size_t>(s.truth.base_states(i, 0)),
                                      static_cast<std::size_t>(s.truth.base_states(i, 1))};
      const auto expected = observe(w, w.act(a, st));
      for (std::size_t p = 0; p < 64; ++p) EXPECT_EQ(s.batch.transformed(k, i, p), expected[p]);
    }
  }
}

TEST(SampleBatch, IdentityElementsReproduceBase) {
  BlockShuffleWorld w;
  w.group = {{0, 1, 2, 3}};
  const auto s = sample_batch(w, 8, 3, 1);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t c = 0; c < w.observation_size(); ++c) EXPECT_EQ(s.batch.transformed(k, i, c), s.batch.base(i, c));
}

TEST(SampleBatch, EqualSeedsAreBitIdenticalForEveryEnvironment) {
  const std::vector<AnyEnvironment> envs{DoubleBumpWorld{}, PendulumSim{}, PlanarRotationWorld{}, BlockShuffleWorld{},
                                         MountainCar{}};
  for (const auto& env : envs) {
    const auto a = sample_batch(env, 6, 2, 77), b = sample_batch(env, 6, 2, 77), c = sample_batch(env, 6, 2, 78);
    EXPECT_EQ(a.batch.base, b.batch.base);
    EXPECT_EQ(a.batch.transformed, b.batch.transformed);
    EXPECT_EQ(a.truth.base_states, b.truth.base_states);
    EXPECT_FALSE(a.batch.base == c.batch.base);
    const auto o1 = sample_observations(env, 5, 4), o2 = sample_observations(env, 5, 4);
    EXPECT_EQ(o1.observations, o2.observations);
  }
}

TEST(SampleBatch, RejectsTinyBatches) {
  EXPECT_THROW(sample_batch(DoubleBumpWorld{}, 1, 3, 0), ConfigError);
  EXPECT_THROW(sample_batch(DoubleBumpWorld{}, 4, 0, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Pendulum
// ---------------------------------------------------------------------------

TEST(Pendulum, RestingStateIsAFixedPoint) {
  PendulumSim p;
  const PendulumSim::State rest{0.0, 0.0};
  const auto next = p.act({0.0}, rest);
  EXPECT_EQ(next.theta, 0.0);
  EXPECT_EQ(next.omega, 0.0);
  const auto x = observe(p, rest);
  EXPECT_TRUE(std::equal(x.begin(), x.begin() + 1024, x.begin() + 1024));
  EXPECT_EQ(observe(p, next), x);
  EXPECT_EQ(*std::max_element(x.begin(), x.end()), 1.0);
}

TEST(Pendulum, RenderingSeparatesNearbyAngles) {
  PendulumSim p;
  std::vector<double> a(1024), b(1024);
  for (double theta = -3.1; theta < 3.1; theta += 0.1) {
    p.render(theta, a);
    p.render(theta + 0.02, b);
    EXPECT_NE(a, b) << theta;
    for (double v : a) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Pendulum, UndampedEnergyDriftIsFirstOrder) {
  // Reference: RK4 at dt/100 keeps the energy essentially exact.
  PendulumSim p;
  const auto [th, om] = rk4(1.2, 0.0, 10.0, 0.0005, 4000);
  EXPECT_NEAR(p.energy({th, om}), p.energy({1.2, 0.0}), 1e-9);
  const double coarse = max_energy_drift(0.05, 5.0), fine = max_energy_drift(0.025, 5.0);
  EXPECT_LT(coarse, 10.0 * 0.05);  // O(dt) with a modest constant
  EXPECT_GT(coarse / fine, 1.6);
  EXPECT_LT(coarse / fine, 2.4);
}

TEST(Pendulum, DampedEnergyIsNonIncreasing) {
  PendulumSim p;
  p.damping = 0.3;
  p.dt = 0.01;
  PendulumSim::State s{2.0, 1.0};
  // Compare energy maxima over consecutive windows longer than the O(dt) wobble.
  double previous = INFINITY;
  for (int window = 0; window < 20; ++window) {
    double peak = -INFINITY;
    for (int i = 0; i < 100; ++i) {
      s = p.step(s, 0.0);
      peak = std::max(peak, p.energy(s));
    }
    EXPECT_LE(peak, previous);
    previous = peak;
  }
}

TEST(Pendulum, SpeedIsClippedAndAngleWrapped) {
  PendulumSim p;
  auto s = p.step({3.1, 7.99}, 2.0);
  EXPECT_LE(std::abs(s.omega), p.max_speed);
  EXPECT_GE(s.theta, -std::numbers::pi);
  EXPECT_LT(s.theta, std::numbers::pi);
  PendulumSim bad;
  bad.torques.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// RL buffers
// ---------------------------------------------------------------------------

TEST(RlQuads, TwoActionsTenStepsFillTen) {
  PendulumSim p;
  p.torques = {-2.0, 2.0};
  const auto q = collect_rl_quads(p, 1, 10, 5);
  EXPECT_EQ(q.buffers.size(), 2u);
  EXPECT_EQ(q.buffers[0].size() + q.buffers[1].size(), 10u);
  EXPECT_EQ(q.total(), 10u);
  for (std::size_t a = 0; a < 2; ++a)
    for (const auto& t : q.buffers[a]) {
      const auto next = p.step({t.state[0], t.state[1]}, p.torques[a]);
      EXPECT_EQ(next.theta, t.next_state[0]);
      EXPECT_EQ(next.omega, t.next_state[1]);
    }
}

TEST(RlQuads, PendulumHasThreeActionBuffers) {
  const auto q = collect_rl_quads(AnyEnvironment{PendulumSim{}}, 4, 50, 1);
  EXPECT_EQ(q.buffers.size(), 3u);
  for (const auto& b : q.buffers) EXPECT_GT(b.size(), 0u);
  EXPECT_THROW(collect_rl_quads(AnyEnvironment{DoubleBumpWorld{}}, 1, 1, 0), ConfigError);
}

TEST(RlQuads, EmptyBufferNamesTheAction) {
  PendulumSim p;
  const auto q = collect_rl_quads(p, 1, 1, 0);
  Rng rng(0);
  std::size_t empty = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    if (!q.buffers[a].empty()) continue;
    ++empty;
    try {
      q.sample(a, 4, rng);
      ADD_FAILURE() << "expected SamplingError";
    } catch (const SamplingError& e) {
      EXPECT_NE(std::string(e.what()).find("action " + std::to_string(a)), std::string::npos);
    }
  }
  EXPECT_EQ(empty, 2u);
}

TEST(RlQuads, ResamplingSeedDoesNotShiftMeanPairwiseDistance) {
  const auto q = collect_rl_quads(PendulumSim{}, 20, 50, 2);
  auto stats = [&](std::uint64_t seed) {
    Rng rng(seed);
    double sum = 0, sq = 0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
      const TransformBatch b = q.sample(i % 3, 8, rng);
      double d = 0;
      for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < b.observation_size(); ++c) d += std::pow(b.base(r, c) - b.base(0, c), 2);
      sum += d;
      sq += d * d;
    }
    const double mean = sum / n;
    return std::pair{mean, (sq / n - mean * mean) / n};
  };
  const auto [ma, va] = stats(10);
  const auto [mb, vb] = stats(11);
  EXPECT_LT(std::abs(ma - mb), 4.0 * std::sqrt(va + vb));
}

// ---------------------------------------------------------------------------
// Other worlds
// ---------------------------------------------------------------------------

TEST(BlockShuffle, ObservationsAreSlotPermutationsOfEachOther) {
  BlockShuffleWorld w;
  const auto s = sample_batch(w, 10, 4, 3);
  const auto f = w.features();
  auto slots = [&](std::span<const double> x) {
    std::vector<std::vector<double>> out;
    for (std::size_t p = 0; p < w.slots; ++p) out.emplace_back(x.begin() + p * 3, x.begin() + p * 3 + 3);
    std::sort(out.begin(), out.end());
    return out;
  };
  auto sorted = f;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(slots(s.batch.base.row(i)), sorted);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(slots(s.batch.transformed.data().subspan((k * 10 + i) * 12, 12)), sorted);
    }
  }
  EXPECT_EQ(w.observation_size(), 12u);
}

TEST(BlockShuffle, ActionComposesAsPermutations) {
  BlockShuffleWorld w;
  const BlockShuffleWorld::State s{{2, 0, 3, 1}};
  const Permutation a{1, 2, 3, 0}, b{3, 2, 1, 0};
  Permutation ba(4);
  for (std::size_t p = 0; p < 4; ++p) ba[p] = b[a[p]];
  EXPECT_EQ(w.act({b}, w.act({a}, s)).order, w.act({ba}, s).order);
}

TEST(PlanarRotation, ActionPreservesDistancesAndComposes) {
  PlanarRotationWorld w;
  const auto a = observe(w, PlanarRotationWorld::State{0.4});
  const auto b = observe(w, w.act({1.1}, PlanarRotationWorld::State{0.4}));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double da = std::hypot(a[2 * i] - a[2 * j], a[2 * i + 1] - a[2 * j + 1]);
      const double db = std::hypot(b[2 * i] - b[2 * j], b[2 * i + 1] - b[2 * j + 1]);
      EXPECT_NEAR(da, db, 1e-14);
    }
  const auto twice = w.act({0.7}, w.act({1.1}, PlanarRotationWorld::State{0.4}));
  EXPECT_NEAR(twice.angle, wrap_angle(2.2), 1e-14);
}

TEST(MountainCar, StaysInBounds) {
  MountainCar m;
  Rng rng(1);
  auto s = m.sample_state(rng);
  for (int i = 0; i < 500; ++i) {
    s = m.act(m.sample_action(rng, std::nullopt), s);
    EXPECT_GE(s.position, m.min_position);
    EXPECT_LE(s.position, m.max_position);
    EXPECT_LE(std::abs(s.velocity), m.max_speed);
  }
  EXPECT_EQ(m.actions().size(), 3u);
}
