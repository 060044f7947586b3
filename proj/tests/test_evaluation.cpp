#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tcode/evaluation.hpp"

using namespace tcode;

namespace {

Tensor rows(std::size_t n, std::size_t d, std::uint64_t seed) { return oracle::gaussian(Shape{n, d}, seed); }

/// Applies x -> s R x + c to every row.
Tensor similarity(const Tensor& z, std::uint64_t seed) {
  const std::size_t d = z.dim(1);
  const Eigen::MatrixXd r = oracle::random_orthogonal(d, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.3, 4.0), shift(-3.0, 3.0);
  const double s = scale(rng);
  std::vector<double> c(d);
  for (double& v : c) v = shift(rng);
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.dim(0); ++i)
    for (std::size_t p = 0; p < d; ++p) {
      double acc = 0.0;
      for (std::size_t q = 0; q < d; ++q) acc += r(p, q) * z(i, q);
      out(i, p) = s * acc + c[p];
    }
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "tcode_evaluation";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Residuals, Summary) {
  const ResidualStats s = summarize({0.5, 0.1, 0.4, 0.2, 0.3});
  EXPECT_DOUBLE_EQ(s.median, 0.3);
  EXPECT_DOUBLE_EQ(s.p90, 0.5);
  EXPECT_DOUBLE_EQ(s.max, 0.5);
  EXPECT_EQ(s.count, 5u);
  EXPECT_DOUBLE_EQ(relative_residual(2.0, 1.0), 1.0 / (2.0 + 1e-8));
}

TEST(Preservation, MatchesHandLoopOnSmallBatch) {
  const Tensor z = oracle::gaussian(Shape{2, 3, 2}, 91);
  std::vector<double> d, p, c;
  collect_residuals(z, {}, d, p, c);
  ASSERT_EQ(d.size(), 3u);
  ASSERT_EQ(c.size(), 3u);
  std::size_t at = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j, ++at) {
      const double d0 = oracle::distance(z, 0, i, j), d1 = oracle::distance(z, 1, i, j);
      EXPECT_NEAR(d[at], std::abs(d0 - d1) / (d0 + 1e-8), 1e-12);
      const double p0 = oracle::inner(z, 0, i, j), p1 = oracle::inner(z, 1, i, j);
      EXPECT_NEAR(p[at], std::abs(p0 - p1) / (std::abs(p0) + 1e-8), 1e-12);
    }
  // Vertex-centred triples, in generation order: vertex 0 {1,2}, vertex 1 {0,2}, vertex 2 {0,1}.
  const std::size_t triples[3][3] = {{1, 0, 2}, {0, 1, 2}, {0, 2, 1}};
  for (std::size_t t = 0; t < 3; ++t) {
    const double c0 = oracle::cosine(z, 0, triples[t][0], triples[t][1], triples[t][2]);
    const double c1 = oracle::cosine(z, 1, triples[t][0], triples[t][1], triples[t][2]);
    EXPECT_NEAR(c[t], std::abs(c0 - c1) / (std::abs(c0) + 1e-8), 1e-12);
  }
}

TEST(Preservation, IdentityEncoderOnPlanarRotationIsExact) {
  const AnyEnvironment env = PlanarRotationWorld{};
  const auto batches = evaluation_batches(env, 4, 16, 3, 8);
  const PreservationReport r = preservation_eval([](const Tensor& x) { return x; }, batches);
  EXPECT_LT(r.distance.max, 1e-10);
  EXPECT_LT(r.inner_product.max, 1e-10);
  EXPECT_LT(r.cosine.max, 1e-10);
  EXPECT_EQ(r.distance.count, 4u * (16 * 15 / 2) * 6);
}

TEST(Preservation, ColumnRangeSelectsBlock) {
  const Tensor z = oracle::gaussian(Shape{2, 5, 4}, 12);
  std::vector<double> d_block, p, c, d_ref, p2, c2;
  PreservationOptions o;
  o.columns = std::make_pair(std::size_t{2}, std::size_t{4});
  collect_residuals(z, o, d_block, p, c);
  Tensor sliced(Shape{2, 5, 2});
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t q = 0; q < 2; ++q) sliced(k, i, q) = z(k, i, 2 + q);
  collect_residuals(sliced, {}, d_ref, p2, c2);
  EXPECT_EQ(d_block, d_ref);
  EXPECT_EQ(c, c2);
  o.columns = std::make_pair(std::size_t{3}, std::size_t{5});
  EXPECT_THROW(collect_residuals(z, o, d_block, p, c), DimensionError);
}

TEST(Preservation, UntrainedModelSmoke) {
  const AnyEnvironment env = DoubleBumpWorld{};
  const EncoderModel m = EncoderModel::initialized({64, 16, 4}, {Activation::elu}, 1);
  const PreservationReport r = preservation_eval(embedder_of(m), evaluation_batches(env, 2, 8, 2, 1));
  EXPECT_GT(r.distance.count, 0u);
  EXPECT_TRUE(std::isfinite(r.distance.median));
  EXPECT_GE(r.distance.median, 0.0);
}

TEST(Ranking, HandExamples) {
  // True candidate at distance 0.5, references at 0.2 and 0.9 -> rank 2.
  const Tensor pred(Shape{1, 1}, {0.0}), truth(Shape{1, 1}, {0.5}), refs(Shape{2, 1}, {0.2, -0.9});
  const RankingReport r = rank_latents(pred, truth, refs);
  EXPECT_EQ(r.ranks, std::vector<std::size_t>{2});
  EXPECT_DOUBLE_EQ(r.hits_at_1, 0.0);
  EXPECT_DOUBLE_EQ(r.mrr, 0.5);
}

TEST(Ranking, ExactPredictionRanksFirst) {
  const Tensor truth = rows(10, 3, 4), refs = rows(6, 3, 5);
  const RankingReport r = rank_latents(truth, truth, refs);
  EXPECT_DOUBLE_EQ(r.hits_at_1, 1.0);
  EXPECT_DOUBLE_EQ(r.mrr, 1.0);
}

TEST(Ranking, AllTiedTakesWorstRank) {
  // Prediction at the origin, every candidate on the unit circle's axis points.
  const Tensor pred(Shape{1, 2}, {0.0, 0.0}), truth(Shape{1, 2}, {1.0, 0.0});
  const Tensor refs(Shape{3, 2}, {-1.0, 0.0, 0.0, 1.0, 0.0, -1.0});
  const RankingReport r = rank_latents(pred, truth, refs);
  EXPECT_EQ(r.ranks, std::vector<std::size_t>{4});
  const Tensor collapsed(Shape{3, 2}, 0.0), zero(Shape{1, 2}, 0.0);
  EXPECT_DOUBLE_EQ(rank_latents(zero, zero, collapsed).hits_at_1, 0.0);
}

TEST(Ranking, MatchesSortOracleWithTies) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> grid(-2, 2);
  for (int trial = 0; trial < 200; ++trial) {
    // Integer grid points make ties common.
    Tensor pred(Shape{5, 2}), truth(Shape{5, 2}), refs(Shape{7, 2});
    for (Tensor* t : {&pred, &truth, &refs})
      for (double& v : t->data()) v = grid(rng);
    const RankingReport r = rank_latents(pred, truth, refs);
    double mrr = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<double> ref_d;
      for (std::size_t k = 0; k < 7; ++k) ref_d.push_back(std::hypot(pred(i, 0) - refs(k, 0), pred(i, 1) - refs(k, 1)));
      const std::size_t expected =
          oracle::worst_rank_by_sort(std::hypot(pred(i, 0) - truth(i, 0), pred(i, 1) - truth(i, 1)), ref_d);
      EXPECT_EQ(r.ranks[i], expected);
      mrr += 1.0 / static_cast<double>(expected);
    }
    EXPECT_DOUBLE_EQ(r.mrr, mrr / 5.0);
  }
}

TEST(Ranking, InvariantUnderSimilarity) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor pred = rows(20, 4, seed), truth = rows(20, 4, seed + 100), refs = rows(8, 4, seed + 200);
    const RankingReport a = rank_latents(pred, truth, refs);
    const RankingReport b = rank_latents(similarity(pred, seed), similarity(truth, seed), similarity(refs, seed));
    EXPECT_EQ(a.hits_at_1, b.hits_at_1);
    EXPECT_EQ(a.mrr, b.mrr);
    EXPECT_EQ(a.mrr == 1.0, a.hits_at_1 == 1.0);
  }
}

TEST(Ranking, Preconditions) {
  const Tensor a = rows(3, 2, 1);
  EXPECT_THROW(rank_latents(Tensor(Shape{0, 2}), Tensor(Shape{0, 2}), rows(3, 2, 2)), ContractViolation);
  EXPECT_THROW(rank_latents(a, a, rows(1, 2, 2)), ContractViolation);
  EXPECT_THROW(rank_latents(a, rows(3, 3, 2), rows(3, 2, 2)), DimensionError);
}

TEST(Transition, LearnsLinearLatentDynamics) {
  // z' = z + v_a for three actions.
  const std::vector<std::vector<double>> v = {{0.5, -0.2}, {0.0, 0.3}, {-0.4, 0.1}};
  auto make = [&](std::size_t n, std::uint64_t seed) {
    LatentTransitions d{oracle::gaussian(Shape{n, 2}, seed), std::vector<std::size_t>(n), Tensor(Shape{n, 2})};
    for (std::size_t i = 0; i < n; ++i) {
      d.actions[i] = i % 3;
      for (std::size_t c = 0; c < 2; ++c) d.z_next(i, c) = d.z(i, c) + v[i % 3][c];
    }
    return d;
  };
  const LatentTransitions train = make(600, 1), held = make(200, 2);
  TransitionFitOptions o;
  o.steps = 2000;
  o.seed = 3;
  const TransitionModel m = fit_transition(train, 3, o);
  const Tensor pred = m.predict(held.z, held.actions);
  double mse = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) mse += std::pow(pred[k] - held.z_next[k], 2);
  mse /= static_cast<double>(held.z.dim(0));
  EXPECT_LT(mse, 1e-3);
}

TEST(Transition, ZeroStepsAndDeterminism) {
  LatentTransitions d{rows(10, 2, 1), std::vector<std::size_t>(10, 1), rows(10, 2, 2)};
  TransitionFitOptions o;
  o.steps = 0;
  o.seed = 9;
  const TransitionModel untrained = fit_transition(d, 2, o);
  const TransitionModel fresh(2, 2, o.hidden, 9);
  EXPECT_TRUE(untrained.network().weight(0) == fresh.network().weight(0));
  o.steps = 25;
  const TransitionModel a = fit_transition(d, 2, o), b = fit_transition(d, 2, o);
  EXPECT_TRUE(a.predict(d.z, d.actions) == b.predict(d.z, d.actions));
  EXPECT_THROW(a.predict(d.z, std::vector<std::size_t>(10, 5)), ConfigError);
}

TEST(Transition, RankEvalEndToEnd) {
  const PendulumSim small{10.0, 1.0, 0.05, 0.0, 8.0, {-2.0, 0.0, 2.0}, 4.0, 8};
  const QuadBuffers buffers = collect_rl_quads(AnyEnvironment(small), 4, 10, 3);
  const Embedder f = [](const Tensor& x) { return x; };
  const LatentTransitions data = encode_transitions(f, buffers);
  EXPECT_EQ(data.z.dim(0), 40u);
  const Tensor refs = reference_latents(data, 16, 1);
  EXPECT_EQ(refs.dim(0), 16u);
  TransitionFitOptions o;
  o.steps = 5;
  const RankingReport r = rank_eval(fit_transition(data, 3, o), data, refs);
  EXPECT_GE(r.hits_at_1, 0.0);
  EXPECT_LE(r.mrr, 1.0);
  EXPECT_GE(r.mrr, r.hits_at_1);
}

TEST(Export, RowsHeaderAndRoundTrip) {
  const Tensor z = rows(2, 3, 8);
  const Tensor states(Shape{2, 2}, {0.1, -1.0 / 3.0, 2.5e-300, 7.0});
  const auto path = scratch("embeddings.csv");
  export_embeddings(path, z, states, {"theta", "omega"});
  const CsvTable t = read_csv(path);
  EXPECT_EQ(t.header, (std::vector<std::string>{"z0", "z1", "z2", "theta", "omega"}));
  ASSERT_EQ(t.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(t.rows[i][c], z(i, c));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(t.rows[i][3 + c], states(i, c));
  }
}

TEST(Export, QuotesAwkwardHeaders) {
  const auto path = scratch("quoted.csv");
  export_embeddings(path, Tensor(Shape{1, 1}, {1.0}), Tensor(Shape{1, 1}, {2.0}), {"a,\"b\""});
  EXPECT_EQ(read_csv(path).header.back(), "a,\"b\"");
  EXPECT_THROW(export_embeddings(path, Tensor(Shape{1, 1}), Tensor(Shape{2, 1}), {"x"}), DimensionError);
  EXPECT_THROW(read_csv(scratch("absent.csv")), IoError);
}

TEST(Export, PendulumHasStateColumns) {
  const AnyEnvironment env = PendulumSim{};
  const ObservationSet obs = sample_observations(env, 3, 1);
  EXPECT_EQ(obs.state_names, (std::vector<std::string>{"theta", "omega"}));
  EXPECT_EQ(obs.states.dim(1), 2u);
}

TEST(NearestNeighbor, PicksClosestRow) {
  const Tensor train(Shape{3, 1}, {0.0, 10.0, 5.0}), query(Shape{2, 1}, {6.0, -1.0});
  EXPECT_EQ(nearest_neighbors(train, query), (std::vector<std::size_t>{2, 0}));
  EXPECT_NEAR(circular_distance(3.1, -3.1), 2.0 * std::numbers::pi - 6.2, 1e-12);
}
