#pragma once

// Test-time metrics for trained encoders: preservation residuals, latent
// transition ranking (H@1 / MRR), embedding export.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcode/adam.hpp"
#include "tcode/autodiff.hpp"
#include "tcode/config.hpp"
#include "tcode/decomposition.hpp"
#include "tcode/environments.hpp"
#include "tcode/errors.hpp"
#include "tcode/mlp.hpp"
#include "tcode/objectives.hpp"
#include "tcode/rng.hpp"

namespace tcode {

/// Any map from observations [N x D] to embeddings [N x n].
using Embedder = std::function<Tensor(const Tensor&)>;

inline Embedder embedder_of(const EncoderModel& model) {
  return [&model](const Tensor& x) { return model.embed(x); };
}

// ---------------------------------------------------------------------------
// Preservation residuals
// ---------------------------------------------------------------------------

struct ResidualStats {
  double median = 0.0;
  double p90 = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

struct PreservationReport {
  ResidualStats distance;
  ResidualStats inner_product;
  ResidualStats cosine;
};

inline double relative_residual(double before, double after) {
  return std::abs(before - after) / (std::abs(before) + 1e-8);
}

/// Nearest-rank quantiles.
inline ResidualStats summarize(std::vector<double> values) {
  ResidualStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
  };
  s.median = at(0.5);
  s.p90 = at(0.9);
  s.max = values.back();
  return s;
}

struct PreservationOptions {
  /// Embedding columns to evaluate, [begin, end); whole embedding when unset.
  std::optional<std::pair<std::size_t, std::size_t>> columns;
  std::size_t max_triples = 4096;
  std::uint64_t triple_seed = 0;
};

/// Residuals of a stacked embedding z_all [(K+1) x B x n] over all point pairs
/// i < j and slice pairs a < b. Cosines use (sampled) vertex triples.
inline void collect_residuals(const Tensor& z_all, const PreservationOptions& opts, std::vector<double>& distance,
                              std::vector<double>& inner, std::vector<double>& cosine) {
  require_rank(z_all, 3, "preservation");
  const std::size_t slices = z_all.dim(0), b = z_all.dim(1);
  const std::size_t lo = opts.columns ? opts.columns->first : 0;
  const std::size_t hi = opts.columns ? opts.columns->second : z_all.dim(2);
  if (lo >= hi || hi > z_all.dim(2)) throw DimensionError("preservation: column range outside the embedding");
  auto vec = [&](std::size_t k, std::size_t i) { return z_all.row(k * b + i).subspan(lo, hi - lo); };

  std::vector<double> d(slices), p(slices), c(slices);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      for (std::size_t k = 0; k < slices; ++k) {
        d[k] = std::sqrt(detail::squared_distance(vec(k, i), vec(k, j)));
        p[k] = detail::dot(vec(k, i), vec(k, j));
      }
      for (std::size_t a = 0; a < slices; ++a) {
        for (std::size_t e = a + 1; e < slices; ++e) {
          distance.push_back(relative_residual(d[a], d[e]));
          inner.push_back(relative_residual(p[a], p[e]));
        }
      }
    }
  }
  if (b < 3) return;
  for (const detail::Triple& t : detail::conformal_triples(b, opts.max_triples, opts.triple_seed)) {
    bool degenerate = false;
    for (std::size_t k = 0; k < slices; ++k) {
      const auto u0 = vec(k, t.first), v0 = vec(k, t.vertex), w0 = vec(k, t.second);
      double uw = 0.0, uu = 0.0, ww = 0.0;
      for (std::size_t q = 0; q < u0.size(); ++q) {
        const double u = u0[q] - v0[q], w = w0[q] - v0[q];
        uw += u * w;
        uu += u * u;
        ww += w * w;
      }
      const double nu = std::sqrt(uu), nw = std::sqrt(ww);
      degenerate = degenerate || nu < distance_floor || nw < distance_floor;
      c[k] = degenerate ? 0.0 : uw / (nu * nw);
    }
    if (degenerate) continue;
    for (std::size_t a = 0; a < slices; ++a) {
      for (std::size_t e = a + 1; e < slices; ++e) cosine.push_back(relative_residual(c[a], c[e]));
    }
  }
}

/// Embeds every batch in one pass each and aggregates residuals.
inline PreservationReport preservation_eval(const Embedder& f, std::span<const TransformBatch> batches,
                                            const PreservationOptions& opts = {}) {
  std::vector<double> distance, inner, cosine;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const TransformBatch& batch = batches[i];
    const Tensor z = f(batch.stacked());
    const Tensor z_all = z.reshaped(Shape{batch.transform_count() + 1, batch.batch_size(), z.dim(1)});
    PreservationOptions local = opts;
    local.triple_seed = opts.triple_seed + i;
    collect_residuals(z_all, local, distance, inner, cosine);
  }
  return {summarize(std::move(distance)), summarize(std::move(inner)), summarize(std::move(cosine))};
}

/// Held-out batches drawn from the evaluation stream of `seed` (disjoint from training draws).
inline std::vector<TransformBatch> evaluation_batches(const AnyEnvironment& env, std::size_t count,
                                                      std::size_t batch_size, std::size_t transforms,
                                                      std::uint64_t seed,
                                                      std::optional<std::size_t> subgroup = std::nullopt) {
  std::vector<TransformBatch> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t index = subgroup ? (i << 8) + *subgroup + 1 : i << 8;
    out.push_back(sample_batch(env, batch_size, transforms, derive_seed(seed, Stream::evaluation, index), subgroup).batch);
  }
  return out;
}

/// Held-out quads: K = 1 batches from per-action transition buffers.
inline std::vector<TransformBatch> quad_batches(const QuadBuffers& buffers, std::size_t count, std::size_t batch_size,
                                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, Stream::evaluation, 0xffff));
  std::vector<TransformBatch> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(buffers.sample(i % buffers.buffers.size(), batch_size, rng));
  return out;
}

/// Invariance scores of a decomposition, one held-out batch set per subgroup.
inline std::vector<std::vector<double>> decomposition_scores(const Embedder& f, const AnyEnvironment& env,
                                                             const DecompositionSpec& spec, std::size_t count,
                                                             std::size_t batch_size, std::size_t transforms,
                                                             std::uint64_t seed) {
  std::vector<SubgroupEmbeddingValues> values;
  for (std::size_t g = 0; g < subgroup_count(env); ++g) {
    for (const TransformBatch& batch : evaluation_batches(env, count, batch_size, transforms, seed, g)) {
      const Tensor z = f(batch.stacked());
      values.push_back({g, z.reshaped(Shape{transforms + 1, batch_size, z.dim(1)})});
    }
  }
  return invariance_score(values, spec);
}

inline json to_json(const ResidualStats& s) {
  return {{"median", s.median}, {"p90", s.p90}, {"max", s.max}, {"count", s.count}};
}

inline json to_json(const PreservationReport& r) {
  return {{"distance", to_json(r.distance)}, {"inner_product", to_json(r.inner_product)}, {"cosine", to_json(r.cosine)}};
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

struct RankingReport {
  double hits_at_1 = 0.0;
  double mrr = 0.0;
  std::size_t reference_count = 0;
  std::size_t instances = 0;
  std::vector<std::size_t> ranks;
};

inline json to_json(const RankingReport& r) {
  return {{"hits_at_1", r.hits_at_1},
          {"mrr", r.mrr},
          {"reference_count", r.reference_count},
          {"instances", r.instances},
          {"tie_policy", "worst"}};
}

/// 1-based rank of the true candidate among {truth} ∪ references by distance to
/// `prediction`; a tie counts against the true candidate.
inline std::size_t worst_rank(std::span<const double> prediction, std::span<const double> truth,
                              const Tensor& references) {
  const double target = detail::squared_distance(prediction, truth);
  std::size_t rank = 1;
  for (std::size_t r = 0; r < references.dim(0); ++r) rank += detail::squared_distance(prediction, references.row(r)) <= target;
  return rank;
}

/// Row i of `predicted` is scored against row i of `truth` and every reference row.
inline RankingReport rank_latents(const Tensor& predicted, const Tensor& truth, const Tensor& references) {
  require_rank(predicted, 2, "rank predictions");
  if (predicted.shape() != truth.shape()) throw DimensionError("rank: predictions and truths differ in shape");
  if (predicted.dim(0) == 0) throw ContractViolation("rank_eval needs at least one transition");
  if (references.rank() != 2 || references.dim(0) < 2 || references.dim(1) != predicted.dim(1)) {
    throw ContractViolation("rank_eval needs at least two references of the embedding width");
  }
  RankingReport r;
  r.reference_count = references.dim(0);
  r.instances = predicted.dim(0);
  double hits = 0.0, reciprocal = 0.0;
  for (std::size_t i = 0; i < predicted.dim(0); ++i) {
    const std::size_t rank = worst_rank(predicted.row(i), truth.row(i), references);
    r.ranks.push_back(rank);
    hits += rank == 1;
    reciprocal += 1.0 / static_cast<double>(rank);
  }
  r.hits_at_1 = hits / static_cast<double>(r.instances);
  r.mrr = reciprocal / static_cast<double>(r.instances);
  return r;
}

// ---------------------------------------------------------------------------
// Latent transition model
// ---------------------------------------------------------------------------

/// Predicts z' = z + g([z, onehot(a)]) with an MLP g.
class TransitionModel {
public:
  TransitionModel() = default;
  TransitionModel(std::size_t latent_dim, std::size_t action_count, const std::vector<std::size_t>& hidden,
                  std::uint64_t seed)
      : latent_(latent_dim), actions_(action_count) {
    if (latent_dim == 0 || action_count == 0) throw ConfigError("transition model needs latent dim and actions");
    std::vector<std::size_t> widths{latent_dim + action_count};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(latent_dim);
    mlp_ = EncoderModel::initialized(widths, std::vector<Activation>(hidden.size(), Activation::relu),
                                     derive_seed(seed, Stream::transition));
  }

  std::size_t latent_dim() const { return latent_; }
  std::size_t action_count() const { return actions_; }
  EncoderModel& network() { return mlp_; }
  const EncoderModel& network() const { return mlp_; }

  Tensor inputs(const Tensor& z, std::span<const std::size_t> actions) const {
    if (z.rank() != 2 || z.dim(1) != latent_ || z.dim(0) != actions.size()) {
      throw DimensionError("transition model expects [N x " + std::to_string(latent_) + "] latents and N actions");
    }
    Tensor in(Shape{z.dim(0), latent_ + actions_});
    for (std::size_t i = 0; i < z.dim(0); ++i) {
      if (actions[i] >= actions_) throw ConfigError("action index " + std::to_string(actions[i]) + " out of range");
      std::copy(z.row(i).begin(), z.row(i).end(), in.row(i).begin());
      in(i, latent_ + actions[i]) = 1.0;
    }
    return in;
  }

  Tensor predict(const Tensor& z, std::span<const std::size_t> actions) const {
    Tensor out = mlp_.embed(inputs(z, actions));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += z[k];
    return out;
  }

  Var predict(Tape& tape, const Tensor& z, std::span<const std::size_t> actions) {
    return add(mlp_.forward(tape.constant(inputs(z, actions))), tape.constant(z));
  }

private:
  std::size_t latent_ = 0;
  std::size_t actions_ = 0;
  EncoderModel mlp_;
};

struct TransitionFitOptions {
  std::vector<std::size_t> hidden{64};
  std::size_t steps = 2000;
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Latent transitions (z, a, z') with the encoder already applied (and frozen).
struct LatentTransitions {
  Tensor z;
  std::vector<std::size_t> actions;
  Tensor z_next;
};

/// Adam on mean squared prediction error over seeded minibatches.
inline TransitionModel fit_transition(const LatentTransitions& data, std::size_t action_count,
                                      const TransitionFitOptions& opts) {
  const std::size_t n = data.z.dim(1), count = data.z.dim(0);
  if (count == 0) throw ContractViolation("fit_transition needs at least one transition");
  if (data.z_next.shape() != data.z.shape() || data.actions.size() != count) {
    throw DimensionError("fit_transition: inconsistent transition arrays");
  }
  TransitionModel model(n, action_count, opts.hidden, opts.seed);
  AdamState adam;
  adam.config.learning_rate = opts.learning_rate;
  Rng rng(derive_seed(opts.seed, Stream::transition, 1));
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  const std::size_t b = std::min(opts.batch_size, count);
  const auto params = model.network().parameters();
  for (std::size_t step = 0; step < opts.steps; ++step) {
    Tensor z(Shape{b, n}), target(Shape{b, n});
    std::vector<std::size_t> actions(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t k = pick(rng);
      std::copy(data.z.row(k).begin(), data.z.row(k).end(), z.row(i).begin());
      for (std::size_t c = 0; c < n; ++c) target(i, c) = -data.z_next(k, c);
      actions[i] = data.actions[k];
    }
    Tape tape;
    model.network().zero_grad();
    Var loss = scale(squared_norm(add(model.predict(tape, z, actions), tape.constant(std::move(target)))),
                     1.0 / static_cast<double>(b));
    if (!std::isfinite(tape.value(loss)[0])) {
      throw NumericalError("non-finite transition loss at step " + std::to_string(step));
    }
    tape.backward(loss);
    adam_step(adam, params);
  }
  return model;
}

/// Frozen-encoder transitions from per-action buffers.
inline LatentTransitions encode_transitions(const Embedder& f, const QuadBuffers& buffers) {
  std::vector<const Transition*> all;
  std::vector<std::size_t> actions;
  for (std::size_t a = 0; a < buffers.buffers.size(); ++a) {
    for (const Transition& t : buffers.buffers[a]) {
      all.push_back(&t);
      actions.push_back(a);
    }
  }
  if (all.empty()) throw SamplingError("no transitions to encode");
  const std::size_t d = all.front()->observation.size();
  Tensor x(Shape{all.size(), d}), x_next(Shape{all.size(), d});
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::copy(all[i]->observation.begin(), all[i]->observation.end(), x.row(i).begin());
    std::copy(all[i]->next_observation.begin(), all[i]->next_observation.end(), x_next.row(i).begin());
  }
  return {f(x), std::move(actions), f(x_next)};
}

/// Reference observations drawn uniformly from the buffers' next observations.
inline Tensor reference_latents(const LatentTransitions& data, std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, Stream::references));
  std::uniform_int_distribution<std::size_t> pick(0, data.z_next.dim(0) - 1);
  Tensor refs(Shape{count, data.z_next.dim(1)});
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t k = pick(rng);
    std::copy(data.z_next.row(k).begin(), data.z_next.row(k).end(), refs.row(r).begin());
  }
  return refs;
}

/// H@1 / MRR of a fitted transition model on held-out latent transitions.
inline RankingReport rank_eval(const TransitionModel& transition, const LatentTransitions& held_out,
                               const Tensor& references) {
  return rank_latents(transition.predict(held_out.z, held_out.actions), held_out.z_next, references);
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per observation: z0..z{n-1}, then the state variables.
inline std::string embeddings_csv(const Tensor& z, const Tensor& states, const std::vector<std::string>& state_names) {
  require_rank(z, 2, "export embeddings");
  if (states.rank() != 2 || states.dim(0) != z.dim(0) || states.dim(1) != state_names.size()) {
    throw DimensionError("export: state table does not match the embeddings");
  }
  std::string out;
  for (std::size_t c = 0; c < z.dim(1); ++c) out += (c ? "," : "") + csv_field("z" + std::to_string(c));
  for (const auto& name : state_names) out += "," + csv_field(name);
  out += "\r\n";
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    for (std::size_t c = 0; c < z.dim(1); ++c) out += (c ? "," : "") + format_double(z(i, c));
    for (std::size_t c = 0; c < states.dim(1); ++c) out += "," + format_double(states(i, c));
    out += "\r\n";
  }
  return out;
}

inline void export_embeddings(const std::filesystem::path& path, const Tensor& z, const Tensor& states,
                              const std::vector<std::string>& state_names) {
  write_text_file(path, embeddings_csv(z, states, state_names));
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Parses the numeric tables written by export_embeddings.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(std::move(cur));
    return fields;
  };
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != table.header.size()) throw IoError("ragged CSV row in " + path.string());
    std::vector<double> row;
    for (const auto& f : fields) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw IoError("non-numeric CSV field '" + f + "' in " + path.string());
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour probes
// ---------------------------------------------------------------------------

/// Index of the nearest row of `train` for each row of `query`.
inline std::vector<std::size_t> nearest_neighbors(const Tensor& train, const Tensor& query) {
  if (train.rank() != 2 || query.rank() != 2 || train.dim(1) != query.dim(1) || train.dim(0) == 0) {
    throw DimensionError("nearest_neighbors: incompatible tables");
  }
  std::vector<std::size_t> out(query.dim(0));
  for (std::size_t q = 0; q < query.dim(0); ++q) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < train.dim(0); ++t) {
      const double d = detail::squared_distance(query.row(q), train.row(t));
      if (d < best) best = d, out[q] = t;
    }
  }
  return out;
}

inline double circular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

}  // namespace tcode
