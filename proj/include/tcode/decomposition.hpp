#pragma once

// Objectives over product groups Z = Z_1 x ... x Z_k.
//
// Passive: each block carries its own group objective on the shared batch.
// Active: each block is equivariant to its own subgroup's batches and invariant
// (squared-norm penalty, weight mu) to every other subgroup's batches.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcode/autodiff.hpp"
#include "tcode/diagnostics.hpp"
#include "tcode/errors.hpp"
#include "tcode/objectives.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

enum class DecompositionMode { active, passive };

inline std::string_view to_string(DecompositionMode m) { return m == DecompositionMode::active ? "active" : "passive"; }

inline DecompositionMode parse_decomposition_mode(std::string_view s) {
  if (s == "active") return DecompositionMode::active;
  if (s == "passive") return DecompositionMode::passive;
  throw ConfigError("unknown decomposition mode '" + std::string(s) + "'");
}

struct BlockSpec {
  std::size_t dim = 0;
  GroupObjective objective;
};

struct DecompositionSpec {
  std::vector<BlockSpec> blocks;
  DecompositionMode mode = DecompositionMode::passive;
  double invariance_weight = 1.0;

  std::size_t total_dim() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.dim;
    return n;
  }
  std::size_t offset(std::size_t block) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < block; ++i) n += blocks.at(i).dim;
    return n;
  }

  void validate(std::size_t embedding_dim) const {
    if (blocks.empty()) throw ConfigError("decomposition needs at least one block");
    for (const auto& b : blocks) {
      if (b.dim == 0) throw ConfigError("decomposition blocks need positive dimension");
      b.objective.validate(b.dim);
      if (b.objective.kind == ObjectiveKind::informed) {
        throw ConfigError("informed objectives are not supported inside a decomposition");
      }
    }
    if (total_dim() != embedding_dim) {
      throw ConfigError("decomposition blocks sum to " + std::to_string(total_dim()) + " but the encoder outputs " +
                        std::to_string(embedding_dim));
    }
    if (!std::isfinite(invariance_weight) || invariance_weight < 0.0) {
      throw ConfigError("invariance weight must be finite and >= 0");
    }
  }
};

/// Stacked embeddings [(K+1) x B x n] of a batch whose transformations all lie in one subgroup.
struct SubgroupEmbedding {
  std::size_t subgroup = 0;
  Var embeddings;
};

struct ActiveLossTerms {
  Var symmetry;    // Σ_i L_{G_i}(f_i, D_i)
  Var invariance;  // Σ_i Σ_{j != i} ||f_i(x) - f_i(t(g_j, x))||^2, unweighted
  Var total;       // symmetry + mu * invariance
};

namespace detail {

inline Var block_slice(Var z_all, const DecompositionSpec& spec, std::size_t block) {
  const std::size_t begin = spec.offset(block);
  return slice_trailing(z_all, begin, begin + spec.blocks[block].dim);
}

inline Var accumulate_term(Var total, Var term) { return total.valid() ? add(total, term) : term; }

inline Var zero_like_scalar(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

}  // namespace detail

/// Σ_i L_{G_i}(f_i, D) with every block evaluated on the same batch.
inline Var passive_loss(Var z_all, const DecompositionSpec& spec, std::uint64_t seed = 0) {
  if (spec.mode != DecompositionMode::passive) throw ConfigError("passive_loss needs a passive decomposition");
  const Tensor& z = z_all.tape().value(z_all);
  require_rank(z, 3, "passive_loss");
  if (z.dim(2) != spec.total_dim()) throw DimensionError("passive_loss: embedding width differs from block total");
  Var total;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    Var block = spec.blocks.size() == 1 ? z_all : detail::block_slice(z_all, spec, i);
    total = detail::accumulate_term(total, symmetry_loss(block, spec.blocks[i].objective, seed + i));
  }
  return total;
}

inline double passive_loss(const Tensor& z_all, const DecompositionSpec& spec, std::uint64_t seed = 0) {
  Tape tape;
  return tape.value(passive_loss(tape.constant(z_all), spec, seed))[0];
}

/// Active decomposition objective over per-subgroup batches.
inline ActiveLossTerms active_loss_terms(std::span<const SubgroupEmbedding> batches, const DecompositionSpec& spec,
                                         std::uint64_t seed = 0) {
  if (spec.mode != DecompositionMode::active) throw ConfigError("active_loss needs an active decomposition");
  if (batches.empty()) throw ContractViolation("active_loss needs at least one subgroup batch");
  Tape& tape = batches.front().embeddings.tape();
  ActiveLossTerms terms;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const SubgroupEmbedding& batch = batches[bi];
    if (batch.subgroup >= spec.blocks.size()) {
      throw ConfigError("batch for subgroup " + std::to_string(batch.subgroup) + " but only " +
                        std::to_string(spec.blocks.size()) + " blocks are configured");
    }
    const Tensor& z = tape.value(batch.embeddings);
    require_rank(z, 3, "active_loss");
    if (z.dim(2) != spec.total_dim()) throw DimensionError("active_loss: embedding width differs from block total");
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
      Var block = detail::block_slice(batch.embeddings, spec, i);
      if (i == batch.subgroup) {
        terms.symmetry = detail::accumulate_term(
            terms.symmetry, symmetry_loss(block, spec.blocks[i].objective, seed + bi * spec.blocks.size() + i));
      } else {
        terms.invariance = detail::accumulate_term(terms.invariance, invariant_feature_loss(block));
      }
    }
  }
  if (!terms.symmetry.valid()) terms.symmetry = detail::zero_like_scalar(tape);
  if (!terms.invariance.valid()) terms.invariance = detail::zero_like_scalar(tape);
  terms.total = add(terms.symmetry, scale(terms.invariance, spec.invariance_weight));
  return terms;
}

inline Var active_loss(std::span<const SubgroupEmbedding> batches, const DecompositionSpec& spec,
                       std::uint64_t seed = 0) {
  return active_loss_terms(batches, spec, seed).total;
}

/// Stacked embeddings as plain tensors, for evaluation.
struct SubgroupEmbeddingValues {
  std::size_t subgroup = 0;
  Tensor embeddings;  // [(K+1) x B x n]
};

/// Entry (i, j): mean squared displacement of block i under subgroup-j
/// transformations, divided by the total variance of block i over all points in
/// all batches. The variance is accumulated with a streaming (Welford) update.
inline std::vector<std::vector<double>> invariance_score(std::span<const SubgroupEmbeddingValues> batches,
                                                         const DecompositionSpec& spec) {
  const std::size_t blocks = spec.blocks.size();
  std::vector<std::vector<double>> displacement(blocks, std::vector<double>(blocks, 0.0));
  std::vector<std::size_t> displacement_count(blocks, 0);
  std::vector<double> variance(blocks, 0.0);

  for (std::size_t i = 0; i < blocks; ++i) {
    const std::size_t begin = spec.offset(i), width = spec.blocks[i].dim;
    std::vector<double> mean(width, 0.0), m2(width, 0.0);
    std::size_t count = 0;
    for (const auto& batch : batches) {
      const Tensor& z = batch.embeddings;
      require_rank(z, 3, "invariance_score");
      if (z.dim(2) != spec.total_dim()) throw DimensionError("invariance_score: embedding width differs from block total");
      if (batch.subgroup >= blocks) throw ConfigError("invariance_score: batch subgroup has no block");
      const std::size_t slices = z.dim(0), b = z.dim(1);
      for (std::size_t k = 0; k < slices; ++k) {
        for (std::size_t p = 0; p < b; ++p) {
          ++count;
          for (std::size_t c = 0; c < width; ++c) {
            const double v = z(k, p, begin + c);
            const double delta = v - mean[c];
            mean[c] += delta / static_cast<double>(count);
            m2[c] += delta * (v - mean[c]);
          }
        }
      }
      double disp = 0.0;
      for (std::size_t k = 1; k < slices; ++k) {
        for (std::size_t p = 0; p < b; ++p) {
          for (std::size_t c = 0; c < width; ++c) {
            const double d = z(k, p, begin + c) - z(0, p, begin + c);
            disp += d * d;
          }
        }
      }
      displacement[i][batch.subgroup] += disp;
      if (i == 0) displacement_count[batch.subgroup] += (slices - 1) * b;
    }
    for (double v : m2) variance[i] += count ? v / static_cast<double>(count) : 0.0;
  }

  std::vector<std::vector<double>> score(blocks, std::vector<double>(blocks, 0.0));
  for (std::size_t i = 0; i < blocks; ++i) {
    for (std::size_t j = 0; j < blocks; ++j) {
      if (!(variance[i] > 0.0)) {
        score[i][j] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      score[i][j] = displacement_count[j] ? displacement[i][j] / static_cast<double>(displacement_count[j]) / variance[i]
                                          : std::numeric_limits<double>::quiet_NaN();
    }
    if (!(variance[i] > 0.0)) diag::warn("zero_variance_block", {{"block", i}});
  }
  return score;
}

}  // namespace tcode
