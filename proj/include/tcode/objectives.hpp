#pragma once

// Symmetry-regularization objectives and injectivity barriers.
//
// Every loss exists in two forms: a value-only overload on plain Tensors and a
// differentiable overload on tape Vars. Both share one kernel that returns the
// value together with the local gradient with respect to each input, so the
// two forms cannot drift apart.
//
// Stacked embeddings use shape [(K+1) x B x n]: slice 0 holds the base
// observations and slice k the same observations after transformation k.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcode/autodiff.hpp"
#include "tcode/diagnostics.hpp"
#include "tcode/errors.hpp"
#include "tcode/hungarian.hpp"
#include "tcode/mlp.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

/// Lower bound applied to distances inside barriers and cosine denominators.
inline constexpr double distance_floor = 1e-12;

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

enum class BarrierKind { hinge, reciprocal, log_barrier };

struct BarrierSpec {
  BarrierKind kind = BarrierKind::log_barrier;
  double coefficient = 1.0;
  double epsilon = 1.0;  // hinge margin

  void validate() const {
    if (!std::isfinite(coefficient) || coefficient < 0.0) throw ConfigError("barrier coefficient must be finite and >= 0");
    if (kind == BarrierKind::hinge && !(epsilon > 0.0)) throw ConfigError("hinge barrier needs epsilon > 0");
  }
};

inline std::string_view to_string(BarrierKind k) {
  switch (k) {
    case BarrierKind::hinge: return "hinge";
    case BarrierKind::reciprocal: return "reciprocal";
    case BarrierKind::log_barrier: return "log";
  }
  return "?";
}

inline BarrierKind parse_barrier_kind(std::string_view s) {
  if (s == "hinge") return BarrierKind::hinge;
  if (s == "reciprocal") return BarrierKind::reciprocal;
  if (s == "log") return BarrierKind::log_barrier;
  throw ConfigError("unknown barrier kind '" + std::string(s) + "' (expected hinge, reciprocal or log)");
}

/// How pairwise objectives reduce over their terms.
enum class Reduction { mean, sum };

enum class ObjectiveKind { informed, finite, euclidean, orthogonal, unitary, conformal };

inline std::string_view to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::informed: return "informed";
    case ObjectiveKind::finite: return "finite";
    case ObjectiveKind::euclidean: return "euclidean";
    case ObjectiveKind::orthogonal: return "orthogonal";
    case ObjectiveKind::unitary: return "unitary";
    case ObjectiveKind::conformal: return "conformal";
  }
  return "?";
}

inline ObjectiveKind parse_objective_kind(std::string_view s) {
  for (auto k : {ObjectiveKind::informed, ObjectiveKind::finite, ObjectiveKind::euclidean, ObjectiveKind::orthogonal,
                 ObjectiveKind::unitary, ObjectiveKind::conformal}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown objective kind '" + std::string(s) + "'");
}

enum class MatchingStrategy { enumerate, assignment, chamfer };

inline std::string_view to_string(MatchingStrategy s) {
  switch (s) {
    case MatchingStrategy::enumerate: return "enumerate";
    case MatchingStrategy::assignment: return "assignment";
    case MatchingStrategy::chamfer: return "chamfer";
  }
  return "?";
}

inline MatchingStrategy parse_matching_strategy(std::string_view s) {
  if (s == "enumerate") return MatchingStrategy::enumerate;
  if (s == "assignment") return MatchingStrategy::assignment;
  if (s == "chamfer") return MatchingStrategy::chamfer;
  throw ConfigError("unknown matching strategy '" + std::string(s) + "'");
}

/// perm[p] = q: block p of one embedding is compared with block q of the other.
using Permutation = std::vector<std::size_t>;

inline std::vector<Permutation> all_permutations(std::size_t m) {
  std::vector<Permutation> out;
  Permutation p(m);
  std::iota(p.begin(), p.end(), std::size_t{0});
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// Block-permutation action of a finite group on R^(b*m).
struct FiniteGroup {
  std::size_t block_size = 1;
  std::size_t block_count = 1;
  std::vector<Permutation> permutations;
  MatchingStrategy strategy = MatchingStrategy::enumerate;

  static FiniteGroup symmetric(std::size_t block_size, std::size_t block_count,
                               MatchingStrategy strategy = MatchingStrategy::assignment) {
    return FiniteGroup{block_size, block_count, all_permutations(block_count), strategy};
  }

  std::size_t dim() const { return block_size * block_count; }

  bool is_full_symmetric() const {
    std::size_t factorial = 1;
    for (std::size_t i = 2; i <= block_count; ++i) factorial *= i;
    return std::set<Permutation>(permutations.begin(), permutations.end()).size() == factorial;
  }

  /// Checks that the permutation set is a group: identity, closure, inverses.
  void validate() const {
    if (block_size == 0 || block_count == 0) throw ConfigError("finite group needs positive block size and count");
    if (permutations.empty()) throw ConfigError("finite group permutation set is empty");
    std::set<Permutation> members;
    for (const Permutation& p : permutations) {
      if (p.size() != block_count) throw ConfigError("permutation length differs from block count");
      Permutation sorted = p;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != i) throw ConfigError("entry is not a permutation of the blocks");
      }
      members.insert(p);
    }
    Permutation identity(block_count);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    if (!members.contains(identity)) throw ConfigError("permutation set lacks the identity");
    for (const Permutation& a : members) {
      Permutation inverse(block_count);
      for (std::size_t i = 0; i < block_count; ++i) inverse[a[i]] = i;
      if (!members.contains(inverse)) throw ConfigError("permutation set is not closed under inverses");
      for (const Permutation& b : members) {
        Permutation ab(block_count);
        for (std::size_t i = 0; i < block_count; ++i) ab[i] = a[b[i]];
        if (!members.contains(ab)) throw ConfigError("permutation set is not closed under composition");
      }
    }
    if (strategy == MatchingStrategy::assignment && !is_full_symmetric()) {
      throw ConfigError("assignment matching requires the full symmetric group on the blocks");
    }
  }
};

struct GroupObjective {
  ObjectiveKind kind = ObjectiveKind::euclidean;
  Reduction reduction = Reduction::mean;
  /// Orthogonal/unitary: include i == j (norm) terms.
  bool include_diagonal = true;
  /// Conformal: cap on sampled (vertex, endpoint, endpoint) triples per batch.
  std::size_t max_triples = 4096;
  FiniteGroup finite;
  /// Informed: latent action matrix (n x n) for each known group element id.
  std::vector<Tensor> latent_actions;

  static GroupObjective euclidean() { return {}; }
  static GroupObjective of_kind(ObjectiveKind kind) {
    GroupObjective o;
    o.kind = kind;
    return o;
  }
  static GroupObjective orthogonal() { return of_kind(ObjectiveKind::orthogonal); }
  static GroupObjective unitary() { return of_kind(ObjectiveKind::unitary); }
  static GroupObjective conformal(std::size_t max_triples = 4096) {
    GroupObjective o = of_kind(ObjectiveKind::conformal);
    o.max_triples = max_triples;
    return o;
  }
  static GroupObjective finite_group(FiniteGroup g) {
    GroupObjective o = of_kind(ObjectiveKind::finite);
    o.finite = std::move(g);
    return o;
  }
  static GroupObjective informed(std::vector<Tensor> actions) {
    GroupObjective o = of_kind(ObjectiveKind::informed);
    o.latent_actions = std::move(actions);
    return o;
  }

  /// Validates against the embedding dimension this objective will see.
  void validate(std::size_t dim) const {
    switch (kind) {
      case ObjectiveKind::unitary:
        if (dim % 2 != 0) throw ConfigError("unitary objective needs an even embedding dimension, got " + std::to_string(dim));
        break;
      case ObjectiveKind::finite:
        finite.validate();
        if (finite.dim() != dim) {
          throw ConfigError("finite objective covers " + std::to_string(finite.dim()) + " dims, block has " +
                            std::to_string(dim));
        }
        break;
      case ObjectiveKind::informed:
        for (const Tensor& a : latent_actions) {
          if (a.shape() != Shape{dim, dim}) throw ConfigError("informed latent action must be n x n");
        }
        break;
      case ObjectiveKind::conformal:
        if (max_triples == 0) throw ConfigError("conformal objective needs max_triples > 0");
        break;
      default: break;
    }
  }
};

/// Diagnostics from the conformal kernel.
struct ConformalStats {
  std::size_t triples_used = 0;
  std::size_t triples_skipped = 0;
};

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace detail {

struct LossValue {
  double value = 0.0;
  std::vector<Tensor> grads;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * b[d];
  return s;
}

inline void require_stack(const Tensor& z, const char* what, std::size_t min_points) {
  require_rank(z, 3, what);
  if (z.dim(0) < 2) throw ContractViolation(std::string(what) + ": needs at least one transformation (K >= 1)");
  if (z.dim(1) < min_points) {
    throw ContractViolation(std::string(what) + ": needs at least " + std::to_string(min_points) + " points per slice");
  }
}

inline double pair_count(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

/// Accumulates Σ_{a<b} (q_a - q_b)^2 for one quantity observed in every slice,
/// using the identity Σ_{a<b}(q_a - q_b)^2 = N Σ_k (q_k - mean)^2 (no cancellation
/// when all q_k agree). Writes d(term)/d(q_k) into `dq` and returns the term.
inline double spread_term(std::span<const double> q, std::span<double> dq) {
  const double n = static_cast<double>(q.size());
  double mean = 0.0;
  for (double v : q) mean += v;
  mean /= n;
  double s = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double c = q[k] - mean;
    s += c * c;
    dq[k] = 2.0 * n * c;
  }
  return n * s;
}

inline LossValue injectivity(const Tensor& z, const BarrierSpec& spec) {
  require_rank(z, 2, "injectivity_loss");
  spec.validate();
  const std::size_t b = z.dim(0), n = z.dim(1);
  if (b < 2) throw ContractViolation("injectivity_loss needs at least two embeddings");
  LossValue out{0.0, {Tensor(z.shape())}};
  Tensor& g = out.grads[0];
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double raw = std::sqrt(squared_distance(z.row(i), z.row(j)));
      const bool floor_hit = raw < distance_floor;
      const double d = floor_hit ? distance_floor : raw;
      clamped += floor_hit;
      double value = 0.0, slope = 0.0;  // slope = d(value)/d(d)
      switch (spec.kind) {
        case BarrierKind::hinge:
          value = std::max(spec.epsilon - d, 0.0);
          slope = spec.epsilon - d > 0.0 ? -1.0 : 0.0;
          break;
        case BarrierKind::reciprocal:
          value = 1.0 / d;
          slope = -1.0 / (d * d);
          break;
        case BarrierKind::log_barrier:
          value = -std::log(d);
          slope = -1.0 / d;
          break;
      }
      out.value += value;
      if (floor_hit || slope == 0.0) continue;
      const double f = spec.coefficient * slope / d;
      for (std::size_t c = 0; c < n; ++c) {
        const double diff = z(i, c) - z(j, c);
        g(i, c) += f * diff;
        g(j, c) -= f * diff;
      }
    }
  }
  out.value *= spec.coefficient;
  if (clamped > 0 && spec.kind != BarrierKind::hinge) {
    diag::warn("coincident_embeddings", {{"pairs", clamped}, {"floor", distance_floor}});
  }
  return out;
}

inline LossValue informed(const Tensor& z, const Tensor& z_t, std::span<const std::size_t> group_ids,
                          const GroupObjective& objective) {
  require_rank(z, 2, "informed_loss");
  require_shape(z_t, z.shape(), "informed_loss transformed embeddings");
  const std::size_t b = z.dim(0), n = z.dim(1);
  if (group_ids.size() != b) throw DimensionError("informed_loss: one group id per row required");
  LossValue out{0.0, {Tensor(z.shape()), Tensor(z.shape())}};
  std::vector<double> r(n);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t g = group_ids[i];
    if (g >= objective.latent_actions.size()) {
      throw ConfigError("group element " + std::to_string(g) + " has no registered latent action");
    }
    const Tensor& a = objective.latent_actions[g];
    if (a.shape() != Shape{n, n}) throw ConfigError("latent action matrix must be n x n");
    for (std::size_t p = 0; p < n; ++p) {
      double az = 0.0;
      for (std::size_t q = 0; q < n; ++q) az += a(p, q) * z(i, q);
      r[p] = z_t(i, p) - az;
      out.value += r[p] * r[p];
      out.grads[1](i, p) = 2.0 * r[p];
    }
    for (std::size_t q = 0; q < n; ++q) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += a(p, q) * r[p];
      out.grads[0](i, q) = -2.0 * s;
    }
  }
  return out;
}

/// Per-row block matching cost. cost[p*m + q] = ||z block p - z_t block q||^2.
inline LossValue finite_group(const Tensor& z, const Tensor& z_t, const FiniteGroup& group) {
  require_rank(z, 2, "finite_group_loss");
  require_shape(z_t, z.shape(), "finite_group_loss transformed embeddings");
  const std::size_t rows = z.dim(0), m = group.block_count, bs = group.block_size;
  for (const Permutation& perm : group.permutations) {
    if (perm.size() != m) throw ConfigError("permutation length differs from block count");
  }
  if (group.permutations.empty()) throw ConfigError("finite group permutation set is empty");
  if (group.strategy == MatchingStrategy::assignment && !group.is_full_symmetric()) {
    throw ConfigError("assignment matching requires the full symmetric group on the blocks");
  }
  if (z.dim(1) != group.dim()) {
    throw DimensionError("finite_group_loss: embedding width " + std::to_string(z.dim(1)) + " != block size x count " +
                         std::to_string(group.dim()));
  }
  LossValue out{0.0, {Tensor(z.shape()), Tensor(z.shape())}};
  std::vector<double> cost(m * m);
  // weight[p*m + q]: multiplicity of pair (p, q) in the chosen matching.
  std::vector<double> weight(m * m);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto zi = z.row(i), ti = z_t.row(i);
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = 0; q < m; ++q) {
        cost[p * m + q] = squared_distance(zi.subspan(p * bs, bs), ti.subspan(q * bs, bs));
      }
    }
    std::fill(weight.begin(), weight.end(), 0.0);
    double best = 0.0;
    switch (group.strategy) {
      case MatchingStrategy::enumerate: {
        const Permutation* arg = nullptr;
        best = std::numeric_limits<double>::infinity();
        for (const Permutation& perm : group.permutations) {
          double c = 0.0;
          for (std::size_t p = 0; p < m; ++p) c += cost[p * m + perm[p]];
          if (c < best) {
            best = c;
            arg = &perm;
          }
        }
        for (std::size_t p = 0; p < m; ++p) weight[p * m + (*arg)[p]] = 1.0;
        break;
      }
      case MatchingStrategy::assignment: {
        const Assignment a = solve_assignment(cost, m);
        best = a.cost;
        for (std::size_t p = 0; p < m; ++p) weight[p * m + a.column[p]] = 1.0;
        break;
      }
      case MatchingStrategy::chamfer: {
        // Mean of the two directed nearest-block sums; bounded above by any matching.
        double forward = 0.0, backward = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
          std::size_t arg = 0;
          for (std::size_t q = 1; q < m; ++q) {
            if (cost[p * m + q] < cost[p * m + arg]) arg = q;
          }
          forward += cost[p * m + arg];
          weight[p * m + arg] += 0.5;
        }
        for (std::size_t q = 0; q < m; ++q) {
          std::size_t arg = 0;
          for (std::size_t p = 1; p < m; ++p) {
            if (cost[p * m + q] < cost[arg * m + q]) arg = p;
          }
          backward += cost[arg * m + q];
          weight[arg * m + q] += 0.5;
        }
        best = 0.5 * (forward + backward);
        break;
      }
    }
    out.value += best;
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = 0; q < m; ++q) {
        const double w = weight[p * m + q];
        if (w == 0.0) continue;
        for (std::size_t d = 0; d < bs; ++d) {
          const double diff = z(i, p * bs + d) - z_t(i, q * bs + d);
          out.grads[0](i, p * bs + d) += 2.0 * w * diff;
          out.grads[1](i, q * bs + d) -= 2.0 * w * diff;
        }
      }
    }
  }
  return out;
}

inline LossValue euclidean(const Tensor& z_all, Reduction reduction) {
  require_stack(z_all, "euclidean_loss", 2);
  const std::size_t slices = z_all.dim(0), b = z_all.dim(1), n = z_all.dim(2);
  LossValue out{0.0, {Tensor(z_all.shape())}};
  Tensor& g = out.grads[0];
  std::vector<double> d(slices), dd(slices);
  const double norm = reduction == Reduction::mean ? 1.0 / (pair_count(b) * pair_count(slices)) : 1.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      for (std::size_t k = 0; k < slices; ++k) {
        d[k] = std::max(std::sqrt(squared_distance(z_all.row(k * b + i), z_all.row(k * b + j))), distance_floor);
      }
      out.value += norm * spread_term(d, dd);
      for (std::size_t k = 0; k < slices; ++k) {
        if (d[k] <= distance_floor) continue;
        const double f = norm * dd[k] / d[k];
        for (std::size_t c = 0; c < n; ++c) {
          const double diff = z_all(k, i, c) - z_all(k, j, c);
          g(k, i, c) += f * diff;
          g(k, j, c) -= f * diff;
        }
      }
    }
  }
  return out;
}

inline LossValue orthogonal(const Tensor& z_all, bool unitary, const GroupObjective& objective) {
  require_stack(z_all, unitary ? "unitary_loss" : "orthogonal_loss", objective.include_diagonal ? 1 : 2);
  const std::size_t slices = z_all.dim(0), b = z_all.dim(1), n = z_all.dim(2);
  if (unitary && n % 2 != 0) {
    throw ConfigError("unitary loss needs an even embedding dimension, got " + std::to_string(n));
  }
  const std::size_t h = n / 2;
  const bool diag_terms = objective.include_diagonal;
  const double pairs = pair_count(b) + (diag_terms ? static_cast<double>(b) : 0.0);
  const double norm = objective.reduction == Reduction::mean ? 1.0 / (pairs * pair_count(slices)) : 1.0;

  LossValue out{0.0, {Tensor(z_all.shape())}};
  Tensor& g = out.grads[0];
  std::vector<double> re(slices), dre(slices), im(slices), dim(slices);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = diag_terms ? i : i + 1; j < b; ++j) {
      for (std::size_t k = 0; k < slices; ++k) {
        const auto zi = z_all.row(k * b + i), zj = z_all.row(k * b + j);
        re[k] = dot(zi, zj);
        if (unitary) {
          // Hermitian product <z_i, z_j> = conj(u_i + i v_i) . (u_j + i v_j)
          im[k] = dot(zi.first(h), zj.last(h)) - dot(zi.last(h), zj.first(h));
        }
      }
      out.value += norm * spread_term(re, dre);
      const bool imag = unitary && i != j;
      if (imag) out.value += norm * spread_term(im, dim);
      for (std::size_t k = 0; k < slices; ++k) {
        const double fr = norm * dre[k];
        for (std::size_t c = 0; c < n; ++c) {
          const double zic = z_all(k, i, c), zjc = z_all(k, j, c);
          g(k, i, c) += fr * zjc;
          g(k, j, c) += fr * zic;
        }
        if (!imag) continue;
        const double fi = norm * dim[k];
        for (std::size_t c = 0; c < h; ++c) {
          const double ui = z_all(k, i, c), vi = z_all(k, i, h + c);
          const double uj = z_all(k, j, c), vj = z_all(k, j, h + c);
          g(k, i, c) += fi * vj;
          g(k, i, h + c) -= fi * uj;
          g(k, j, c) -= fi * vi;
          g(k, j, h + c) += fi * ui;
        }
      }
    }
  }
  return out;
}

struct Triple {
  std::size_t first, vertex, second;
};

/// All (endpoint, vertex, endpoint) triples with unordered endpoints, or a seeded
/// subsample of at most `cap` of them.
inline std::vector<Triple> conformal_triples(std::size_t points, std::size_t cap, std::uint64_t seed) {
  std::vector<Triple> all;
  for (std::size_t v = 0; v < points; ++v) {
    for (std::size_t a = 0; a < points; ++a) {
      if (a == v) continue;
      for (std::size_t c = a + 1; c < points; ++c) {
        if (c != v) all.push_back({a, v, c});
      }
    }
  }
  if (all.size() > cap) {
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `cap` entries become a uniform sample.
    for (std::size_t i = 0; i < cap; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    all.resize(cap);
  }
  return all;
}

inline LossValue conformal(const Tensor& z_all, const GroupObjective& objective, std::uint64_t seed,
                           ConformalStats* stats) {
  require_stack(z_all, "conformal_loss", 3);
  const std::size_t slices = z_all.dim(0), b = z_all.dim(1), n = z_all.dim(2);
  const auto triples = conformal_triples(b, objective.max_triples, seed);

  LossValue out{0.0, {Tensor(z_all.shape())}};
  Tensor& g = out.grads[0];
  std::vector<double> cosine(slices), dcos(slices), nu(slices), nw(slices);
  std::vector<Triple> used;
  used.reserve(triples.size());
  ConformalStats local;
  for (const Triple& t : triples) {
    bool degenerate = false;
    for (std::size_t k = 0; k < slices && !degenerate; ++k) {
      nu[k] = std::sqrt(squared_distance(z_all.row(k * b + t.first), z_all.row(k * b + t.vertex)));
      nw[k] = std::sqrt(squared_distance(z_all.row(k * b + t.second), z_all.row(k * b + t.vertex)));
      degenerate = nu[k] < distance_floor || nw[k] < distance_floor;
    }
    if (degenerate) {
      ++local.triples_skipped;
      continue;
    }
    used.push_back(t);
  }
  local.triples_used = used.size();
  const double norm = objective.reduction == Reduction::mean && !used.empty()
                          ? 1.0 / (static_cast<double>(used.size()) * pair_count(slices))
                          : 1.0;
  for (const Triple& t : used) {
    for (std::size_t k = 0; k < slices; ++k) {
      double uw = 0.0, uu = 0.0, ww = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double u = z_all(k, t.first, c) - z_all(k, t.vertex, c);
        const double w = z_all(k, t.second, c) - z_all(k, t.vertex, c);
        uw += u * w;
        uu += u * u;
        ww += w * w;
      }
      nu[k] = std::sqrt(uu);
      nw[k] = std::sqrt(ww);
      cosine[k] = uw / (nu[k] * nw[k]);
    }
    out.value += norm * spread_term(cosine, dcos);
    for (std::size_t k = 0; k < slices; ++k) {
      const double f = norm * dcos[k];
      const double inv = 1.0 / (nu[k] * nw[k]);
      const double cu = cosine[k] / (nu[k] * nu[k]);
      const double cw = cosine[k] / (nw[k] * nw[k]);
      for (std::size_t c = 0; c < n; ++c) {
        const double u = z_all(k, t.first, c) - z_all(k, t.vertex, c);
        const double w = z_all(k, t.second, c) - z_all(k, t.vertex, c);
        const double du = f * (w * inv - cu * u);
        const double dw = f * (u * inv - cw * w);
        g(k, t.first, c) += du;
        g(k, t.second, c) += dw;
        g(k, t.vertex, c) -= du + dw;
      }
    }
  }
  if (local.triples_skipped > 0) {
    diag::warn("degenerate_triples", {{"skipped", local.triples_skipped}, {"used", local.triples_used}});
  }
  if (stats) *stats = local;
  return out;
}

inline LossValue invariant_feature(const Tensor& z_inv) {
  require_rank(z_inv, 3, "invariant_feature_loss");
  const std::size_t slices = z_inv.dim(0), b = z_inv.dim(1), q = z_inv.dim(2);
  LossValue out{0.0, {Tensor(z_inv.shape())}};
  for (std::size_t k = 1; k < slices; ++k) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t c = 0; c < q; ++c) {
        const double diff = z_inv(k, i, c) - z_inv(0, i, c);
        out.value += diff * diff;
        out.grads[0](k, i, c) += 2.0 * diff;
        out.grads[0](0, i, c) -= 2.0 * diff;
      }
    }
  }
  return out;
}

inline Var as_var(std::span<const Var> inputs, LossValue lv) {
  return fused_scalar(std::vector<Var>(inputs.begin(), inputs.end()), lv.value, std::move(lv.grads));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public loss API
// ---------------------------------------------------------------------------

/// λ · Σ_{i<j} barrier(||z_i - z_j||) over the rows of z [B x n].
inline double injectivity_loss(const Tensor& z, const BarrierSpec& spec) { return detail::injectivity(z, spec).value; }
inline Var injectivity_loss(Var z, const BarrierSpec& spec) {
  return detail::as_var(std::array{z}, detail::injectivity(z.tape().value(z), spec));
}

/// Σ_i ||z_t[i] - A_{g_i} z[i]||^2 with known group elements.
inline double informed_loss(const Tensor& z, const Tensor& z_t, std::span<const std::size_t> group_ids,
                            const GroupObjective& objective) {
  return detail::informed(z, z_t, group_ids, objective).value;
}
inline Var informed_loss(Var z, Var z_t, std::span<const std::size_t> group_ids, const GroupObjective& objective) {
  Tape& t = z.tape();
  return detail::as_var(std::array{z, z_t}, detail::informed(t.value(z), t.value(z_t), group_ids, objective));
}

/// Σ_i min over block matchings of ||z[i] - π·z_t[i]||^2; rows are aligned transformed pairs.
inline double finite_group_loss(const Tensor& z, const Tensor& z_t, const FiniteGroup& group) {
  return detail::finite_group(z, z_t, group).value;
}
inline Var finite_group_loss(Var z, Var z_t, const FiniteGroup& group) {
  Tape& t = z.tape();
  return detail::as_var(std::array{z, z_t}, detail::finite_group(t.value(z), t.value(z_t), group));
}

/// Distance preservation over all point pairs and slice pairs of z_all [(K+1) x B x n].
inline double euclidean_loss(const Tensor& z_all, Reduction reduction = Reduction::mean) {
  return detail::euclidean(z_all, reduction).value;
}
inline Var euclidean_loss(Var z_all, Reduction reduction = Reduction::mean) {
  return detail::as_var(std::array{z_all}, detail::euclidean(z_all.tape().value(z_all), reduction));
}

/// Inner-product preservation; `unitary` reads rows as complex vectors [real | imaginary].
inline double orthogonal_loss(const Tensor& z_all, bool unitary, const GroupObjective& objective = {}) {
  return detail::orthogonal(z_all, unitary, objective).value;
}
inline Var orthogonal_loss(Var z_all, bool unitary, const GroupObjective& objective = {}) {
  return detail::as_var(std::array{z_all}, detail::orthogonal(z_all.tape().value(z_all), unitary, objective));
}

/// Angle preservation over sampled triples; `seed` fixes the triple subsample.
inline double conformal_loss(const Tensor& z_all, const GroupObjective& objective = GroupObjective::conformal(),
                             std::uint64_t seed = 0, ConformalStats* stats = nullptr) {
  return detail::conformal(z_all, objective, seed, stats).value;
}
inline Var conformal_loss(Var z_all, const GroupObjective& objective = GroupObjective::conformal(),
                          std::uint64_t seed = 0, ConformalStats* stats = nullptr) {
  return detail::as_var(std::array{z_all}, detail::conformal(z_all.tape().value(z_all), objective, seed, stats));
}

/// Σ_i Σ_k ||z_inv[k][i] - z_inv[0][i]||^2.
inline double invariant_feature_loss(const Tensor& z_inv) { return detail::invariant_feature(z_inv).value; }
inline Var invariant_feature_loss(Var z_inv) {
  return detail::as_var(std::array{z_inv}, detail::invariant_feature(z_inv.tape().value(z_inv)));
}

/// Dispatches an unsupervised objective over stacked embeddings z_all [(K+1) x B x n].
/// Finite objectives sum over the aligned pairs (slice 0, slice k).
inline Var symmetry_loss(Var z_all, const GroupObjective& objective, std::uint64_t seed = 0) {
  const Tensor& z = z_all.tape().value(z_all);
  require_rank(z, 3, "symmetry_loss");
  switch (objective.kind) {
    case ObjectiveKind::euclidean: return euclidean_loss(z_all, objective.reduction);
    case ObjectiveKind::orthogonal: return orthogonal_loss(z_all, false, objective);
    case ObjectiveKind::unitary: return orthogonal_loss(z_all, true, objective);
    case ObjectiveKind::conformal: return conformal_loss(z_all, objective, seed);
    case ObjectiveKind::finite: {
      const std::size_t slices = z.dim(0), b = z.dim(1), n = z.dim(2);
      Var base = reshape(slice_leading(z_all, 0, 1), Shape{b, n});
      Var total;
      for (std::size_t k = 1; k < slices; ++k) {
        Var moved = reshape(slice_leading(z_all, k, k + 1), Shape{b, n});
        Var term = finite_group_loss(base, moved, objective.finite);
        total = total.valid() ? add(total, term) : term;
      }
      return total;
    }
    case ObjectiveKind::informed:
      throw ConfigError("informed objective needs known group elements; use informed_loss with triples");
  }
  throw ConfigError("unhandled objective kind");
}

inline double symmetry_loss(const Tensor& z_all, const GroupObjective& objective, std::uint64_t seed = 0) {
  Tape tape;
  return tape.value(symmetry_loss(tape.constant(z_all), objective, seed))[0];
}

// ---------------------------------------------------------------------------
// Model-level informed objective
// ---------------------------------------------------------------------------

struct InformedTriple {
  std::vector<double> x;
  std::size_t group_element = 0;
  std::vector<double> x_t;
};

/// Embeds both sides of every triple in one forward pass and applies the informed loss.
inline Var informed_loss(Tape& tape, EncoderModel& model, std::span<const InformedTriple> triples,
                         const GroupObjective& objective) {
  if (objective.kind != ObjectiveKind::informed) throw ConfigError("informed_loss needs an informed objective");
  const std::size_t b = triples.size(), d = model.input_dim();
  if (b == 0) throw ContractViolation("informed_loss needs at least one triple");
  Tensor x(Shape{2 * b, d});
  std::vector<std::size_t> ids(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (triples[i].x.size() != d || triples[i].x_t.size() != d) {
      throw DimensionError("informed triple observation width differs from encoder input");
    }
    std::copy(triples[i].x.begin(), triples[i].x.end(), x.row(i).begin());
    std::copy(triples[i].x_t.begin(), triples[i].x_t.end(), x.row(b + i).begin());
    ids[i] = triples[i].group_element;
  }
  Var z = model.forward(tape.constant(std::move(x)));
  return informed_loss(slice_leading(z, 0, b), slice_leading(z, b, 2 * b), ids, objective);
}

}  // namespace tcode
