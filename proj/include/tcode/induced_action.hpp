#pragma once

// Numerical check that any injective encoder is equivariant under the induced
// latent action t_Z(g, z) = f(t_X(g, f^-1(z))). Everything is a finite table,
// so the check is exact.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcode/errors.hpp"
#include "tcode/mlp.hpp"
#include "tcode/rng.hpp"

namespace tcode {

/// A finite group G (Cayley table) acting on a finite set X = {0, ..., |X|-1}.
struct FiniteGSet {
  /// action[g][x] = t_X(g, x)
  std::vector<std::vector<std::size_t>> action;
  /// multiply[g][h] = g h
  std::vector<std::vector<std::size_t>> multiply;
  std::size_t identity = 0;

  std::size_t group_order() const { return multiply.size(); }
  std::size_t set_size() const { return action.empty() ? 0 : action.front().size(); }

  void validate() const {
    const std::size_t n = group_order();
    if (n == 0 || action.size() != n) throw ConfigError("G-set needs one action row per group element");
    if (identity >= n) throw ConfigError("identity index outside the group");
    for (const auto& row : multiply) {
      if (row.size() != n) throw ConfigError("group table must be square");
      for (std::size_t v : row) {
        if (v >= n) throw ConfigError("group table entry outside the group");
      }
    }
    for (const auto& row : action) {
      if (row.size() != set_size()) throw ConfigError("action rows must cover the whole set");
      for (std::size_t v : row) {
        if (v >= set_size()) throw ConfigError("action maps outside the set");
      }
    }
  }
};

/// Cyclic group C_n acting on n points by rotation: t(g, x) = x + g mod n.
inline FiniteGSet cyclic_gset(std::size_t n) {
  FiniteGSet s;
  s.action.assign(n, std::vector<std::size_t>(n));
  s.multiply.assign(n, std::vector<std::size_t>(n));
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t x = 0; x < n; ++x) {
      s.action[g][x] = (x + g) % n;
      s.multiply[g][x] = (g + x) % n;
    }
  }
  return s;
}

struct InducedActionViolation {
  enum class Axiom { identity, composition };
  Axiom axiom;
  std::size_t g = 0;
  std::size_t h = 0;  // unused for identity violations
  std::size_t point = 0;
};

struct InducedActionReport {
  /// Set when f is not injective; verification stops there.
  std::optional<std::pair<std::size_t, std::size_t>> collision;
  std::vector<InducedActionViolation> violations;
  std::size_t checks = 0;

  bool ok() const { return !collision && violations.empty(); }
};

/// Builds t_Z by table lookup through f and checks the action axioms on every
/// (g, h, z). `f_table[x]` is the embedding of set element x.
inline InducedActionReport verify_induced_action(std::span<const std::vector<double>> f_table,
                                                 const FiniteGSet& gset) {
  gset.validate();
  if (f_table.size() != gset.set_size()) {
    throw DimensionError("encoder table has " + std::to_string(f_table.size()) + " entries for a set of size " +
                         std::to_string(gset.set_size()));
  }
  InducedActionReport report;
  std::map<std::vector<double>, std::size_t> inverse;
  for (std::size_t x = 0; x < f_table.size(); ++x) {
    auto [it, fresh] = inverse.emplace(f_table[x], x);
    if (!fresh) {
      report.collision = std::make_pair(it->second, x);
      return report;
    }
  }

  // t_Z over the image of f, indexed by the preimage: t_z[g][x] is the preimage of
  // t_Z(g, f(x)) = f(t_X(g, f^-1(f(x)))).
  const std::size_t order = gset.group_order(), points = gset.set_size();
  auto induced = [&](std::size_t g, const std::vector<double>& z) -> const std::vector<double>& {
    const std::size_t x = inverse.at(z);
    return f_table[gset.action[g][x]];
  };

  for (std::size_t x = 0; x < points; ++x) {
    ++report.checks;
    if (induced(gset.identity, f_table[x]) != f_table[x]) {
      report.violations.push_back({InducedActionViolation::Axiom::identity, gset.identity, 0, x});
    }
  }
  for (std::size_t g = 0; g < order; ++g) {
    for (std::size_t h = 0; h < order; ++h) {
      const std::size_t gh = gset.multiply[g][h];
      for (std::size_t x = 0; x < points; ++x) {
        ++report.checks;
        const auto& lhs = induced(g, induced(h, f_table[x]));
        const auto& rhs = induced(gh, f_table[x]);
        if (lhs != rhs) report.violations.push_back({InducedActionViolation::Axiom::composition, g, h, x});
      }
    }
  }
  return report;
}

/// The n cyclic shifts of a random signal, the C_n action read off by matching
/// shifted signals, and the table of a random MLP encoder on them.
struct ShiftedSignals {
  std::vector<std::vector<double>> signals;
  FiniteGSet gset;
  std::vector<std::vector<double>> f_table;
};

inline ShiftedSignals shifted_signals(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> signal(n);
  for (double& v : signal) v = u(rng);
  ShiftedSignals out;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[(i + s) % n] = signal[i];
    out.signals.push_back(shifted);
  }
  out.gset.action.assign(n, std::vector<std::size_t>(n));
  out.gset.multiply.assign(n, std::vector<std::size_t>(n));
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t h = 0; h < n; ++h) out.gset.multiply[g][h] = (g + h) % n;
    for (std::size_t x = 0; x < n; ++x) {
      std::vector<double> moved(n);
      for (std::size_t i = 0; i < n; ++i) moved[(i + g) % n] = out.signals[x][i];
      const auto it = std::find(out.signals.begin(), out.signals.end(), moved);
      out.gset.action[g][x] = static_cast<std::size_t>(it - out.signals.begin());
    }
  }
  const auto model = EncoderModel::initialized({n, 16, 3}, {Activation::elu}, seed + 1);
  Tensor x(Shape{n, n});
  for (std::size_t r = 0; r < n; ++r) std::copy(out.signals[r].begin(), out.signals[r].end(), x.row(r).begin());
  const Tensor z = model.embed(x);
  for (std::size_t r = 0; r < n; ++r) out.f_table.emplace_back(z.row(r).begin(), z.row(r).end());
  return out;
}

}  // namespace tcode
