#pragma once

// Kuhn-Munkres (Hungarian) algorithm with potentials, O(n^3), for a square
// cost matrix.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tcode/errors.hpp"

namespace tcode {

struct Assignment {
  /// column[r] is the column assigned to row r.
  std::vector<std::size_t> column;
  double cost = 0.0;
};

/// Minimum-cost perfect matching. `cost` is row-major n x n.
inline Assignment solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionError("assignment cost matrix must be n x n");
  Assignment result;
  if (n == 0) return result;

  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  result.column.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) result.column[match[j] - 1] = j - 1;
  // Recompute the cost from the matrix so it is bit-identical to summing the chosen entries.
  for (std::size_t r = 0; r < n; ++r) result.cost += cost[r * n + result.column[r]];
  return result;
}

}  // namespace tcode
