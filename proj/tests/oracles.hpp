#pragma once

// Brute-force reference implementations used as test oracles. Written directly
// from the loss definitions with plain loops; they share no code with the library
// kernels beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tcode/tensor.hpp"

namespace oracle {

using tcode::Shape;
using tcode::Tensor;

inline Tensor gaussian(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = g(rng);
  return t;
}

inline double distance(const Tensor& z, std::size_t k, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < z.dim(2); ++c) {
    const double d = z(k, i, c) - z(k, j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

inline double inner(const Tensor& z, std::size_t k, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < z.dim(2); ++c) s += z(k, i, c) * z(k, j, c);
  return s;
}

inline double cosine(const Tensor& z, std::size_t k, std::size_t a, std::size_t v, std::size_t c) {
  double uw = 0, uu = 0, ww = 0;
  for (std::size_t d = 0; d < z.dim(2); ++d) {
    const double u = z(k, a, d) - z(k, v, d), w = z(k, c, d) - z(k, v, d);
    uw += u * w;
    uu += u * u;
    ww += w * w;
  }
  return uw / std::sqrt(uu * ww);
}

/// Raw sums over i<j and slice pairs a<b.
inline double euclidean_sum(const Tensor& z) {
  const std::size_t s = z.dim(0), b = z.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j)
      for (std::size_t p = 0; p < s; ++p)
        for (std::size_t q = p + 1; q < s; ++q) {
          const double d = distance(z, p, i, j) - distance(z, q, i, j);
          total += d * d;
        }
  return total;
}

inline double orthogonal_sum(const Tensor& z) {
  const std::size_t s = z.dim(0), b = z.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i; j < b; ++j)
      for (std::size_t p = 0; p < s; ++p)
        for (std::size_t q = p + 1; q < s; ++q) {
          const double d = inner(z, p, i, j) - inner(z, q, i, j);
          total += d * d;
        }
  return total;
}

/// Unitary loss via explicit complex arithmetic: rows are [real | imaginary].
inline double unitary_sum(const Tensor& z) {
  const std::size_t s = z.dim(0), b = z.dim(1), h = z.dim(2) / 2;
  auto hermitian = [&](std::size_t k, std::size_t i, std::size_t j) {
    std::complex<double> acc = 0.0;
    for (std::size_t c = 0; c < h; ++c) {
      const std::complex<double> zi(z(k, i, c), z(k, i, h + c)), zj(z(k, j, c), z(k, j, h + c));
      acc += std::conj(zi) * zj;
    }
    return acc;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i; j < b; ++j)
      for (std::size_t p = 0; p < s; ++p)
        for (std::size_t q = p + 1; q < s; ++q) total += std::norm(hermitian(p, i, j) - hermitian(q, i, j));
  return total;
}

/// All vertex-centred triples with unordered endpoints.
inline double conformal_sum(const Tensor& z, std::size_t* triples = nullptr) {
  const std::size_t s = z.dim(0), b = z.dim(1);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < b; ++v)
    for (std::size_t a = 0; a < b; ++a)
      for (std::size_t c = a + 1; c < b; ++c) {
        if (a == v || c == v) continue;
        ++count;
        for (std::size_t p = 0; p < s; ++p)
          for (std::size_t q = p + 1; q < s; ++q) {
            const double d = cosine(z, p, a, v, c) - cosine(z, q, a, v, c);
            total += d * d;
          }
      }
  if (triples) *triples = count;
  return total;
}

inline double invariance_sum(const Tensor& z) {
  double total = 0.0;
  for (std::size_t k = 1; k < z.dim(0); ++k)
    for (std::size_t i = 0; i < z.dim(1); ++i)
      for (std::size_t c = 0; c < z.dim(2); ++c) {
        const double d = z(k, i, c) - z(0, i, c);
        total += d * d;
      }
  return total;
}

/// Cost of comparing block p of z with block perm[p] of z_t, one row.
inline double permutation_cost(const Tensor& z, const Tensor& zt, std::size_t row, std::size_t bs,
                               const std::vector<std::size_t>& perm) {
  double total = 0.0;
  for (std::size_t p = 0; p < perm.size(); ++p)
    for (std::size_t d = 0; d < bs; ++d) {
      const double diff = z(row, p * bs + d) - zt(row, perm[p] * bs + d);
      total += diff * diff;
    }
  return total;
}

/// min over all m! permutations, summed over rows.
inline double enumerate_all(const Tensor& z, const Tensor& zt, std::size_t bs, std::size_t m) {
  double total = 0.0;
  for (std::size_t r = 0; r < z.dim(0); ++r) {
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = INFINITY;
    do best = std::min(best, permutation_cost(z, zt, r, bs, perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    total += best;
  }
  return total;
}

/// Random orthogonal matrix (n x n) from the QR factorization of a Gaussian matrix.
inline Eigen::MatrixXd random_orthogonal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

/// Slice k = scale_k * R_k * slice0 + c_k for random orthogonal R_k and offsets c_k.
inline Tensor similarity_stack(const Tensor& base, std::size_t transforms, std::uint64_t seed, bool scaled) {
  const std::size_t b = base.dim(0), n = base.dim(1);
  Tensor out(Shape{transforms + 1, b, n});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.5, 3.0), shift(-2.0, 2.0);
  for (std::size_t k = 0; k <= transforms; ++k) {
    const Eigen::MatrixXd r = k == 0 ? Eigen::MatrixXd::Identity(n, n) : random_orthogonal(n, seed * 977 + k);
    const double s = k == 0 || !scaled ? 1.0 : scale(rng);
    std::vector<double> c(n, 0.0);
    if (k > 0)
      for (double& v : c) v = shift(rng);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t p = 0; p < n; ++p) {
        double acc = 0.0;
        for (std::size_t q = 0; q < n; ++q) acc += r(p, q) * base(i, q);
        out(k, i, p) = s * acc + c[p];
      }
  }
  return out;
}

/// Applies the same permutation of the point index to every slice.
inline Tensor shuffle_points(const Tensor& z, std::uint64_t seed) {
  const std::size_t s = z.dim(0), b = z.dim(1), n = z.dim(2);
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Tensor out(z.shape());
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t c = 0; c < n; ++c) out(k, i, c) = z(k, order[i], c);
  return out;
}

/// 1-based rank of the true candidate under the worst-rank tie policy, by full sort.
inline std::size_t worst_rank_by_sort(double true_distance, std::vector<double> reference_distances) {
  struct Candidate {
    double d;
    bool is_true;
  };
  std::vector<Candidate> all{{true_distance, true}};
  for (double d : reference_distances) all.push_back({d, false});
  // Ties ordered with the true candidate last.
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.d != b.d) return a.d < b.d;
    return !a.is_true && b.is_true;
  });
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i].is_true) return i + 1;
  return 0;
}

}  // namespace oracle
