#ifndef MSVAE_METRICS_HPP_
#define MSVAE_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "msvae/matrix.hpp"

namespace msvae {

/// W1 between the empirical distributions of `a` and `b` (equal weights per
/// sample). Computed as the integral of |F_a^{-1}(t) - F_b^{-1}(t)| over
/// t in [0, 1]; the breakpoints i/n and j/m are compared in exact integer
/// arithmetic so unequal sizes need no floating-point bookkeeping.
template <typename Scalar>
Scalar wasserstein1_empirical(std::span<const Scalar> a,
                              std::span<const Scalar> b) {
  if (a.empty() || b.empty()) {
    throw DomainError("wasserstein1_empirical: empty sample");
  }
  std::vector<Scalar> sa(a.begin(), a.end());
  std::vector<Scalar> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const std::uint64_t n = sa.size();
  const std::uint64_t m = sb.size();
  // Quantile level t is represented as an integer in units of 1/(n*m).
  std::uint64_t i = 0, j = 0, t = 0;
  Scalar total(0);
  while (i < n && j < m) {
    const std::uint64_t next_a = (i + 1) * m;
    const std::uint64_t next_b = (j + 1) * n;
    const std::uint64_t next = std::min(next_a, next_b);
    total += static_cast<Scalar>(next - t) * std::abs(sa[i] - sb[j]);
    t = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return total / static_cast<Scalar>(n * m);
}

template <typename Scalar>
Scalar wasserstein1_empirical(const std::vector<Scalar>& a,
                              const std::vector<Scalar>& b) {
  return wasserstein1_empirical(std::span<const Scalar>(a),
                                std::span<const Scalar>(b));
}

/// Row-wise Euclidean norms.
std::vector<double> row_norms(const Matrix& samples);

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;

  std::uint64_t total() const;
};

/// `count` equal-width bins over [lo, hi].
std::vector<double> linear_edges(double lo, double hi, std::size_t count);

/// Histogram of values over left-closed bins [e_i, e_{i+1}). Values below the
/// first edge are underflow, values at or above the last edge overflow.
Histogram histogram(std::span<const double> values,
                    std::span<const double> edges);

/// Histogram of row norms.
Histogram norm_histogram(const Matrix& samples, std::span<const double> edges);

struct RecoveryStats {
  double mean_norm = 0.0;
  /// Fraction of rows with norm < 0.95.
  double frac_below = 0.0;
  /// Fraction of rows with 0.95 <= norm <= 1.05.
  double frac_within = 0.0;
  /// W1 between the norm distribution and a point mass at 1.
  double w1_to_unit = 0.0;
};

RecoveryStats recovery_stats(const Matrix& samples);

using RowRef = Eigen::Ref<const RowVector>;
using SimilarityFn = std::function<double(RowRef, RowRef)>;

/// 1 / (1 + ||x - y||), symmetric, in (0, 1], equal to 1 on the diagonal.
double inverse_distance_similarity(RowRef x, RowRef y);

/// 1 - mean similarity over unordered pairs of rows.
double diversity(const Matrix& samples,
                 const SimilarityFn& sim = inverse_distance_similarity);

/// Fraction of sample rows whose most similar reference row has similarity
/// below `threshold`.
double novelty(const Matrix& samples, const Matrix& reference,
               const SimilarityFn& sim = inverse_distance_similarity,
               double threshold = 0.4);

}  // namespace msvae

#endif  // MSVAE_METRICS_HPP_
