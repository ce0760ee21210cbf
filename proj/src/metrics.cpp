#include "msvae/metrics.hpp"

#include <string>

namespace msvae {

std::vector<double> row_norms(const Matrix& samples) {
  std::vector<double> out(static_cast<std::size_t>(samples.rows()));
  for (Index i = 0; i < samples.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = samples.row(i).norm();
  }
  return out;
}

std::uint64_t Histogram::total() const {
  std::uint64_t sum = underflow + overflow;
  for (std::uint64_t c : counts) sum += c;
  return sum;
}

std::vector<double> linear_edges(double lo, double hi, std::size_t count) {
  if (count < 1 || !(hi > lo)) {
    throw ConfigError("linear_edges: need count >= 1 and hi > lo");
  }
  std::vector<double> edges(count + 1);
  for (std::size_t i = 0; i <= count; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) /
                        static_cast<double>(count);
  }
  return edges;
}

Histogram histogram(std::span<const double> values,
                    std::span<const double> edges) {
  if (edges.size() < 2) {
    throw ConfigError("histogram: need at least two bin edges");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw ConfigError("histogram: bin edges must be strictly increasing");
    }
  }
  Histogram h;
  h.bin_edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  for (double v : values) {
    if (v < edges.front()) {
      ++h.underflow;
    } else if (v >= edges.back()) {
      ++h.overflow;
    } else {
      // First edge strictly greater than v closes v's bin.
      auto it = std::upper_bound(edges.begin(), edges.end(), v);
      ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
  }
  return h;
}

Histogram norm_histogram(const Matrix& samples, std::span<const double> edges) {
  const std::vector<double> norms = row_norms(samples);
  return histogram(norms, edges);
}

RecoveryStats recovery_stats(const Matrix& samples) {
  if (samples.rows() == 0) throw DomainError("recovery_stats: empty sample");
  const std::vector<double> norms = row_norms(samples);
  RecoveryStats s;
  std::size_t below = 0, within = 0;
  for (double r : norms) {
    s.mean_norm += r;
    s.w1_to_unit += std::abs(r - 1.0);
    if (r < 0.95) ++below;
    if (r >= 0.95 && r <= 1.05) ++within;
  }
  const double n = static_cast<double>(norms.size());
  s.mean_norm /= n;
  s.w1_to_unit /= n;
  s.frac_below = static_cast<double>(below) / n;
  s.frac_within = static_cast<double>(within) / n;
  return s;
}

double inverse_distance_similarity(RowRef x, RowRef y) {
  return 1.0 / (1.0 + (x - y).norm());
}

double diversity(const Matrix& samples, const SimilarityFn& sim) {
  const Index n = samples.rows();
  if (n < 2) throw DomainError("diversity: need at least two samples");
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) total += sim(samples.row(i), samples.row(j));
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return 1.0 - total / pairs;
}

double novelty(const Matrix& samples, const Matrix& reference,
               const SimilarityFn& sim, double threshold) {
  if (samples.rows() == 0) throw DomainError("novelty: empty sample set");
  if (reference.rows() == 0) throw DomainError("novelty: empty reference set");
  if (samples.cols() != reference.cols()) {
    throw DimensionError("novelty: samples " + shape_string(samples) +
                         " vs reference " + shape_string(reference));
  }
  std::size_t novel = 0;
  for (Index i = 0; i < samples.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < reference.rows(); ++j) {
      best = std::max(best, sim(samples.row(i), reference.row(j)));
    }
    if (best < threshold) ++novel;
  }
  return static_cast<double>(novel) / static_cast<double>(samples.rows());
}

}  // namespace msvae
