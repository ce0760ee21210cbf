#ifndef MSVAE_DIAGNOSTICS_HPP_
#define MSVAE_DIAGNOSTICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msvae/cascade.hpp"
#include "msvae/matrix.hpp"
#include "msvae/vae.hpp"

namespace msvae {

/// Feeds the same latent row to `generator` `trials` times and counts the
/// equivalence classes of the outputs under `equal`. Classes are found by
/// comparing against one representative each, so `equal` only needs to be an
/// equivalence relation (no hashing or ordering).
template <typename Generator, typename Equal>
std::size_t decoder_diversity_probe(Generator&& generator, const RowVector& z,
                                    std::size_t trials, Equal&& equal) {
  if (trials < 1) throw DomainError("decoder_diversity_probe: trials < 1");
  using Output = std::decay_t<decltype(generator(z))>;
  std::vector<Output> representatives;
  for (std::size_t t = 0; t < trials; ++t) {
    Output out = generator(z);
    bool seen = false;
    for (const Output& rep : representatives) {
      if (equal(rep, out)) {
        seen = true;
        break;
      }
    }
    if (!seen) representatives.push_back(std::move(out));
  }
  return representatives.size();
}

enum class CensusAggregation { kMean, kMedian };

/// Posterior-variance census: number of latent dimensions whose aggregated
/// variance is below `tolerance`, within [tolerance, 1 - tolerance], or above
/// 1 - tolerance.
struct VarianceCensus {
  std::size_t lo = 0;
  std::size_t mid = 0;
  std::size_t hi = 0;
  double tolerance = 0.1;
  std::vector<double> per_dim;
};

VarianceCensus census_from_variances(std::span<const double> variances,
                                     double tolerance = 0.1);

VarianceCensus encoder_variance_census(
    const GaussianVae& vae, const Matrix& data, double tolerance = 0.1,
    CensusAggregation aggregation = CensusAggregation::kMean);

struct TrajectoryRule {
  std::size_t window = 100;
  double relative_tolerance = 0.01;
  double tail_fraction = 0.05;
};

struct VarianceTrajectory {
  std::vector<double> values;
  /// Mean over the last tail_fraction of epochs (at least one).
  double converged_value = 0.0;
  /// First epoch e such that every later window [e', e' + w] changes by less
  /// than the relative tolerance of v[e']; w = min(window, n - 1).
  std::optional<std::size_t> convergence_epoch;
};

VarianceTrajectory analyze_trajectory(std::span<const double> gamma_log,
                                      const TrajectoryRule& rule = {});

/// Convergence-condition report for one stage.
struct ConditionReport {
  std::size_t stage = 0;
  double gamma_final = 0.0;
  VarianceCensus census;
  std::size_t trials = 1000;
  std::size_t decoder_diversity = 0;
  std::optional<VarianceTrajectory> trajectory;
  /// Set when this stage's gamma does not exceed the previous stage's.
  bool gamma_not_increasing = false;
  /// Set when gamma >= kMinimalImprovementGamma.
  bool minimal_improvement = false;
};

struct DiagnoseOptions {
  std::size_t trials = 1000;
  double tolerance = 0.1;
  std::uint64_t seed = 0;
  EncodeMode encode_mode = EncodeMode::kPosteriorMean;
  CensusAggregation aggregation = CensusAggregation::kMean;
};

/// Runs the census on `stage_input` and the exact-equality diversity probe
/// with the decoder in sampled mode.
ConditionReport diagnose_stage(const GaussianVae& vae, const Matrix& stage_input,
                               std::size_t stage_index,
                               const DiagnoseOptions& options = {});

/// Diagnoses every stage; stage k's census uses `data` encoded through the
/// stages below it. `gamma_logs`, when non-empty, supplies one trajectory per
/// stage.
std::vector<ConditionReport> diagnose_stack(
    const StageStack& stack, const Matrix& data,
    const DiagnoseOptions& options = {},
    std::span<const std::vector<double>> gamma_logs = {});

/// "key: value" lines, one block per stage separated by blank lines.
std::string format_condition_reports(std::span<const ConditionReport> reports);

}  // namespace msvae

#endif  // MSVAE_DIAGNOSTICS_HPP_
