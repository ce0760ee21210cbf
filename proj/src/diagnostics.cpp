#include "msvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "msvae/text.hpp"

namespace msvae {

VarianceCensus census_from_variances(std::span<const double> variances,
                                     double tolerance) {
  if (!(tolerance > 0.0 && tolerance < 0.5)) {
    throw ConfigError("census: tolerance must lie in (0, 0.5)");
  }
  VarianceCensus c;
  c.tolerance = tolerance;
  c.per_dim.assign(variances.begin(), variances.end());
  for (double v : variances) {
    if (v < tolerance) {
      ++c.lo;
    } else if (v > 1.0 - tolerance) {
      ++c.hi;
    } else {
      ++c.mid;
    }
  }
  return c;
}

VarianceCensus encoder_variance_census(const GaussianVae& vae,
                                       const Matrix& data, double tolerance,
                                       CensusAggregation aggregation) {
  if (data.rows() == 0) throw DomainError("census: empty dataset");
  const Matrix var = encode(vae, data).logvar.array().exp().matrix();
  std::vector<double> per_dim(static_cast<std::size_t>(var.cols()));
  for (Index j = 0; j < var.cols(); ++j) {
    if (aggregation == CensusAggregation::kMean) {
      per_dim[static_cast<std::size_t>(j)] = var.col(j).mean();
    } else {
      std::vector<double> col(var.col(j).begin(), var.col(j).end());
      const std::size_t mid = col.size() / 2;
      std::nth_element(col.begin(), col.begin() + mid, col.end());
      double med = col[mid];
      if (col.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(col.begin(), col.begin() + mid));
      }
      per_dim[static_cast<std::size_t>(j)] = med;
    }
  }
  return census_from_variances(per_dim, tolerance);
}

VarianceTrajectory analyze_trajectory(std::span<const double> gamma_log,
                                      const TrajectoryRule& rule) {
  if (gamma_log.empty()) throw DomainError("analyze_trajectory: empty log");
  for (double v : gamma_log) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError("analyze_trajectory: decoder variance must be > 0");
    }
  }
  VarianceTrajectory t;
  t.values.assign(gamma_log.begin(), gamma_log.end());
  const std::size_t n = t.values.size();

  const auto tail = static_cast<std::size_t>(
      std::ceil(rule.tail_fraction * static_cast<double>(n)));
  const std::size_t k = std::clamp<std::size_t>(tail, 1, n);
  double sum = 0.0;
  for (std::size_t i = n - k; i < n; ++i) sum += t.values[i];
  t.converged_value = sum / static_cast<double>(k);

  const std::size_t w = std::min(rule.window, n - 1);
  if (w == 0) {
    t.convergence_epoch = 0;
    return t;
  }
  // Scan backwards for the longest suffix of windows that all stay within
  // tolerance.
  std::optional<std::size_t> first;
  for (std::size_t e = n - w; e-- > 0;) {
    const double rel = std::abs(t.values[e + w] - t.values[e]) / t.values[e];
    if (!(rel < rule.relative_tolerance)) break;
    first = e;
  }
  t.convergence_epoch = first;
  return t;
}

ConditionReport diagnose_stage(const GaussianVae& vae, const Matrix& stage_input,
                               std::size_t stage_index,
                               const DiagnoseOptions& options) {
  ConditionReport r;
  r.stage = stage_index;
  r.gamma_final = vae.gamma();
  r.census = encoder_variance_census(vae, stage_input, options.tolerance,
                                     options.aggregation);
  r.trials = options.trials;
  r.minimal_improvement = r.gamma_final >= kMinimalImprovementGamma;

  Rng rng(derive_seed(options.seed, stage_index));
  const RowVector z = standard_normal(1, vae.d_z, rng);
  auto generator = [&](const RowVector& latent) -> Matrix {
    Matrix zm = latent;
    return decode_sample(vae, zm, standard_normal(1, vae.d_x, rng));
  };
  auto exact = [](const Matrix& a, const Matrix& b) { return a == b; };
  r.decoder_diversity =
      decoder_diversity_probe(generator, z, options.trials, exact);
  return r;
}

std::vector<ConditionReport> diagnose_stack(
    const StageStack& stack, const Matrix& data, const DiagnoseOptions& options,
    std::span<const std::vector<double>> gamma_logs) {
  std::vector<ConditionReport> out;
  Matrix x = data;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    if (k > 0) {
      x = encode_dataset(stack[k - 1], x, options.encode_mode,
                         derive_seed(options.seed, 1000 + k),
                         static_cast<std::uint32_t>(k - 1))
              .vectors;
    }
    ConditionReport r = diagnose_stage(stack[k], x, k, options);
    if (k > 0) r.gamma_not_increasing = r.gamma_final <= out.back().gamma_final;
    if (k < gamma_logs.size() && !gamma_logs[k].empty()) {
      r.trajectory = analyze_trajectory(gamma_logs[k]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_condition_reports(std::span<const ConditionReport> reports) {
  std::ostringstream os;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const ConditionReport& r = reports[i];
    if (i > 0) os << "\n";
    os << "stage: " << r.stage << "\n";
    os << "gamma_final: " << format_double(r.gamma_final) << "\n";
    os << "tolerance: " << format_double(r.census.tolerance) << "\n";
    os << "census_lo: " << r.census.lo << "\n";
    os << "census_mid: " << r.census.mid << "\n";
    os << "census_hi: " << r.census.hi << "\n";
    os << "census_row: (" << r.census.lo << ", " << r.census.mid << ", "
       << r.census.hi << ")\n";
    os << "encoder_variance:";
    for (double v : r.census.per_dim) os << " " << format_double(v);
    os << "\n";
    os << "trials: " << r.trials << "\n";
    os << "decoder_diversity: " << r.decoder_diversity << "\n";
    if (r.trajectory) {
      os << "gamma_converged: " << format_double(r.trajectory->converged_value)
         << "\n";
      os << "gamma_convergence_epoch: ";
      if (r.trajectory->convergence_epoch) {
        os << *r.trajectory->convergence_epoch;
      } else {
        os << "none";
      }
      os << "\n";
    }
    if (r.stage > 0) {
      os << "gamma_order: "
         << (r.gamma_not_increasing ? "not_increasing" : "increasing") << "\n";
    }
    if (r.minimal_improvement) {
      os << "note: minimal further improvement expected (gamma >= "
         << format_double(kMinimalImprovementGamma) << ")\n";
    }
  }
  return os.str();
}

}  // namespace msvae
