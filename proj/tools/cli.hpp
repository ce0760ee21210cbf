#ifndef MSVAE_TOOLS_CLI_HPP_
#define MSVAE_TOOLS_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "msvae/cascade.hpp"
#include "msvae/diagnostics.hpp"
#include "msvae/manifolds.hpp"
#include "msvae/metrics.hpp"

namespace msvae::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

struct EvalSettings {
  std::size_t bins = 60;
  double hist_lo = 0.0;
  double hist_hi = 1.5;
  Index n = 1000;
  std::vector<std::uint64_t> seeds = {0};
  SampleMode mode = SampleMode::kSampled;
  double novelty_threshold = 0.4;
};

struct FineTuneSettings {
  FineTuneMode mode = FineTuneMode::kInnerLayer;
  /// Curated-set generator used when `finetune` runs without --data.
  ManifoldSpec cap = [] {
    ManifoldSpec s;
    s.kind = ManifoldKind::kSphericalCap;
    return s;
  }();
  Index n = 2000;
  /// Per-stage configs; empty means "reuse the training stages".
  std::vector<TrainConfig> stages;
  /// Overrides the epochs of every fine-tune stage when set.
  std::optional<std::uint64_t> epochs;
  double noise_scale = 1e-3;
  EncodeMode encode_mode = EncodeMode::kPosteriorSample;
  /// Samples with normalized cap-axis coordinate above this count as in-region.
  double region_threshold = 0.4;

  std::vector<TrainConfig> resolve(const std::vector<TrainConfig>& train_stages) const;
};

struct RunConfig {
  ManifoldSpec manifold;
  std::vector<TrainConfig> stages;
  EncodeMode encode_mode = EncodeMode::kPosteriorSample;
  EvalSettings eval;
  FineTuneSettings finetune;
  DiagnoseOptions diagnose;

  RunConfig();
};

/// Strict readers: unknown keys and wrong types throw ConfigError naming the
/// offending path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
ManifoldSpec parse_manifold(const nlohmann::json& j, const std::string& where = "manifold");
TrainConfig parse_train_config(const nlohmann::json& j, const std::string& where);

nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const ManifoldSpec& spec);
nlohmann::json to_json(const TrainConfig& cfg);

std::string_view finetune_mode_name(FineTuneMode mode);

std::uint64_t fnv1a64(std::string_view bytes);

std::string render_histogram_svg(const std::vector<std::string>& labels,
                                 const std::vector<Histogram>& hists);

/// Fraction of rows whose coordinate `axis`, divided by the row norm, exceeds
/// `threshold`.
double region_fraction(const Matrix& samples, Index axis, double threshold);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msvae::cli

#endif  // MSVAE_TOOLS_CLI_HPP_
