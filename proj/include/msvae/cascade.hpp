#ifndef MSVAE_CASCADE_HPP_
#define MSVAE_CASCADE_HPP_

#include <cstdint>
#include <string_view>
#include <vector>

#include "msvae/matrix.hpp"
#include "msvae/vae.hpp"

namespace msvae {

enum class EncodeMode : std::uint8_t { kPosteriorSample = 0, kPosteriorMean = 1 };
enum class SampleMode { kSampled, kMeanChain };

std::string_view to_string(EncodeMode mode);
EncodeMode parse_encode_mode(std::string_view name);
std::string_view to_string(SampleMode mode);
SampleMode parse_sample_mode(std::string_view name);

/// Latent vectors of a dataset produced by one stage.
struct LatentDataset {
  std::uint32_t stage_index = 0;
  Matrix vectors;
  EncodeMode encode_mode = EncodeMode::kPosteriorSample;
  std::uint64_t source_seed = 0;
};

/// Ordered VAE stages. Stage 0 maps data space to its latent space; stage
/// k >= 1 maps the latent space of stage k-1 onto a latent space of the same
/// width.
class StageStack {
 public:
  StageStack() = default;
  /// Validates the dimension chain; throws IntegrityError when it is broken.
  explicit StageStack(std::vector<GaussianVae> stages);

  void push_back(GaussianVae stage);

  std::size_t size() const { return stages_.size(); }
  bool empty() const { return stages_.empty(); }
  const GaussianVae& operator[](std::size_t k) const { return stages_[k]; }
  GaussianVae& operator[](std::size_t k) { return stages_[k]; }
  const std::vector<GaussianVae>& stages() const { return stages_; }

  /// dims[0] = d_x of stage 0, dims[k] = d_z of stage k-1.
  std::vector<Index> dims() const;

  void validate() const;

 private:
  std::vector<GaussianVae> stages_;
};

LatentDataset encode_dataset(const GaussianVae& vae, const Matrix& data,
                             EncodeMode mode, std::uint64_t seed,
                             std::uint32_t stage_index = 0);

/// Trains a fresh equal-width stage (d_x = d_z = latents width) on `latents`.
GaussianVae train_stage(const LatentDataset& latents, const TrainConfig& cfg,
                        TrainingLog* log = nullptr);

/// Seed used to encode the training inputs of stage k from stage k-1.
std::uint64_t stage_encode_seed(const TrainConfig& cfg_of_stage_k);

/// Trains stage 0 on `data` and every further stage on the encoded latents of
/// its predecessor. One config per stage; `logs` (when given) receives one
/// training log per stage.
StageStack train_stack(const Matrix& data, std::size_t n_stages,
                       const std::vector<TrainConfig>& cfgs,
                       EncodeMode encode_mode = EncodeMode::kPosteriorSample,
                       std::vector<TrainingLog>* logs = nullptr);

/// Trains the stages of `cfgs` beyond those already present in `stack`.
/// Earlier stages are only used to re-encode the data, so the result equals
/// a from-scratch train_stack() run with the same configs.
void extend_stack(StageStack& stack, const Matrix& data,
                  const std::vector<TrainConfig>& cfgs,
                  EncodeMode encode_mode = EncodeMode::kPosteriorSample,
                  std::vector<TrainingLog>* logs = nullptr);

/// Runs `data` through the encoders of stages [0, upto) and returns the
/// latents that stage `upto` consumes, reproducing the training-time inputs.
Matrix stage_inputs(const StageStack& stack, const Matrix& data,
                    std::size_t upto, const std::vector<TrainConfig>& cfgs,
                    EncodeMode encode_mode);

/// Draws n standard-normal latents at stage `top_stage` and decodes them down
/// to data space. Sampled mode adds sqrt(gamma_k) noise after every decoder;
/// mean_chain passes decoder means.
Matrix cascade_sample(const StageStack& stack, Index n, std::uint64_t seed,
                      SampleMode mode = SampleMode::kSampled);
Matrix cascade_sample(const StageStack& stack, Index n, std::uint64_t seed,
                      SampleMode mode, std::size_t top_stage);

struct FineTuneOptions {
  EncodeMode encode_mode = EncodeMode::kPosteriorSample;
  double noise_scale = 1e-3;
};

/// Fine-tunes a pretrained stack on `curated` data. Stage 0 is always
/// fine-tuned whole-model; each later stage is prepared with `mode` and
/// trained on the curated data re-encoded by the already fine-tuned stage
/// below it.
StageStack finetune_stack(const StageStack& stack, const Matrix& curated,
                          FineTuneMode mode, const std::vector<TrainConfig>& cfgs,
                          const FineTuneOptions& options = {},
                          std::vector<TrainingLog>* logs = nullptr);

/// True when every frozen parameter of `finetuned` has a same-named
/// counterpart in `pretrained` with bit-identical values.
bool frozen_parameters_preserved(const GaussianVae& pretrained,
                                 const GaussianVae& finetuned);

/// Stop-training hint: a stage whose decoder variance reached this level
/// is not expected to improve the samples much further.
inline constexpr double kMinimalImprovementGamma = 0.9;

}  // namespace msvae

#endif  // MSVAE_CASCADE_HPP_
