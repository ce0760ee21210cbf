#include "msvae/cascade.hpp"

#include <cstring>
#include <map>
#include <string>

namespace msvae {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kEncodeStream = 2;
constexpr std::uint64_t kFineTuneStream = 3;

GaussianVae init_stage(Index d_x, Index d_z, const TrainConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, kInitStream));
  return make_vae(
      VaeArchitecture{d_x, d_z, cfg.hidden, cfg.activation, cfg.init_gamma},
      rng);
}

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(),
                     static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

std::string_view to_string(EncodeMode mode) {
  return mode == EncodeMode::kPosteriorMean ? "posterior_mean"
                                            : "posterior_sample";
}

EncodeMode parse_encode_mode(std::string_view name) {
  if (name == "posterior_sample") return EncodeMode::kPosteriorSample;
  if (name == "posterior_mean") return EncodeMode::kPosteriorMean;
  throw ConfigError("unknown encode mode '" + std::string(name) + "'");
}

std::string_view to_string(SampleMode mode) {
  return mode == SampleMode::kMeanChain ? "mean_chain" : "sampled";
}

SampleMode parse_sample_mode(std::string_view name) {
  if (name == "sampled") return SampleMode::kSampled;
  if (name == "mean_chain") return SampleMode::kMeanChain;
  throw ConfigError("unknown sample mode '" + std::string(name) + "'");
}

StageStack::StageStack(std::vector<GaussianVae> stages)
    : stages_(std::move(stages)) {
  validate();
}

void StageStack::push_back(GaussianVae stage) {
  stages_.push_back(std::move(stage));
  try {
    validate();
  } catch (...) {
    stages_.pop_back();
    throw;
  }
}

std::vector<Index> StageStack::dims() const {
  std::vector<Index> out;
  if (stages_.empty()) return out;
  out.push_back(stages_.front().d_x);
  for (const GaussianVae& s : stages_) out.push_back(s.d_z);
  return out;
}

void StageStack::validate() const {
  for (std::size_t k = 0; k < stages_.size(); ++k) {
    const GaussianVae& s = stages_[k];
    try {
      s.validate();
    } catch (const DimensionError& e) {
      throw IntegrityError("stage " + std::to_string(k) + ": " + e.what());
    }
    if (k == 0) continue;
    if (s.d_x != stages_[k - 1].d_z) {
      throw IntegrityError("stage " + std::to_string(k) + " input width " +
                           std::to_string(s.d_x) + " != stage " +
                           std::to_string(k - 1) + " latent width " +
                           std::to_string(stages_[k - 1].d_z));
    }
    if (s.d_z != s.d_x) {
      throw IntegrityError("stage " + std::to_string(k) + " latent width " +
                           std::to_string(s.d_z) + " != its input width " +
                           std::to_string(s.d_x));
    }
  }
}

LatentDataset encode_dataset(const GaussianVae& vae, const Matrix& data,
                             EncodeMode mode, std::uint64_t seed,
                             std::uint32_t stage_index) {
  Posterior post = encode(vae, data);
  LatentDataset out;
  out.stage_index = stage_index;
  out.encode_mode = mode;
  out.source_seed = seed;
  if (mode == EncodeMode::kPosteriorMean) {
    out.vectors = std::move(post.mu);
  } else {
    Rng rng(seed);
    Matrix noise = standard_normal(post.mu.rows(), post.mu.cols(), rng);
    out.vectors = reparameterize(post.mu, post.logvar, noise);
  }
  return out;
}

GaussianVae train_stage(const LatentDataset& latents, const TrainConfig& cfg,
                        TrainingLog* log) {
  if (latents.vectors.rows() == 0 || latents.vectors.cols() == 0) {
    throw DomainError("train_stage: empty latent dataset");
  }
  const Index width = latents.vectors.cols();
  GaussianVae vae = init_stage(width, width, cfg);
  TrainingLog l = train(vae, latents.vectors, cfg);
  if (log != nullptr) *log = std::move(l);
  return vae;
}

std::uint64_t stage_encode_seed(const TrainConfig& cfg_of_stage_k) {
  return derive_seed(cfg_of_stage_k.seed, kEncodeStream);
}

Matrix stage_inputs(const StageStack& stack, const Matrix& data,
                    std::size_t upto, const std::vector<TrainConfig>& cfgs,
                    EncodeMode encode_mode) {
  if (upto > stack.size() || (upto > 0 && upto >= cfgs.size())) {
    throw ConfigError("stage_inputs: need stage " + std::to_string(upto) +
                      " config and trained predecessors");
  }
  Matrix x = data;
  for (std::size_t k = 0; k < upto; ++k) {
    x = encode_dataset(stack[k], x, encode_mode, stage_encode_seed(cfgs[k + 1]),
                       static_cast<std::uint32_t>(k))
            .vectors;
  }
  return x;
}

void extend_stack(StageStack& stack, const Matrix& data,
                  const std::vector<TrainConfig>& cfgs, EncodeMode encode_mode,
                  std::vector<TrainingLog>* logs) {
  if (cfgs.size() < stack.size()) {
    throw ConfigError("extend_stack: stack has more stages than configs");
  }
  if (!stack.empty() && stack[0].d_x != data.cols()) {
    throw DimensionError("extend_stack: data " + shape_string(data) +
                         " does not match stack input width " +
                         std::to_string(stack[0].d_x));
  }
  // Inputs of the last existing stage; the loop encodes them one step further.
  Matrix x = stack.empty() ? data
                           : stage_inputs(stack, data, stack.size() - 1, cfgs,
                                          encode_mode);
  for (std::size_t k = stack.size(); k < cfgs.size(); ++k) {
    const TrainConfig& cfg = cfgs[k];
    TrainingLog log;
    if (k == 0) {
      GaussianVae vae = init_stage(data.cols(), cfg.latent_dim, cfg);
      log = train(vae, data, cfg);
      stack.push_back(std::move(vae));
    } else {
      LatentDataset latents =
          encode_dataset(stack[k - 1], x, encode_mode, stage_encode_seed(cfg),
                         static_cast<std::uint32_t>(k - 1));
      x = std::move(latents.vectors);
      latents.vectors.resize(0, 0);
      GaussianVae vae = init_stage(x.cols(), x.cols(), cfg);
      log = train(vae, x, cfg);
      stack.push_back(std::move(vae));
    }
    if (logs != nullptr) logs->push_back(std::move(log));
  }
}

StageStack train_stack(const Matrix& data, std::size_t n_stages,
                       const std::vector<TrainConfig>& cfgs,
                       EncodeMode encode_mode, std::vector<TrainingLog>* logs) {
  if (n_stages < 1) throw ConfigError("train_stack: need at least one stage");
  if (cfgs.size() != n_stages) {
    throw ConfigError("train_stack: " + std::to_string(n_stages) +
                      " stages but " + std::to_string(cfgs.size()) +
                      " configs");
  }
  StageStack stack;
  extend_stack(stack, data, cfgs, encode_mode, logs);
  return stack;
}

Matrix cascade_sample(const StageStack& stack, Index n, std::uint64_t seed,
                      SampleMode mode) {
  if (stack.empty()) throw StateError("cascade_sample: empty stack");
  return cascade_sample(stack, n, seed, mode, stack.size() - 1);
}

Matrix cascade_sample(const StageStack& stack, Index n, std::uint64_t seed,
                      SampleMode mode, std::size_t top_stage) {
  if (top_stage >= stack.size()) {
    throw ConfigError("cascade_sample: stage " + std::to_string(top_stage) +
                      " requested but stack has " +
                      std::to_string(stack.size()) + " stages");
  }
  if (n < 0) throw ConfigError("cascade_sample: negative sample count");
  for (std::size_t k = 0; k <= top_stage; ++k) {
    if (!stack[k].trained) {
      throw StateError("cascade_sample: stage " + std::to_string(k) +
                       " is untrained");
    }
  }
  Rng rng(seed);
  Matrix z = standard_normal(n, stack[top_stage].d_z, rng);
  for (std::size_t k = top_stage + 1; k-- > 0;) {
    const GaussianVae& stage = stack[k];
    if (mode == SampleMode::kSampled) {
      Matrix noise = standard_normal(n, stage.d_x, rng);
      z = decode_sample(stage, z, noise);
    } else {
      z = decode_sample(stage, z);
    }
  }
  return z;
}

StageStack finetune_stack(const StageStack& stack, const Matrix& curated,
                          FineTuneMode mode, const std::vector<TrainConfig>& cfgs,
                          const FineTuneOptions& options,
                          std::vector<TrainingLog>* logs) {
  if (stack.empty()) throw StateError("finetune_stack: empty stack");
  if (cfgs.size() != stack.size()) {
    throw ConfigError("finetune_stack: " + std::to_string(stack.size()) +
                      " stages but " + std::to_string(cfgs.size()) +
                      " configs");
  }
  if (curated.cols() != stack[0].d_x) {
    throw DimensionError("finetune_stack: curated data " +
                         shape_string(curated) +
                         " does not match stack input width " +
                         std::to_string(stack[0].d_x));
  }
  StageStack out;
  Matrix x = curated;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    const TrainConfig& cfg = cfgs[k];
    if (k > 0) {
      x = encode_dataset(out[k - 1], x, options.encode_mode,
                         stage_encode_seed(cfg), static_cast<std::uint32_t>(k - 1))
              .vectors;
    }
    Rng rng(derive_seed(cfg.seed, kFineTuneStream));
    const FineTuneMode stage_mode = k == 0 ? FineTuneMode::kWholeModel : mode;
    GaussianVae vae =
        finetune_prepare(stack[k], stage_mode, rng, options.noise_scale);
    TrainingLog log = train(vae, x, cfg);
    if (logs != nullptr) logs->push_back(std::move(log));
    out.push_back(std::move(vae));
  }
  return out;
}

bool frozen_parameters_preserved(const GaussianVae& pretrained,
                                 const GaussianVae& finetuned) {
  std::map<std::string, const Param*> by_name;
  for (const Param* p : pretrained.parameters()) by_name[p->name] = p;
  for (const Param* p : finetuned.parameters()) {
    if (p->trainable) continue;
    auto it = by_name.find(p->name);
    if (it == by_name.end()) return false;
    if (!bit_identical(it->second->value, p->value)) return false;
  }
  return true;
}

}  // namespace msvae
