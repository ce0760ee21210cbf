#include "msvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "msvae/adam.hpp"

namespace msvae {

namespace {

constexpr std::uint64_t kTrainStream = 1;

void check_finite_param(const Param& p) {
  if (!p.value.allFinite()) {
    throw NumericalError("parameter '" + p.name + "' is not finite");
  }
}

}  // namespace

std::vector<Param*> GaussianVae::parameters() {
  std::vector<Param*> out;
  encoder.append_parameters(out);
  decoder.append_parameters(out);
  out.push_back(&log_gamma);
  return out;
}

std::vector<const Param*> GaussianVae::parameters() const {
  std::vector<const Param*> out;
  encoder.append_parameters(out);
  decoder.append_parameters(out);
  out.push_back(&log_gamma);
  return out;
}

Index GaussianVae::trainable_scalar_count() const {
  Index count = 0;
  for (const Param* p : parameters()) {
    if (p->trainable) count += p->size();
  }
  return count;
}

void GaussianVae::validate() const {
  if (d_x < 1 || d_z < 1) throw DimensionError("GaussianVae: empty dims");
  if (encoder.input_width() != d_x || encoder.output_width() != 2 * d_z) {
    throw DimensionError("GaussianVae: encoder maps " +
                         std::to_string(encoder.input_width()) + " -> " +
                         std::to_string(encoder.output_width()) +
                         ", expected " + std::to_string(d_x) + " -> " +
                         std::to_string(2 * d_z));
  }
  if (decoder.input_width() != d_z || decoder.output_width() != d_x) {
    throw DimensionError("GaussianVae: decoder maps " +
                         std::to_string(decoder.input_width()) + " -> " +
                         std::to_string(decoder.output_width()) +
                         ", expected " + std::to_string(d_z) + " -> " +
                         std::to_string(d_x));
  }
  if (log_gamma.value.rows() != 1 || log_gamma.value.cols() != 1) {
    throw DimensionError("GaussianVae: log_gamma must be 1x1");
  }
}

GaussianVae make_vae(const VaeArchitecture& arch, Rng& rng) {
  if (!(arch.init_gamma > 0.0)) {
    throw ConfigError("make_vae: init_gamma must be > 0");
  }
  MlpSpec enc{{arch.d_x}, arch.activation};
  enc.layer_widths.insert(enc.layer_widths.end(), arch.hidden.begin(),
                          arch.hidden.end());
  enc.layer_widths.push_back(2 * arch.d_z);
  MlpSpec dec{{arch.d_z}, arch.activation};
  dec.layer_widths.insert(dec.layer_widths.end(), arch.hidden.begin(),
                          arch.hidden.end());
  dec.layer_widths.push_back(arch.d_x);

  GaussianVae vae;
  vae.encoder = Mlp::create(enc, rng, "encoder");
  vae.decoder = Mlp::create(dec, rng, "decoder");
  vae.log_gamma =
      Param("log_gamma", Matrix::Constant(1, 1, std::log(arch.init_gamma)));
  vae.d_x = arch.d_x;
  vae.d_z = arch.d_z;
  vae.validate();
  return vae;
}

Posterior encode(const GaussianVae& vae, const Matrix& x) {
  if (x.cols() != vae.d_x) {
    throw DimensionError("encode: input " + shape_string(x) +
                         " does not match d_x=" + std::to_string(vae.d_x));
  }
  Matrix h = vae.encoder.forward(x);
  return Posterior{h.leftCols(vae.d_z),
                   h.rightCols(vae.d_z).cwiseMax(kLogvarMin).cwiseMin(kLogvarMax)};
}

double gaussian_recon_nll(const Matrix& x, const Matrix& x_mean, double gamma) {
  require_same_shape(x, x_mean, "gaussian_recon_nll");
  if (!(gamma > 0.0)) {
    throw DomainError("gaussian_recon_nll: gamma must be > 0, got " +
                      std::to_string(gamma));
  }
  if (x.rows() == 0) return 0.0;
  const double d = static_cast<double>(x.cols());
  const double n = static_cast<double>(x.rows());
  return 0.5 * d * std::log(2.0 * std::numbers::pi * gamma) +
         (x - x_mean).squaredNorm() / (2.0 * gamma * n);
}

ElboGraph record_elbo(Tape& tape, GaussianVae& vae, const Matrix& x,
                      const Matrix& noise, double beta) {
  if (x.cols() != vae.d_x) {
    throw DimensionError("elbo: input " + shape_string(x) +
                         " does not match d_x=" + std::to_string(vae.d_x));
  }
  if (noise.rows() != x.rows() || noise.cols() != vae.d_z) {
    throw DimensionError("elbo: noise " + shape_string(noise) +
                         " must be (" + std::to_string(x.rows()) + "x" +
                         std::to_string(vae.d_z) + ")");
  }
  if (!(beta >= 0.0)) throw ConfigError("elbo: beta must be >= 0");
  const double n = static_cast<double>(std::max<Index>(x.rows(), 1));
  const double d_x = static_cast<double>(vae.d_x);
  const double d_z = static_cast<double>(vae.d_z);

  Var input = tape.constant(x);
  Var h = vae.encoder.forward(tape, input);
  Var mu = slice_cols(h, 0, vae.d_z);
  Var logvar = clamp(slice_cols(h, vae.d_z, vae.d_z), kLogvarMin, kLogvarMax);
  Var z = add(mu, mul(exp(scale(logvar, 0.5)), tape.constant(noise)));
  Var x_mean = vae.decoder.forward(tape, z);

  Var lg = tape.parameter(vae.log_gamma);
  Var log_term =
      scale(add_scalar(lg, std::log(2.0 * std::numbers::pi)), 0.5 * d_x);
  Var fit_term = mul(scale(sum_squares(sub(input, x_mean)), 0.5 / n),
                     exp(scale(lg, -1.0)));
  Var recon = add(log_term, fit_term);

  Var kl = add_scalar(
      scale(sub(add(sum_squares(mu), sum(exp(logvar))), sum(logvar)),
            0.5 / n),
      -0.5 * d_z);
  Var total = add(recon, scale(kl, beta));
  return ElboGraph{total, recon, kl};
}

ElboBreakdown elbo_loss(const GaussianVae& vae, const Matrix& x,
                        const Matrix& noise, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("elbo: beta must be >= 0");
  Posterior post = encode(vae, x);
  Matrix z = reparameterize(post.mu, post.logvar, noise);
  Matrix x_mean = decode_sample(vae, z);
  ElboBreakdown out;
  out.recon_nll = gaussian_recon_nll(x, x_mean, vae.gamma());
  out.kl = kl_diag_gaussian(post.mu, post.logvar);
  out.beta = beta;
  out.total = out.recon_nll + beta * out.kl;
  return out;
}

Matrix decode_sample(const GaussianVae& vae, const Matrix& z) {
  if (z.cols() != vae.d_z) {
    throw DimensionError("decode: latent " + shape_string(z) +
                         " does not match d_z=" + std::to_string(vae.d_z));
  }
  return vae.decoder.forward(z);
}

Matrix decode_sample(const GaussianVae& vae, const Matrix& z,
                     const Matrix& noise) {
  Matrix mean = decode_sample(vae, z);
  require_same_shape(mean, noise, "decode_sample");
  return mean + std::sqrt(vae.gamma()) * noise;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
  if (!(init_gamma > 0.0)) {
    throw ConfigError("TrainConfig: init_gamma must be > 0");
  }
  if (!(beta >= 0.0)) throw ConfigError("TrainConfig: beta must be >= 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (latent_dim < 1) throw ConfigError("TrainConfig: latent_dim must be >= 1");
  for (Index w : hidden) {
    if (w < 1) throw ConfigError("TrainConfig: hidden widths must be >= 1");
  }
}

TrainingLog train(GaussianVae& vae, const Matrix& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  vae.validate();
  if (data.cols() != vae.d_x) {
    throw DimensionError("train: data " + shape_string(data) +
                         " does not match d_x=" + std::to_string(vae.d_x));
  }
  TrainingLog log;
  if (cfg.epochs == 0) {
    vae.trained = true;
    return log;
  }
  if (data.rows() == 0) throw DomainError("train: empty dataset");

  Rng rng(derive_seed(cfg.seed, kTrainStream));
  std::vector<Param*> params = vae.parameters();
  AdamState adam;
  std::vector<Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batch = std::min(cfg.batch_size, data.rows());

  for (std::uint64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    ElboBreakdown sum{0.0, 0.0, cfg.beta, 0.0};
    for (Index start = 0; start < data.rows(); start += batch) {
      const Index rows = std::min(batch, data.rows() - start);
      Matrix x(rows, data.cols());
      for (Index r = 0; r < rows; ++r) {
        x.row(r) = data.row(order[static_cast<std::size_t>(start + r)]);
      }
      Matrix noise = standard_normal(rows, vae.d_z, rng);

      for (Param* p : params) p->zero_grad();
      Tape tape;
      ElboGraph g = record_elbo(tape, vae, x, noise, cfg.beta);
      const double total = g.total.value()(0, 0);
      if (!std::isfinite(total)) {
        throw NumericalError("train: non-finite loss at epoch " +
                             std::to_string(epoch));
      }
      tape.backward(g.total);
      adam_step(adam, params, cfg.lr);

      const double w = static_cast<double>(rows);
      sum.recon_nll += w * g.recon_nll.value()(0, 0);
      sum.kl += w * g.kl.value()(0, 0);
      sum.total += w * total;
    }
    const double n = static_cast<double>(data.rows());
    sum.recon_nll /= n;
    sum.kl /= n;
    sum.total /= n;
    for (const Param* p : params) {
      if (p->trainable && !p->value.allFinite()) {
        throw NumericalError("train: parameter '" + p->name +
                             "' became non-finite at epoch " +
                             std::to_string(epoch));
      }
    }
    log.epochs.push_back(sum);
    log.gamma.push_back(vae.gamma());
  }
  check_finite_param(vae.log_gamma);
  vae.trained = true;
  return log;
}

std::string_view to_string(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::kWholeModel:
      return "whole";
    case FineTuneMode::kInnerLayer:
      return "inner";
    case FineTuneMode::kOuterLayer:
      return "outer";
  }
  return "whole";
}

FineTuneMode parse_finetune_mode(std::string_view name) {
  if (name == "whole" || name == "whole_model") return FineTuneMode::kWholeModel;
  if (name == "inner" || name == "inner_layer") return FineTuneMode::kInnerLayer;
  if (name == "outer" || name == "outer_layer") return FineTuneMode::kOuterLayer;
  throw ConfigError("unknown fine-tune mode '" + std::string(name) + "'");
}

namespace {

DenseLayer near_identity_layer(Index width, Rng& rng, double noise_scale,
                               const std::string& name) {
  Matrix w = Matrix::Identity(width, width);
  if (noise_scale != 0.0) w += noise_scale * standard_normal(width, width, rng);
  return DenseLayer{Param(name + ".weight", std::move(w)),
                    Param(name + ".bias", Matrix::Zero(1, width)),
                    Activation::kIdentity};
}

void set_trainable(GaussianVae& vae, bool trainable) {
  for (Param* p : vae.parameters()) p->trainable = trainable;
}

}  // namespace

GaussianVae finetune_prepare(const GaussianVae& vae, FineTuneMode mode,
                             Rng& rng, double noise_scale) {
  vae.validate();
  GaussianVae out = vae;
  auto& enc = out.encoder.layers();
  auto& dec = out.decoder.layers();
  switch (mode) {
    case FineTuneMode::kWholeModel:
      set_trainable(out, true);
      break;
    case FineTuneMode::kInnerLayer:
      set_trainable(out, false);
      enc.push_back(near_identity_layer(2 * out.d_z, rng, noise_scale,
                                        "encoder.inserted_out"));
      dec.insert(dec.begin(), near_identity_layer(out.d_z, rng, noise_scale,
                                                  "decoder.inserted_in"));
      break;
    case FineTuneMode::kOuterLayer:
      set_trainable(out, false);
      enc.insert(enc.begin(), near_identity_layer(out.d_x, rng, noise_scale,
                                                  "encoder.inserted_in"));
      dec.push_back(near_identity_layer(out.d_x, rng, noise_scale,
                                        "decoder.inserted_out"));
      break;
    default:
      throw ConfigError("finetune_prepare: unknown mode");
  }
  out.log_gamma.trainable = false;
  out.validate();
  return out;
}

}  // namespace msvae
