#ifndef MSVAE_VAE_HPP_
#define MSVAE_VAE_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "msvae/autodiff.hpp"
#include "msvae/matrix.hpp"
#include "msvae/mlp.hpp"

namespace msvae {

/// Bounds applied to the encoder's log-variance output before it is
/// exponentiated.
inline constexpr double kLogvarMin = -12.0;
inline constexpr double kLogvarMax = 6.0;

/// Gaussian VAE with a diagonal-Gaussian encoder and an isotropic Gaussian
/// decoder whose variance gamma = exp(log_gamma) is itself learned.
///
/// The encoder emits 2*d_z columns: the first d_z are the posterior mean, the
/// rest the posterior log-variance.
struct GaussianVae {
  Mlp encoder;
  Mlp decoder;
  Param log_gamma;
  Index d_x = 0;
  Index d_z = 0;
  bool trained = false;

  double gamma() const { return std::exp(log_gamma.value(0, 0)); }

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  Index trainable_scalar_count() const;
  /// Throws DimensionError unless encoder/decoder widths agree with d_x, d_z.
  void validate() const;
};

struct VaeArchitecture {
  Index d_x = 19;
  Index d_z = 8;
  std::vector<Index> hidden = {512, 512, 512};
  Activation activation = Activation::kRelu;
  double init_gamma = 0.05;
};

GaussianVae make_vae(const VaeArchitecture& arch, Rng& rng);

struct Posterior {
  Matrix mu;
  Matrix logvar;
};

Posterior encode(const GaussianVae& vae, const Matrix& x);

/// z = mu + exp(logvar / 2) * noise, elementwise.
template <typename A, typename B, typename C>
MatrixX<typename A::Scalar> reparameterize(const Eigen::MatrixBase<A>& mu,
                                           const Eigen::MatrixBase<B>& logvar,
                                           const Eigen::MatrixBase<C>& noise) {
  require_same_shape(mu, logvar, "reparameterize");
  require_same_shape(mu, noise, "reparameterize");
  using Scalar = typename A::Scalar;
  return mu.array() + (logvar.array() * Scalar(0.5)).exp() * noise.array();
}

/// Mean over rows of KL(N(mu, diag(exp(logvar))) || N(0, I)).
template <typename A, typename B>
typename A::Scalar kl_diag_gaussian(const Eigen::MatrixBase<A>& mu,
                                    const Eigen::MatrixBase<B>& logvar) {
  require_same_shape(mu, logvar, "kl_diag_gaussian");
  using Scalar = typename A::Scalar;
  if (mu.rows() == 0) return Scalar(0);
  const auto per_entry =
      mu.array().square() + logvar.array().exp() - logvar.array() - Scalar(1);
  return Scalar(0.5) * per_entry.sum() / static_cast<Scalar>(mu.rows());
}

/// Mean over rows of the negative log-density of x under N(x_mean, gamma I).
double gaussian_recon_nll(const Matrix& x, const Matrix& x_mean, double gamma);

struct ElboBreakdown {
  double recon_nll = 0.0;
  double kl = 0.0;
  double beta = 1.0;
  double total = 0.0;
};

/// Loss nodes of one recorded ELBO evaluation.
struct ElboGraph {
  Var total;
  Var recon_nll;
  Var kl;
};

/// Records the negative beta-ELBO on `tape`: recon_nll + beta * kl, with one
/// reparameterized draw per row taken from `noise` (shape rows x d_z).
ElboGraph record_elbo(Tape& tape, GaussianVae& vae, const Matrix& x,
                      const Matrix& noise, double beta);

ElboBreakdown elbo_loss(const GaussianVae& vae, const Matrix& x,
                        const Matrix& noise, double beta);

/// Decoder mean.
Matrix decode_sample(const GaussianVae& vae, const Matrix& z);
/// Decoder mean + sqrt(gamma) * noise.
Matrix decode_sample(const GaussianVae& vae, const Matrix& z,
                     const Matrix& noise);

struct TrainConfig {
  std::uint64_t epochs = 1000;
  Index batch_size = 256;
  double lr = 1e-4;
  double beta = 1.0;
  double init_gamma = 0.05;
  std::uint64_t seed = 0;
  Activation activation = Activation::kRelu;
  std::vector<Index> hidden = {512, 512, 512};
  /// Latent width of a data-space stage; later stages use their input width.
  Index latent_dim = 8;

  void validate() const;
};

struct TrainingLog {
  std::vector<ElboBreakdown> epochs;
  /// Decoder variance at the end of each epoch.
  std::vector<double> gamma;
};

/// Mini-batch Adam on the negative beta-ELBO. Only trainable parameters
/// move. Throws NumericalError naming the epoch on a non-finite loss.
TrainingLog train(GaussianVae& vae, const Matrix& data, const TrainConfig& cfg);

enum class FineTuneMode { kWholeModel, kInnerLayer, kOuterLayer };

std::string_view to_string(FineTuneMode mode);
/// Accepts "whole" | "inner" | "outer" and the long forms "whole_model",
/// "inner_layer", "outer_layer".
FineTuneMode parse_finetune_mode(std::string_view name);

/// Returns a copy of `vae` ready for fine-tuning.
///
///  - whole_model: every parameter trainable except log_gamma.
///  - inner_layer: a square linear layer is appended to the encoder output and
///    one prepended to the decoder input; only these are trainable.
///  - outer_layer: the new layers sit at the encoder input and decoder
///    output instead.
///
/// New layers start at identity + noise_scale * N(0, 1), so the prepared
/// model computes (nearly) the pretrained function. log_gamma is frozen in
/// every mode.
GaussianVae finetune_prepare(const GaussianVae& vae, FineTuneMode mode,
                             Rng& rng, double noise_scale = 1e-3);

}  // namespace msvae

#endif  // MSVAE_VAE_HPP_
