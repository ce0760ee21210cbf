#ifndef MSVAE_MLP_HPP_
#define MSVAE_MLP_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msvae/autodiff.hpp"
#include "msvae/matrix.hpp"

namespace msvae {

enum class Activation { kIdentity, kRelu, kTanh };

std::string_view to_string(Activation act);
/// Accepts "relu" | "tanh" | "identity"; throws ConfigError otherwise.
Activation parse_activation(std::string_view name);

/// Fully connected architecture: input width first, output width last.
/// Hidden layers use `hidden_activation`; the final layer is affine only.
struct MlpSpec {
  std::vector<Index> layer_widths;
  Activation hidden_activation = Activation::kRelu;

  void validate() const;
  std::size_t num_layers() const { return layer_widths.size() - 1; }
};

/// y = act(x W + b), W is (in x out), b is (1 x out).
struct DenseLayer {
  Param weight;
  Param bias;
  Activation activation = Activation::kIdentity;

  Index in_width() const { return weight.value.rows(); }
  Index out_width() const { return weight.value.cols(); }
};

Matrix apply_activation(Activation act, const Matrix& x);
Var apply_activation(Activation act, Var x);

/// A feed-forward stack of dense layers with per-layer activations.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero biases. Parameter names are
  /// "<prefix>.<i>.weight" / "<prefix>.<i>.bias".
  static Mlp create(const MlpSpec& spec, Rng& rng, std::string_view prefix);

  Matrix forward(const Matrix& x) const;
  Var forward(Tape& tape, Var x);

  Index input_width() const;
  Index output_width() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  void append_parameters(std::vector<Param*>& out);
  void append_parameters(std::vector<const Param*>& out) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Glorot-uniform initialised (in x out) weight matrix.
Matrix glorot_uniform(Index fan_in, Index fan_out, Rng& rng);

/// Evaluates an MLP described by `spec` with a flat parameter list laid out as
/// [W0, b0, W1, b1, ...].
Matrix mlp_forward(const MlpSpec& spec, std::span<const Param> params,
                   const Matrix& x);

}  // namespace msvae

#endif  // MSVAE_MLP_HPP_
