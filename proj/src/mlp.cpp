#include "msvae/mlp.hpp"

#include <cmath>

namespace msvae {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError("MlpSpec: need at least input and output widths");
  }
  for (Index w : layer_widths) {
    if (w < 1) throw ConfigError("MlpSpec: layer widths must be >= 1");
  }
}

Matrix apply_activation(Activation act, const Matrix& x) {
  switch (act) {
    case Activation::kRelu:
      return x.cwiseMax(0.0);
    case Activation::kTanh:
      return x.array().tanh().matrix();
    case Activation::kIdentity:
      break;
  }
  return x;
}

Var apply_activation(Activation act, Var x) {
  switch (act) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

Matrix glorot_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng);
  return w;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_width() != layers_[i - 1].out_width()) {
      throw DimensionError("Mlp: layer " + std::to_string(i) +
                           " input width does not match previous output");
    }
  }
}

Mlp Mlp::create(const MlpSpec& spec, Rng& rng, std::string_view prefix) {
  spec.validate();
  std::vector<DenseLayer> layers;
  const std::size_t n = spec.num_layers();
  for (std::size_t i = 0; i < n; ++i) {
    const Index in = spec.layer_widths[i];
    const Index out = spec.layer_widths[i + 1];
    const std::string base = std::string(prefix) + "." + std::to_string(i);
    layers.push_back(DenseLayer{
        Param(base + ".weight", glorot_uniform(in, out, rng)),
        Param(base + ".bias", Matrix::Zero(1, out)),
        i + 1 == n ? Activation::kIdentity : spec.hidden_activation});
  }
  return Mlp(std::move(layers));
}

Index Mlp::input_width() const {
  return layers_.empty() ? 0 : layers_.front().in_width();
}

Index Mlp::output_width() const {
  return layers_.empty() ? 0 : layers_.back().out_width();
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.cols() != input_width()) {
    throw DimensionError("Mlp: input " + shape_string(x) +
                         " does not match input width " +
                         std::to_string(input_width()));
  }
  Matrix h = x;
  for (const DenseLayer& layer : layers_) {
    Matrix a = h * layer.weight.value;
    a.rowwise() += layer.bias.value.row(0);
    h = apply_activation(layer.activation, a);
  }
  return h;
}

Var Mlp::forward(Tape& tape, Var x) {
  if (x.cols() != input_width()) {
    throw DimensionError("Mlp: input " + shape_string(x.value()) +
                         " does not match input width " +
                         std::to_string(input_width()));
  }
  Var h = x;
  for (DenseLayer& layer : layers_) {
    Var a = add_row(matmul(h, tape.parameter(layer.weight)),
                    tape.parameter(layer.bias));
    h = apply_activation(layer.activation, a);
  }
  return h;
}

void Mlp::append_parameters(std::vector<Param*>& out) {
  for (DenseLayer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
}

void Mlp::append_parameters(std::vector<const Param*>& out) const {
  for (const DenseLayer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
}

Matrix mlp_forward(const MlpSpec& spec, std::span<const Param> params,
                   const Matrix& x) {
  spec.validate();
  const std::size_t n = spec.num_layers();
  if (params.size() != 2 * n) {
    throw DimensionError("mlp_forward: expected " + std::to_string(2 * n) +
                         " parameter tensors, got " +
                         std::to_string(params.size()));
  }
  std::vector<DenseLayer> layers;
  layers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Param& w = params[2 * i];
    const Param& b = params[2 * i + 1];
    if (w.value.rows() != spec.layer_widths[i] ||
        w.value.cols() != spec.layer_widths[i + 1] || b.value.rows() != 1 ||
        b.value.cols() != spec.layer_widths[i + 1]) {
      throw DimensionError("mlp_forward: layer " + std::to_string(i) +
                           " parameters " + shape_string(w.value) + "/" +
                           shape_string(b.value) + " do not match widths");
    }
    layers.push_back(DenseLayer{
        w, b, i + 1 == n ? Activation::kIdentity : spec.hidden_activation});
  }
  return Mlp(std::move(layers)).forward(x);
}

}  // namespace msvae
