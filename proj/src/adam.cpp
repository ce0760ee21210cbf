#include "msvae/adam.hpp"

#include <cmath>
#include <string>

namespace msvae {

void adam_step(AdamState& state, std::span<Param* const> params, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("adam_step: learning rate must be > 0, got " +
                      std::to_string(lr));
  }
  if (state.first_moment.empty() && state.step_count == 0) {
    for (const Param* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(
          Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " +
                         std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 - std::pow(state.beta1, t);
  const double corr2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.trainable) continue;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    require_same_shape(m, p.grad, "adam_step");
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m.array() / corr1) /
                       ((v.array() / corr2).sqrt() + state.epsilon);
  }
}

}  // namespace msvae
