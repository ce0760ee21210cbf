#ifndef MSVAE_ADAM_HPP_
#define MSVAE_ADAM_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "msvae/autodiff.hpp"

namespace msvae {

/// Moment estimates for one parameter list. Moments are allocated on the
/// first step and stay aligned with the parameter order passed to
/// adam_step().
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update over `params`. Parameters with
/// `trainable == false` are left untouched (their moments are not advanced).
void adam_step(AdamState& state, std::span<Param* const> params, double lr);

}  // namespace msvae

#endif  // MSVAE_ADAM_HPP_
