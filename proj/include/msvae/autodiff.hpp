#ifndef MSVAE_AUTODIFF_HPP_
#define MSVAE_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "msvae/matrix.hpp"

namespace msvae {

/// A named trainable tensor. `grad` always has the shape of `value`.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Param() = default;
  Param(std::string name, Matrix value, bool trainable = true);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Reverse-mode gradient tape over dense matrices.
///
/// Forward operations append nodes; backward() walks them in reverse and
/// accumulates d(loss)/d(param) into Param::grad for every trainable
/// parameter leaf. Frozen parameters are recorded as constants so no work is
/// spent on their gradients.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Param& param);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a 1x1 node of
  /// this tape.
  void backward(Var loss);

  const Matrix& value(std::size_t index) const { return nodes_[index].value; }
  /// Gradient of the last backward() target w.r.t. a node; empty matrix when
  /// the node did not influence the loss.
  const Matrix& grad(Var v) const { return nodes_[v.index()].grad; }
  bool requires_grad(std::size_t index) const {
    return nodes_[index].requires_grad;
  }
  std::size_t size() const { return nodes_.size(); }

  /// Appends an interior node. `backprop` is skipped when no input requires a
  /// gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backprop backprop);

  /// Adds `contribution` into the gradient buffer of node `index`.
  void accumulate(std::size_t index, const Matrix& contribution);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Param* param = nullptr;
    bool requires_grad = false;
    Backprop backprop;
  };

  void check_owned(Var v, const char* op) const;

  std::vector<Node> nodes_;
};

// Recorded operations. Shapes are checked eagerly and raise DimensionError.

Var matmul(Var a, Var b);
/// x + bias broadcast over rows; bias is 1 x x.cols.
Var add_row(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; either operand may be 1x1 (scalar broadcast).
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var relu(Var a);
Var tanh(Var a);
/// Elementwise clamp; the gradient is zero where the bound is active.
Var clamp(Var a, double lo, double hi);
Var slice_cols(Var a, Index start, Index count);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Sum of squared entries, 1x1.
Var sum_squares(Var a);

}  // namespace msvae

#endif  // MSVAE_AUTODIFF_HPP_
