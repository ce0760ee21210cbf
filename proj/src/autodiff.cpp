#include "msvae/autodiff.hpp"

#include <utility>

namespace msvae {

Param::Param(std::string name, Matrix value, bool trainable)
    : name(std::move(name)),
      value(std::move(value)),
      grad(Matrix::Zero(this->value.rows(), this->value.cols())),
      trainable(trainable) {}

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw StateError("Var: not attached to a tape");
  return tape_->value(index_);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Param& param) {
  if (param.grad.rows() != param.value.rows() ||
      param.grad.cols() != param.value.cols()) {
    param.zero_grad();
  }
  nodes_.push_back(
      Node{param.value, Matrix(), &param, param.trainable, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) {
    throw StateError(std::string(op) + ": variable does not belong to tape");
  }
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs,
               Backprop backprop) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owned(in, "push");
    needs = needs || nodes_[in.index_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, needs,
                        needs ? std::move(backprop) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t index, const Matrix& contribution) {
  Node& node = nodes_[index];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = contribution;
  } else {
    node.grad += contribution;
  }
}

void Tape::backward(Var loss) {
  if (nodes_.empty() || loss.tape_ == nullptr) {
    throw StateError("backward: no forward pass has been recorded");
  }
  check_owned(loss, "backward");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionError("backward: loss must be scalar, got " +
                         shape_string(loss.value()));
  }
  for (Node& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[loss.index_].requires_grad) return;
  nodes_[loss.index_].grad = Matrix::Ones(1, 1);

  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.param != nullptr) {
      node.param->grad += node.grad;
    } else if (node.backprop) {
      node.backprop(*this, node.grad);
    }
  }
}

namespace {

Tape& common_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw StateError(std::string(op) + ": operands on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a, const char* op) {
  if (a.tape() == nullptr) {
    throw StateError(std::string(op) + ": operand not attached to a tape");
  }
  return *a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b, "matmul");
  const std::size_t ia = a.index();
  const std::size_t ib = b.index();
  return t.push(msvae::matmul(a.value(), b.value()), {a, b},
                [ia, ib](Tape& tape, const Matrix& up) {
                  if (tape.requires_grad(ia)) {
                    tape.accumulate(ia, up * tape.value(ib).transpose());
                  }
                  if (tape.requires_grad(ib)) {
                    tape.accumulate(ib, tape.value(ia).transpose() * up);
                  }
                });
}

Var add_row(Var x, Var bias) {
  Tape& t = common_tape(x, bias, "add_row");
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bias.value()) +
                         " does not fit " + shape_string(x.value()));
  }
  const std::size_t ix = x.index();
  const std::size_t ib = bias.index();
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return t.push(std::move(out), {x, bias},
                [ix, ib](Tape& tape, const Matrix& up) {
                  tape.accumulate(ix, up);
                  if (tape.requires_grad(ib)) {
                    tape.accumulate(ib, up.colwise().sum());
                  }
                });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  const std::size_t ia = a.index();
  const std::size_t ib = b.index();
  return t.push(a.value() + b.value(), {a, b},
                [ia, ib](Tape& tape, const Matrix& up) {
                  tape.accumulate(ia, up);
                  tape.accumulate(ib, up);
                });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  const std::size_t ia = a.index();
  const std::size_t ib = b.index();
  return t.push(a.value() - b.value(), {a, b},
                [ia, ib](Tape& tape, const Matrix& up) {
                  tape.accumulate(ia, up);
                  tape.accumulate(ib, -up);
                });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b, "mul");
  const bool a_scalar = a.value().size() == 1;
  const bool b_scalar = b.value().size() == 1;
  const std::size_t ia = a.index();
  const std::size_t ib = b.index();
  if (!a_scalar && !b_scalar) {
    require_same_shape(a.value(), b.value(), "mul");
    return t.push(a.value().cwiseProduct(b.value()), {a, b},
                  [ia, ib](Tape& tape, const Matrix& up) {
                    if (tape.requires_grad(ia)) {
                      tape.accumulate(ia, up.cwiseProduct(tape.value(ib)));
                    }
                    if (tape.requires_grad(ib)) {
                      tape.accumulate(ib, up.cwiseProduct(tape.value(ia)));
                    }
                  });
  }
  // Broadcast the scalar operand over the other one.
  const std::size_t is = a_scalar ? ia : ib;
  const std::size_t im = a_scalar ? ib : ia;
  const Matrix& big = a_scalar ? b.value() : a.value();
  const double s = (a_scalar ? a.value() : b.value())(0, 0);
  return t.push(big * s, {a, b}, [is, im](Tape& tape, const Matrix& up) {
    const double sv = tape.value(is)(0, 0);
    if (tape.requires_grad(im)) tape.accumulate(im, up * sv);
    if (tape.requires_grad(is)) {
      Matrix g(1, 1);
      g(0, 0) = up.cwiseProduct(tape.value(im)).sum();
      tape.accumulate(is, g);
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a, "scale");
  const std::size_t ia = a.index();
  return t.push(a.value() * factor, {a},
                [ia, factor](Tape& tape, const Matrix& up) {
                  tape.accumulate(ia, up * factor);
                });
}

Var add_scalar(Var a, double offset) {
  Tape& t = tape_of(a, "add_scalar");
  const std::size_t ia = a.index();
  return t.push(a.value().array() + offset, {a},
                [ia](Tape& tape, const Matrix& up) { tape.accumulate(ia, up); });
}

Var exp(Var a) {
  Tape& t = tape_of(a, "exp");
  const std::size_t ia = a.index();
  const std::size_t out = t.size();
  return t.push(a.value().array().exp().matrix(), {a},
                [ia, out](Tape& tape, const Matrix& up) {
                  tape.accumulate(ia, up.cwiseProduct(tape.value(out)));
                });
}

Var relu(Var a) {
  Tape& t = tape_of(a, "relu");
  const std::size_t ia = a.index();
  return t.push(a.value().cwiseMax(0.0), {a},
                [ia](Tape& tape, const Matrix& up) {
                  const Matrix& x = tape.value(ia);
                  tape.accumulate(
                      ia, (x.array() > 0.0).select(up, 0.0).matrix());
                });
}

Var tanh(Var a) {
  Tape& t = tape_of(a, "tanh");
  const std::size_t ia = a.index();
  const std::size_t out = t.size();
  return t.push(a.value().array().tanh().matrix(), {a},
                [ia, out](Tape& tape, const Matrix& up) {
                  const Matrix& y = tape.value(out);
                  tape.accumulate(
                      ia, (up.array() * (1.0 - y.array().square())).matrix());
                });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a, "clamp");
  const std::size_t ia = a.index();
  return t.push(a.value().cwiseMax(lo).cwiseMin(hi), {a},
                [ia, lo, hi](Tape& tape, const Matrix& up) {
                  const Matrix& x = tape.value(ia);
                  tape.accumulate(
                      ia, ((x.array() >= lo) && (x.array() <= hi))
                              .select(up, 0.0)
                              .matrix());
                });
}

Var slice_cols(Var a, Index start, Index count) {
  Tape& t = tape_of(a, "slice_cols");
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) +
                         ", " + std::to_string(start + count) +
                         ") outside " + shape_string(a.value()));
  }
  const std::size_t ia = a.index();
  const Index rows = a.rows();
  const Index cols = a.cols();
  return t.push(a.value().middleCols(start, count), {a},
                [ia, rows, cols, start, count](Tape& tape, const Matrix& up) {
                  Matrix g = Matrix::Zero(rows, cols);
                  g.middleCols(start, count) = up;
                  tape.accumulate(ia, g);
                });
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  const std::size_t ia = a.index();
  const Index rows = a.rows();
  const Index cols = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a},
                [ia, rows, cols](Tape& tape, const Matrix& up) {
                  tape.accumulate(ia, Matrix::Constant(rows, cols, up(0, 0)));
                });
}

Var sum_squares(Var a) {
  Tape& t = tape_of(a, "sum_squares");
  const std::size_t ia = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return t.push(std::move(out), {a}, [ia](Tape& tape, const Matrix& up) {
    tape.accumulate(ia, tape.value(ia) * (2.0 * up(0, 0)));
  });
}

}  // namespace msvae
