#ifndef MSVAE_MATRIX_HPP_
#define MSVAE_MATRIX_HPP_

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "msvae/errors.hpp"

namespace msvae {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Row-major so that one row is one data point and the raw buffer matches the
// on-disk payload order.
using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = VectorX<double>;

using Rng = std::mt19937_64;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a,
                        const Eigen::EigenBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_string(a) + " vs " + shape_string(b));
  }
}

/// Checked matrix product. Output has shape (a.rows, b.cols).
template <typename A, typename B>
MatrixX<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a,
                                   const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a) +
                         " by " + shape_string(b));
  }
  return a * b;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// i.i.d. standard normal draws, filled in row-major order.
template <typename Scalar = double>
MatrixX<Scalar> standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  MatrixX<Scalar> out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

/// SplitMix64 finalizer; derives independent stream seeds from one seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace msvae

#endif  // MSVAE_MATRIX_HPP_
