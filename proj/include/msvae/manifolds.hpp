#ifndef MSVAE_MANIFOLDS_HPP_
#define MSVAE_MANIFOLDS_HPP_

#include <cstdint>
#include <string_view>

#include "msvae/matrix.hpp"

namespace msvae {

enum class ManifoldKind { kSphere, kSphericalCap, kCircle };

std::string_view to_string(ManifoldKind kind);
ManifoldKind parse_manifold_kind(std::string_view name);

/// Synthetic data manifold: a unit sphere of `intrinsic_dim` (embedded in its
/// first intrinsic_dim + 1 coordinates, then zero padded), a cap of it, or a
/// unit circle.
struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::kSphere;
  Index intrinsic_dim = 2;
  Index ambient_pad = 16;
  Index cap_axis = 0;
  double cap_min = 0.5;
  std::uint64_t seed = 0;

  Index ambient_dim() const;
  void validate() const;
};

/// Points uniform on the unit sphere (normalized Gaussian draws), padded with
/// exact zeros.
Matrix gen_sphere(Index n, const ManifoldSpec& spec);

struct CapDraw {
  Matrix points;
  std::uint64_t attempts = 0;

  double acceptance_rate() const {
    return attempts == 0 ? 0.0
                         : static_cast<double>(points.rows()) /
                               static_cast<double>(attempts);
  }
};

/// Sphere points with coordinate[cap_axis] > cap_min, by rejection. Throws
/// ConfigError when the observed acceptance rate drops below 1e-3.
CapDraw gen_cap_with_stats(Index n, const ManifoldSpec& spec);
Matrix gen_cap(Index n, const ManifoldSpec& spec);

/// Unit circle in the first two coordinates, padded.
Matrix gen_circle(Index n, const ManifoldSpec& spec);

/// Dispatches on spec.kind.
Matrix generate(Index n, const ManifoldSpec& spec);

}  // namespace msvae

#endif  // MSVAE_MANIFOLDS_HPP_
