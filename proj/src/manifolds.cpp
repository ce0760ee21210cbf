#include "msvae/manifolds.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace msvae {

namespace {

constexpr double kMinAcceptance = 1e-3;
constexpr std::uint64_t kMinAttemptsBeforeCheck = 10000;

void check_count(Index n) {
  if (n < 0) throw ConfigError("manifold: negative sample count");
}

// One uniform point on the unit sphere in `dim` coordinates.
void draw_on_sphere(Eigen::Ref<RowVector> out, Rng& rng,
                    std::normal_distribution<double>& normal) {
  double norm = 0.0;
  do {
    for (Index j = 0; j < out.size(); ++j) out[j] = normal(rng);
    norm = out.norm();
  } while (norm == 0.0);
  out /= norm;
}

}  // namespace

std::string_view to_string(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::kSphere:
      return "sphere";
    case ManifoldKind::kSphericalCap:
      return "spherical_cap";
    case ManifoldKind::kCircle:
      return "circle";
  }
  return "sphere";
}

ManifoldKind parse_manifold_kind(std::string_view name) {
  if (name == "sphere") return ManifoldKind::kSphere;
  if (name == "spherical_cap" || name == "cap") {
    return ManifoldKind::kSphericalCap;
  }
  if (name == "circle") return ManifoldKind::kCircle;
  throw ConfigError("unknown manifold kind '" + std::string(name) + "'");
}

Index ManifoldSpec::ambient_dim() const {
  if (kind == ManifoldKind::kCircle) return 2 + ambient_pad;
  return intrinsic_dim + 1 + ambient_pad;
}

void ManifoldSpec::validate() const {
  if (ambient_pad < 0) throw ConfigError("manifold: ambient_pad must be >= 0");
  if (kind == ManifoldKind::kCircle) return;
  if (intrinsic_dim < 1) {
    throw ConfigError("manifold: intrinsic_dim must be >= 1");
  }
  if (kind == ManifoldKind::kSphericalCap) {
    if (!(cap_min > -1.0 && cap_min < 1.0)) {
      throw ConfigError("manifold: cap_min must lie in (-1, 1)");
    }
    if (cap_axis < 0 || cap_axis > intrinsic_dim) {
      throw ConfigError("manifold: cap_axis " + std::to_string(cap_axis) +
                        " outside the sphere's coordinates");
    }
  }
}

Matrix gen_sphere(Index n, const ManifoldSpec& spec) {
  spec.validate();
  check_count(n);
  const Index dim = spec.intrinsic_dim + 1;
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out = Matrix::Zero(n, dim + spec.ambient_pad);
  RowVector point(dim);
  for (Index i = 0; i < n; ++i) {
    draw_on_sphere(point, rng, normal);
    out.row(i).head(dim) = point;
  }
  return out;
}

CapDraw gen_cap_with_stats(Index n, const ManifoldSpec& spec) {
  ManifoldSpec cap = spec;
  cap.kind = ManifoldKind::kSphericalCap;
  cap.validate();
  check_count(n);
  const Index dim = cap.intrinsic_dim + 1;
  Rng rng(cap.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  CapDraw draw;
  draw.points = Matrix::Zero(n, dim + cap.ambient_pad);
  RowVector point(dim);
  Index accepted = 0;
  while (accepted < n) {
    draw_on_sphere(point, rng, normal);
    ++draw.attempts;
    if (point[cap.cap_axis] > cap.cap_min) {
      draw.points.row(accepted).head(dim) = point;
      ++accepted;
    }
    if (draw.attempts >= kMinAttemptsBeforeCheck &&
        static_cast<double>(accepted) < kMinAcceptance * draw.attempts) {
      throw ConfigError("gen_cap: acceptance rate below 1e-3; cap_min=" +
                        std::to_string(cap.cap_min) + " leaves too small a cap");
    }
  }
  return draw;
}

Matrix gen_cap(Index n, const ManifoldSpec& spec) {
  return gen_cap_with_stats(n, spec).points;
}

Matrix gen_circle(Index n, const ManifoldSpec& spec) {
  spec.validate();
  check_count(n);
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  Matrix out = Matrix::Zero(n, 2 + spec.ambient_pad);
  for (Index i = 0; i < n; ++i) {
    const double t = angle(rng);
    out(i, 0) = std::cos(t);
    out(i, 1) = std::sin(t);
  }
  return out;
}

Matrix generate(Index n, const ManifoldSpec& spec) {
  switch (spec.kind) {
    case ManifoldKind::kSphere:
      return gen_sphere(n, spec);
    case ManifoldKind::kSphericalCap:
      return gen_cap(n, spec);
    case ManifoldKind::kCircle:
      return gen_circle(n, spec);
  }
  throw ConfigError("generate: unknown manifold kind");
}

}  // namespace msvae
