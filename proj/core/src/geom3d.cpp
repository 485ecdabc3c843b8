#include "latreg/geom3d.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "latreg/error.hpp"

namespace latreg {

double Rotation::orthonormality_residual() const {
  return (m_.transpose() * m_ - Eigen::Matrix3d::Identity()).norm();
}

bool Rotation::is_valid(double tol) const {
  return orthonormality_residual() <= tol && std::abs(m_.determinant() - 1.0) <= tol;
}

Rotation Rotation::from_matrix(const Eigen::Matrix3d& m) {
  Rotation r(m, Unchecked{});
  if (!r.is_valid()) {
    throw data_error("Rotation::from_matrix: matrix is not a proper rotation");
  }
  return r;
}

Rotation Rotation::project(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d r = u * v.transpose();
  if (r.determinant() < 0.0) {
    u.col(2) *= -1.0;
    r = u * v.transpose();
  }
  return Rotation(r, Unchecked{});
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d k;
  k << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return k;
}

Rotation rotation_from_axis_angle(const AxisAngle& a) {
  if (std::abs(a.axis.norm() - 1.0) > 1e-12) {
    throw data_error("rotation_from_axis_angle: axis must be a unit vector");
  }
  const Eigen::Matrix3d k = skew(a.axis);
  const Eigen::Matrix3d m = Eigen::Matrix3d::Identity() + std::sin(a.angle) * k +
                            (1.0 - std::cos(a.angle)) * (k * k);
  return Rotation::from_matrix(m);
}

Rotation rotation_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-14) return Rotation::identity();
  return rotation_from_axis_angle(AxisAngle{w / theta, theta});
}

double relative_angle(const Rotation& r1, const Rotation& r2) {
  const double tr = (r1.matrix() * r2.matrix().transpose()).trace();
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

PointCloud apply_rotation(const Rotation& r, const PointCloud& x) {
  return x * r.matrix().transpose();
}

PointCloud apply_motion(const RigidMotion& rho, const PointCloud& x) {
  PointCloud out = x * rho.r.matrix().transpose();
  out.rowwise() += rho.t.transpose();
  return out;
}

namespace {

// Inverse CDF of the rotation-angle density (1 - cos a) / pi on [0, pi],
// i.e. solve (a - sin a) / pi = u. Monotone; bisection with Newton polish.
double haar_angle_from_uniform(double u) {
  const double target = u * std::numbers::pi;
  double lo = 0.0, hi = std::numbers::pi;
  double a = 0.5 * std::numbers::pi;
  for (int it = 0; it < 80; ++it) {
    const double f = a - std::sin(a) - target;
    if (f > 0.0) hi = a; else lo = a;
    const double df = 1.0 - std::cos(a);
    double next = a;
    if (df > 1e-12) next = a - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - a) < 1e-15) { a = next; break; }
    a = next;
  }
  return std::clamp(a, 0.0, std::numbers::pi);
}

}  // namespace

Rotation sample_uniform_rotation(Rng& rng, RotationSampling mode) {
  const Eigen::Vector3d axis = rng.unit_vector();
  double angle;
  if (mode == RotationSampling::kUniformAngle) {
    angle = rng.uniform(0.0, std::numbers::pi);
  } else {
    angle = haar_angle_from_uniform(rng.uniform());
  }
  return rotation_from_axis_angle(AxisAngle{axis, angle});
}

NormalizedViews joint_normalize(const std::vector<PointCloud>& views) {
  if (views.empty()) throw data_error("joint_normalize: no views");
  NormalizedViews out;
  out.views.reserve(views.size());
  out.centroids.reserve(views.size());
  double max_radius = 0.0;
  for (size_t i = 0; i < views.size(); ++i) {
    validate_cloud(views[i], "joint_normalize view " + std::to_string(i));
    const Eigen::Vector3d c = views[i].colwise().mean().transpose();
    PointCloud centered = views[i];
    centered.rowwise() -= c.transpose();
    max_radius = std::max(max_radius, centered.rowwise().norm().maxCoeff());
    out.centroids.push_back(c);
    out.views.push_back(std::move(centered));
  }
  if (max_radius <= 0.0) {
    throw data_error("joint_normalize: all views are degenerate (zero radius)");
  }
  out.scale = max_radius;
  for (auto& v : out.views) v /= max_radius;
  return out;
}

}  // namespace latreg
