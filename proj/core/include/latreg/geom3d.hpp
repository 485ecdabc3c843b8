#ifndef LATREG_GEOM3D_HPP
#define LATREG_GEOM3D_HPP

#include <vector>

#include <Eigen/Core>

#include "latreg/cloud.hpp"
#include "latreg/random.hpp"

namespace latreg {

// Proper rotation (orthonormal, det +1). Construction validates; all values
// are immutable and safe to share across threads.
class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}

  // Throws unless m is orthonormal with det +1 (tolerance 1e-9).
  static Rotation from_matrix(const Eigen::Matrix3d& m);

  // Nearest rotation to an arbitrary matrix (polar projection). Used to
  // absorb float drift after long composition chains or f32 round-trips.
  static Rotation project(const Eigen::Matrix3d& m);

  static Rotation identity() { return Rotation(); }

  const Eigen::Matrix3d& matrix() const { return m_; }

  Rotation transpose() const { return Rotation(m_.transpose(), Unchecked{}); }

  Rotation operator*(const Rotation& rhs) const {
    return Rotation(m_ * rhs.m_, Unchecked{});
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

  // Frobenius norm of m^T m - I; used by validity checks and tests.
  double orthonormality_residual() const;
  bool is_valid(double tol = 1e-9) const;

 private:
  struct Unchecked {};
  Rotation(const Eigen::Matrix3d& m, Unchecked) : m_(m) {}

  Eigen::Matrix3d m_;
};

struct RigidMotion {
  Rotation r;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RigidMotion identity() { return RigidMotion{}; }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return r * p + t; }

  RigidMotion inverse() const {
    const Rotation rt = r.transpose();
    return RigidMotion{rt, -(rt * t)};
  }
};

struct AxisAngle {
  Eigen::Vector3d axis;  // unit vector, checked to 1e-12
  double angle = 0.0;    // radians, [0, pi]
};

// Rodrigues formula: R = I + sin(a) K + (1 - cos(a)) K^2 with K the skew
// matrix of the axis. Throws on a non-unit axis.
Rotation rotation_from_axis_angle(const AxisAngle& a);

// Exponential map of an unconstrained 3-vector (angle = |w|, identity at 0).
Rotation rotation_exp(const Eigen::Vector3d& w);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// Geodesic distance on rotations: arccos((tr(r1 r2^T) - 1) / 2), with the
// trace argument clamped to [-1, 1]. Range [0, pi]; exactly pi at trace -1.
double relative_angle(const Rotation& r1, const Rotation& r2);

// Element-wise application; preserves point count, order, and pairwise
// distances.
PointCloud apply_motion(const RigidMotion& rho, const PointCloud& x);
PointCloud apply_rotation(const Rotation& r, const PointCloud& x);

enum class RotationSampling {
  kHaar,          // angle from the (1 - cos a) / pi density; uniform on SO(3)
  kUniformAngle,  // axis uniform, angle ~ U(0, pi); not exactly uniform
};

Rotation sample_uniform_rotation(Rng& rng,
                                 RotationSampling mode = RotationSampling::kHaar);

// Views centered at their own centroids, then all divided by one shared
// scale: the largest per-view radius after centering. Every output point has
// norm <= 1 and the widest view touches the unit sphere. A zero-radius view
// is only centered; if every view is degenerate, throws.
struct NormalizedViews {
  std::vector<PointCloud> views;
  double scale = 1.0;
  std::vector<Eigen::Vector3d> centroids;
};

NormalizedViews joint_normalize(const std::vector<PointCloud>& views);

}  // namespace latreg

#endif  // LATREG_GEOM3D_HPP
