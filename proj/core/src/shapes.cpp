#include <cmath>

#include <Eigen/Geometry>
#include <functional>
#include <numbers>
#include <vector>

#include "latreg/degrade.hpp"
#include "latreg/error.hpp"

namespace latreg {

namespace {

using Eigen::Vector3d;

constexpr double kPi = std::numbers::pi;

// One sampleable surface patch; patches are drawn with probability
// proportional to area, so composite shapes come out roughly uniform.
struct Patch {
  double area;
  std::function<Vector3d(Rng&)> sample;
};

void orthonormal_frame(const Vector3d& axis, Vector3d& u, Vector3d& v) {
  const Vector3d ref = std::abs(axis.z()) < 0.9 ? Vector3d(0, 0, 1) : Vector3d(1, 0, 0);
  u = axis.cross(ref).normalized();
  v = axis.cross(u);
}

Patch cylinder_side(const Vector3d& base, const Vector3d& axis_dir, double radius,
                    double height) {
  const Vector3d axis = axis_dir.normalized();
  Vector3d u, v;
  orthonormal_frame(axis, u, v);
  return Patch{
      2.0 * kPi * radius * height,
      [=](Rng& rng) {
        const double t = rng.uniform(0.0, height);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        return Vector3d(base + t * axis + radius * (std::cos(phi) * u + std::sin(phi) * v));
      }};
}

Patch disc(const Vector3d& center, const Vector3d& normal, double radius) {
  const Vector3d n = normal.normalized();
  Vector3d u, v;
  orthonormal_frame(n, u, v);
  return Patch{
      kPi * radius * radius,
      [=](Rng& rng) {
        const double rho = radius * std::sqrt(rng.uniform());
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        return Vector3d(center + rho * (std::cos(phi) * u + std::sin(phi) * v));
      }};
}

Patch sphere(const Vector3d& center, double radius) {
  return Patch{4.0 * kPi * radius * radius,
               [=](Rng& rng) { return Vector3d(center + radius * rng.unit_vector()); }};
}

// Frustum side from radius r0 at the base to r1 at height h.
Patch cone_side(const Vector3d& base, const Vector3d& axis_dir, double r0, double r1,
                double height) {
  const Vector3d axis = axis_dir.normalized();
  Vector3d u, v;
  orthonormal_frame(axis, u, v);
  const double slant = std::hypot(height, r0 - r1);
  return Patch{
      kPi * (r0 + r1) * slant,
      [=](Rng& rng) {
        // density along t proportional to the local radius
        double t;
        if (std::abs(r0 - r1) < 1e-12) {
          t = rng.uniform();
        } else {
          const double w = rng.uniform();
          const double a = r1 - r0;
          t = (std::sqrt(r0 * r0 + w * (r1 * r1 - r0 * r0)) - r0) / a;
        }
        const double r = r0 + (r1 - r0) * t;
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        return Vector3d(base + t * height * axis +
                        r * (std::cos(phi) * u + std::sin(phi) * v));
      }};
}

// Axis-aligned box surface (all six faces).
std::vector<Patch> box(const Vector3d& center, const Vector3d& half) {
  std::vector<Patch> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    const double area = 4.0 * half[a1] * half[a2];
    for (double side : {-1.0, 1.0}) {
      faces.push_back(Patch{area, [=](Rng& rng) {
                              Vector3d p = center;
                              p[axis] += side * half[axis];
                              p[a1] += rng.uniform(-half[a1], half[a1]);
                              p[a2] += rng.uniform(-half[a2], half[a2]);
                              return p;
                            }});
    }
  }
  return faces;
}

// Tube around a helical center curve.
Patch helix_tube(double major_radius, double tube_radius, double z0, double z1,
                 double turns) {
  const double t_max = turns * 2.0 * kPi;
  const double length_est = std::hypot(major_radius * t_max, z1 - z0);
  return Patch{
      2.0 * kPi * tube_radius * length_est,
      [=](Rng& rng) {
        const double t = rng.uniform(0.0, t_max);
        const Vector3d c(major_radius * std::cos(t), major_radius * std::sin(t),
                         z0 + (z1 - z0) * t / t_max);
        Vector3d tangent(-major_radius * std::sin(t), major_radius * std::cos(t),
                         (z1 - z0) / t_max);
        tangent.normalize();
        Vector3d u, v;
        orthonormal_frame(tangent, u, v);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        return Vector3d(c + tube_radius * (std::cos(phi) * u + std::sin(phi) * v));
      }};
}

PointCloud sample_patches(const std::vector<Patch>& patches, int k, Rng& rng) {
  double total = 0.0;
  for (const auto& p : patches) total += p.area;
  PointCloud cloud(k, 3);
  for (int i = 0; i < k; ++i) {
    double pick = rng.uniform(0.0, total);
    size_t idx = 0;
    for (; idx + 1 < patches.size(); ++idx) {
      if (pick < patches[idx].area) break;
      pick -= patches[idx].area;
    }
    cloud.row(i) = patches[idx].sample(rng).transpose();
  }
  return cloud;
}

std::vector<Patch> asym_lamp() {
  std::vector<Patch> p;
  p.push_back(disc({0.0, 0.0, -0.55}, {0.0, 0.0, 1.0}, 0.38));
  p.push_back(cylinder_side({0.0, 0.0, -0.61}, {0.0, 0.0, 1.0}, 0.38, 0.06));
  p.push_back(cylinder_side({0.0, 0.0, -0.55}, {0.0, 0.0, 1.0}, 0.06, 0.95));
  // shade leans toward +x
  p.push_back(cone_side({0.12, 0.02, 0.40}, {0.45, 0.10, 0.85}, 0.34, 0.14, 0.36));
  p.push_back(sphere({0.30, 0.06, 0.80}, 0.05));
  return p;
}

std::vector<Patch> bent_arrow() {
  std::vector<Patch> p;
  p.push_back(cylinder_side({-0.75, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.09, 1.10));
  p.push_back(cone_side({0.35, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.24, 0.01, 0.38));
  p.push_back(disc({0.35, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.24));
  // tail bends up and back
  p.push_back(cylinder_side({-0.75, 0.0, 0.0}, {-0.35, 0.0, 0.90}, 0.09, 0.50));
  auto fin = box({-0.93, 0.10, 0.46}, {0.14, 0.02, 0.11});
  p.insert(p.end(), fin.begin(), fin.end());
  return p;
}

std::vector<Patch> three_prong() {
  std::vector<Patch> p;
  p.push_back(sphere({0.0, 0.0, 0.0}, 0.18));
  p.push_back(cylinder_side({0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.085, 0.85));
  p.push_back(disc({0.85, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.085));
  p.push_back(cylinder_side({0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, 0.11, 0.60));
  p.push_back(disc({0.0, 0.60, 0.0}, {0.0, 1.0, 0.0}, 0.11));
  p.push_back(cylinder_side({0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, 0.065, 0.42));
  p.push_back(disc({0.0, 0.0, 0.42}, {0.0, 0.0, 1.0}, 0.065));
  return p;
}

std::vector<Patch> helix_block() {
  std::vector<Patch> p = box({0.12, -0.06, 0.05}, {0.25, 0.20, 0.15});
  p.push_back(helix_tube(0.55, 0.05, -0.45, 0.45, 2.5));
  return p;
}

}  // namespace

const std::vector<std::string>& builtin_shape_names() {
  static const std::vector<std::string> names = {"asym-lamp", "bent-arrow",
                                                 "three-prong", "helix-block"};
  return names;
}

PointCloud make_shape(const std::string& name, int k, Rng& rng) {
  if (k < 64) throw data_error("make_shape: need k >= 64 points");
  std::vector<Patch> patches;
  if (name == "asym-lamp") patches = asym_lamp();
  else if (name == "bent-arrow") patches = bent_arrow();
  else if (name == "three-prong") patches = three_prong();
  else if (name == "helix-block") patches = helix_block();
  else {
    std::string known;
    for (const auto& n : builtin_shape_names()) known += " " + n;
    throw data_error("make_shape: unknown shape '" + name + "'; known:" + known);
  }
  return sample_patches(patches, k, rng);
}

}  // namespace latreg
