#ifndef LATREG_DEGRADE_HPP
#define LATREG_DEGRADE_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "latreg/cloud.hpp"
#include "latreg/geom3d.hpp"
#include "latreg/random.hpp"

namespace latreg {

// Known degradation parameters of a view set: Gaussian noise covariance,
// the fraction of the object that stays visible, and the fraction of
// outlier points.
struct DegradationModel {
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();  // covariance, units^2
  double visibility = 1.0;                          // v in (0, 1]
  double outlier_ratio = 0.0;                       // o in [0, 1)

  bool has_noise() const { return !sigma.isZero(0.0); }
  void validate() const;

  static DegradationModel none() { return DegradationModel{}; }
  // Diagonal covariance from per-axis standard deviations.
  static DegradationModel from_stddevs(const Eigen::Vector3d& stddev, double v, double o);
};

struct ViewSet {
  std::vector<PointCloud> views;
  std::optional<std::vector<RigidMotion>> truth;   // ground-truth poses
  std::optional<PointCloud> reference;             // clean reference cloud

  int size() const { return static_cast<int>(views.size()); }
};

// Independently displaces each point by a draw from N(0, sigma) in the
// cloud's current frame. Non-PSD sigma is rejected.
PointCloud jit_noise(const PointCloud& x, const Eigen::Matrix3d& sigma, Rng& rng);

enum class PlaneCutMode {
  kHalfSpace,  // keep the ceil(v*k) points lowest along the normal
  kSlab,       // keep the ceil(v*k) points closest to the plane through the centroid
};

// Samples a unit normal and keeps exactly ceil(v*k) points; survivor order
// is preserved.
PointCloud plane_cut(const PointCloud& x, double v, Rng& rng,
                     PlaneCutMode mode = PlaneCutMode::kHalfSpace);
// Deterministic core with an explicit normal, used by tests and by the
// sampling wrapper above.
PointCloud plane_cut_along(const PointCloud& x, double v, const Eigen::Vector3d& normal,
                           PlaneCutMode mode = PlaneCutMode::kHalfSpace);

struct CurveOutlierParams {
  double step = 0.02;              // step length, normalized units
  double direction_jitter = 0.3;   // per-step direction perturbation (radians-ish)
  int min_curve_points = 16;
  int max_curve_points = 64;
};

// Appends ceil(o*k/(1-o)) points sampled along random smooth polylines,
// each starting exactly at a uniformly chosen input point. Input points are
// unchanged and come first in the output.
PointCloud curve_outliers(const PointCloud& x, double o, Rng& rng,
                          const CurveOutlierParams& params = {});

struct GenerateOptions {
  double translation_halfwidth = 0.25;  // rho* translation ~ U(-h, h)^3
  RotationSampling rotation_mode = RotationSampling::kHaar;
  CurveOutlierParams outliers;
};

// For each view: draw a pose, then noise -> plane cut -> outliers. Records
// the true poses and the reference. Deterministic function of (inputs, rng
// seed); each view uses its own substream.
ViewSet generate_views(const PointCloud& reference, int n, const DegradationModel& model,
                       Rng& rng, const GenerateOptions& options = {});

// --- built-in reference shapes ---------------------------------------------

// Shape names: "asym-lamp", "bent-arrow", "three-prong", "helix-block".
// All four have a trivial rotational symmetry group. k >= 64 surface points,
// deterministic given the rng seed.
PointCloud make_shape(const std::string& name, int k, Rng& rng);

const std::vector<std::string>& builtin_shape_names();

// Center at the centroid and scale so the farthest point sits exactly on
// the unit sphere.
PointCloud center_and_normalize(const PointCloud& x);

// --- view-set directory format ---------------------------------------------
// <dir>/view_0000.pcd3 ..., truth.json (rotations row-major + translations),
// meta.json (sigma, v, o, seed, shape).

void save_viewset(const ViewSet& set, const std::filesystem::path& dir);
ViewSet load_viewset(const std::filesystem::path& dir);

}  // namespace latreg

#endif  // LATREG_DEGRADE_HPP
