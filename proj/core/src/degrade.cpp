#include "latreg/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "latreg/error.hpp"
#include "count_round.hpp"

namespace latreg {

void DegradationModel::validate() const {
  if ((sigma - sigma.transpose()).norm() > 1e-12) {
    throw data_error("DegradationModel: sigma must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(sigma);
  if (es.eigenvalues().minCoeff() < -1e-12) {
    throw data_error("DegradationModel: sigma must be positive semi-definite");
  }
  if (!(visibility > 0.0 && visibility <= 1.0)) {
    throw data_error("DegradationModel: visibility must be in (0, 1]");
  }
  if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0)) {
    throw data_error("DegradationModel: outlier ratio must be in [0, 1)");
  }
}

DegradationModel DegradationModel::from_stddevs(const Eigen::Vector3d& stddev,
                                                double v, double o) {
  DegradationModel m;
  m.sigma = stddev.array().square().matrix().asDiagonal();
  m.visibility = v;
  m.outlier_ratio = o;
  m.validate();
  return m;
}

namespace {

// Cholesky factor of a PSD covariance; a tiny diagonal jitter absorbs
// semi-definite cases, anything else is rejected.
Eigen::Matrix3d noise_factor(const Eigen::Matrix3d& sigma) {
  Eigen::LLT<Eigen::Matrix3d> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  llt.compute(sigma + 1e-12 * Eigen::Matrix3d::Identity());
  if (llt.info() != Eigen::Success) {
    throw data_error("jit_noise: covariance is not positive semi-definite");
  }
  return llt.matrixL();
}

}  // namespace

PointCloud jit_noise(const PointCloud& x, const Eigen::Matrix3d& sigma, Rng& rng) {
  validate_cloud(x, "jit_noise");
  if ((sigma - sigma.transpose()).norm() > 1e-12) {
    throw data_error("jit_noise: covariance must be symmetric");
  }
  if (sigma.isZero(0.0)) return x;
  const Eigen::Matrix3d l = noise_factor(sigma);
  PointCloud out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) += (l * rng.normal3()).transpose();
  }
  return out;
}

PointCloud plane_cut_along(const PointCloud& x, double v, const Eigen::Vector3d& normal,
                           PlaneCutMode mode) {
  validate_cloud(x, "plane_cut");
  if (!(v > 0.0 && v <= 1.0)) throw data_error("plane_cut: v must be in (0, 1]");
  const Eigen::Index k = x.rows();
  const Eigen::Index keep =
      static_cast<Eigen::Index>(internal::snap_ceil(v * static_cast<double>(k)));
  if (keep >= k) return x;

  Eigen::VectorXd score = x * normal;
  if (mode == PlaneCutMode::kSlab) {
    score = (score.array() - score.mean()).abs();
  }
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + keep, order.end(), [&](int a, int b) {
    return score[a] < score[b] || (score[a] == score[b] && a < b);
  });
  std::vector<int> kept(order.begin(), order.begin() + keep);
  std::sort(kept.begin(), kept.end());

  PointCloud out(keep, 3);
  for (Eigen::Index i = 0; i < keep; ++i) out.row(i) = x.row(kept[i]);
  return out;
}

PointCloud plane_cut(const PointCloud& x, double v, Rng& rng, PlaneCutMode mode) {
  if (!(v > 0.0 && v <= 1.0)) throw data_error("plane_cut: v must be in (0, 1]");
  const Eigen::Vector3d normal = rng.unit_vector();
  return plane_cut_along(x, v, normal, mode);
}

PointCloud curve_outliers(const PointCloud& x, double o, Rng& rng,
                          const CurveOutlierParams& params) {
  validate_cloud(x, "curve_outliers");
  if (!(o >= 0.0 && o < 1.0)) throw data_error("curve_outliers: o must be in [0, 1)");
  const Eigen::Index k = x.rows();
  const Eigen::Index n_out = static_cast<Eigen::Index>(
      internal::snap_ceil(o * static_cast<double>(k) / (1.0 - o)));
  if (n_out == 0) return x;

  PointCloud out(k + n_out, 3);
  out.topRows(k) = x;
  Eigen::Index written = 0;
  while (written < n_out) {
    const Eigen::Index remaining = n_out - written;
    Eigen::Index length = static_cast<Eigen::Index>(
        params.min_curve_points +
        rng.index(static_cast<std::uint64_t>(params.max_curve_points -
                                             params.min_curve_points + 1)));
    length = std::min(length, remaining);
    Eigen::Vector3d pos = x.row(static_cast<Eigen::Index>(rng.index(k))).transpose();
    Eigen::Vector3d dir = rng.unit_vector();
    for (Eigen::Index s = 0; s < length; ++s) {
      out.row(k + written) = pos.transpose();  // first point sits on the surface
      ++written;
      pos += params.step * dir;
      const Eigen::Vector3d jitter = params.direction_jitter * rng.normal3();
      dir = (dir + jitter).normalized();
    }
  }
  return out;
}

ViewSet generate_views(const PointCloud& reference, int n, const DegradationModel& model,
                       Rng& rng, const GenerateOptions& options) {
  validate_cloud(reference, "generate_views");
  if (n < 2) throw data_error("generate_views: need at least 2 views");
  model.validate();

  ViewSet set;
  set.reference = reference;
  set.truth = std::vector<RigidMotion>();
  set.views.reserve(n);
  const std::uint64_t base = rng.bits();  // advance the caller's stream
  for (int i = 0; i < n; ++i) {
    Rng view_rng(derive_seed(base, static_cast<std::uint64_t>(i)));
    RigidMotion pose;
    pose.r = sample_uniform_rotation(view_rng, options.rotation_mode);
    const double h = options.translation_halfwidth;
    pose.t << view_rng.uniform(-h, h), view_rng.uniform(-h, h), view_rng.uniform(-h, h);

    PointCloud view = apply_motion(pose, reference);
    if (model.has_noise()) view = jit_noise(view, model.sigma, view_rng);
    if (model.visibility < 1.0) view = plane_cut(view, model.visibility, view_rng);
    if (model.outlier_ratio > 0.0) {
      view = curve_outliers(view, model.outlier_ratio, view_rng, options.outliers);
    }
    set.views.push_back(std::move(view));
    set.truth->push_back(pose);
  }
  return set;
}

PointCloud center_and_normalize(const PointCloud& x) {
  validate_cloud(x, "center_and_normalize");
  PointCloud out = x;
  out.rowwise() -= x.colwise().mean();
  const double radius = out.rowwise().norm().maxCoeff();
  if (radius <= 0.0) throw data_error("center_and_normalize: degenerate cloud");
  return out / radius;
}

namespace {

std::string view_filename(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%04d.pcd3", i);
  return buf;
}

nlohmann::json pose_to_json(const RigidMotion& pose) {
  nlohmann::json j;
  std::vector<double> rot(9);
  const Eigen::Matrix3d& m = pose.r.matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = m(r, c);
  j["rotation"] = rot;
  j["translation"] = {pose.t.x(), pose.t.y(), pose.t.z()};
  return j;
}

RigidMotion pose_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.contains("rotation") || !j.contains("translation")) {
    throw data_error(where + ": pose needs 'rotation' and 'translation'");
  }
  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (rot.size() != 9 || t.size() != 3) {
    throw data_error(where + ": rotation must have 9 entries and translation 3");
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = rot[3 * r + c];
  RigidMotion pose;
  pose.r = Rotation::from_matrix(m);
  pose.t << t[0], t[1], t[2];
  return pose;
}

}  // namespace

void save_viewset(const ViewSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < set.size(); ++i) {
    save_cloud_pcd3(set.views[i], dir / view_filename(i));
  }
  if (set.truth) {
    nlohmann::ordered_json j;
    j["poses"] = nlohmann::json::array();
    for (const auto& pose : *set.truth) j["poses"].push_back(nlohmann::ordered_json(pose_to_json(pose)));
    std::ofstream out(dir / "truth.json");
    out << j.dump(2) << '\n';
    if (!out) throw data_error((dir / "truth.json").string() + ": write failed");
  }
  if (set.reference) save_cloud_pcd3(*set.reference, dir / "reference.pcd3");
}

ViewSet load_viewset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw data_error(dir.string() + ": not a view-set directory");
  }
  ViewSet set;
  for (int i = 0;; ++i) {
    const auto path = dir / view_filename(i);
    if (!std::filesystem::exists(path)) break;
    set.views.push_back(load_cloud_pcd3(path));
  }
  if (set.views.empty()) throw data_error(dir.string() + ": no view_*.pcd3 files");
  const auto truth_path = dir / "truth.json";
  if (std::filesystem::exists(truth_path)) {
    std::ifstream in(truth_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw data_error(truth_path.string() + ": " + e.what());
    }
    std::vector<RigidMotion> poses;
    for (const auto& p : j.at("poses")) {
      poses.push_back(pose_from_json(p, truth_path.string()));
    }
    if (poses.size() != set.views.size()) {
      throw data_error(truth_path.string() + ": pose count does not match view count");
    }
    set.truth = std::move(poses);
  }
  const auto ref_path = dir / "reference.pcd3";
  if (std::filesystem::exists(ref_path)) set.reference = load_cloud_pcd3(ref_path);
  return set;
}

}  // namespace latreg
