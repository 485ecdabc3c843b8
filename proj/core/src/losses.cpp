#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>

#include "latreg/error.hpp"
#include "latreg/registration.hpp"
#include "count_round.hpp"
#include "reg_internal.hpp"

namespace latreg {

// --- masks ---------------------------------------------------------------

std::vector<int> occlusion_keep_indices(const DistanceVector& template_to_data, double v) {
  if (!(v > 0.0 && v <= 1.0)) throw data_error("mask_occlusion: v must be in (0, 1]");
  const int k = static_cast<int>(template_to_data.size());
  const int remove =
      static_cast<int>(internal::snap_floor((1.0 - v) * static_cast<double>(k)));
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  if (remove > 0) {
    // keep the k-remove smallest distances; on ties the lower index survives
    std::nth_element(order.begin(), order.begin() + (k - remove), order.end(),
                     [&](int a, int b) {
                       return template_to_data[a] < template_to_data[b] ||
                              (template_to_data[a] == template_to_data[b] && a < b);
                     });
    order.resize(k - remove);
  }
  std::sort(order.begin(), order.end());
  return order;
}

PointCloud mask_occlusion(const PointCloud& template_view, const PointCloud& data_view,
                          double v) {
  validate_cloud(template_view, "mask_occlusion template");
  validate_cloud(data_view, "mask_occlusion data");
  const auto keep = occlusion_keep_indices(nn_distance_vector(template_view, data_view), v);
  if (keep.empty()) throw data_error("mask_occlusion: mask removed every point");
  PointCloud out(keep.size(), 3);
  for (size_t i = 0; i < keep.size(); ++i) out.row(i) = template_view.row(keep[i]);
  return out;
}

std::vector<int> outlier_keep_indices(const DistanceVector& data_to_template, double o) {
  if (!(o >= 0.0 && o < 1.0)) throw data_error("mask_outliers: o must be in [0, 1)");
  const int n = static_cast<int>(data_to_template.size());
  // nearest-rank percentile: value at ceil((1-o) * n), 1-based
  int rank = static_cast<int>(internal::snap_ceil((1.0 - o) * static_cast<double>(n)));
  rank = std::clamp(rank, 1, n);
  DistanceVector sorted = data_to_template;
  std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
  const double cutoff = sorted[rank - 1];
  std::vector<int> keep;
  keep.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (!(data_to_template[i] > cutoff)) keep.push_back(i);
  }
  return keep;
}

PointCloud mask_outliers(const PointCloud& data_view, const PointCloud& template_view,
                         double o) {
  validate_cloud(data_view, "mask_outliers data");
  validate_cloud(template_view, "mask_outliers template");
  const auto keep = outlier_keep_indices(nn_distance_vector(data_view, template_view), o);
  if (keep.empty()) throw data_error("mask_outliers: mask removed every point");
  PointCloud out(keep.size(), 3);
  for (size_t i = 0; i < keep.size(); ++i) out.row(i) = data_view.row(keep[i]);
  return out;
}

// --- internal helpers ------------------------------------------------------

namespace internal {

ViewCache ViewCache::build(const PointCloud& view, const DescriptorModel& model) {
  ViewCache cache;
  cache.points = view;
  cache.index = std::make_unique<NnIndex>(view);
  cache.features = encode_features(model, view);
  cache.latent = pool_all(cache.features);
  return cache;
}

Eigen::Matrix3d noise_chol(const DegradationModel& degr) {
  if (!degr.has_noise()) return Eigen::Matrix3d::Zero();
  Eigen::LLT<Eigen::Matrix3d> llt(degr.sigma);
  if (llt.info() != Eigen::Success) {
    llt.compute(degr.sigma + 1e-12 * Eigen::Matrix3d::Identity());
    if (llt.info() != Eigen::Success) {
      throw data_error("loss: degradation covariance is not positive semi-definite");
    }
  }
  return llt.matrixL();
}

Eigen::MatrixXd counter_noise(const CounterRng& rng, std::uint64_t k1, std::uint64_t k2,
                              std::uint64_t k3, Eigen::Index rows,
                              const Eigen::Matrix3d& chol) {
  Eigen::MatrixXd noise(rows, 3);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Vector3d n(rng.normal(k1, k2, k3, 3 * i),
                            rng.normal(k1, k2, k3, 3 * i + 1),
                            rng.normal(k1, k2, k3, 3 * i + 2));
    noise.row(i) = (chol * n).transpose();
  }
  return noise;
}

StepPrep prepare_step(const PointCloud& posed_template, const PointCloud& noise,
                      const ViewCache& view, const DegradationModel& degr,
                      MaskCounters* counters) {
  StepPrep prep;
  PointCloud noised = posed_template;
  if (noise.rows() == posed_template.rows()) {
    noised += noise;
    prep.noise = noise;
  }

  if (counters) counters->evals += 2;
  if (degr.visibility < 1.0) {
    prep.keep_template =
        occlusion_keep_indices(nn_distance_vector(noised, *view.index), degr.visibility);
    if (prep.keep_template.empty()) {
      throw runtime_error("loss: occlusion mask removed the whole template");
    }
  } else if (counters) {
    counters->noops += 1;
  }

  if (degr.outlier_ratio > 0.0) {
    const NnIndex template_index(noised);
    const auto keep_d =
        outlier_keep_indices(nn_distance_vector(view.points, template_index), degr.outlier_ratio);
    if (keep_d.empty()) throw runtime_error("loss: outlier mask removed the whole view");
    prep.data_latent = pool_rows(view.features, keep_d);
  } else {
    prep.data_latent = view.latent;
    if (counters) counters->noops += 1;
  }
  return prep;
}

double masked_latent_loss(const PointCloud& noised_template, const ViewCache& view,
                          const DescriptorModel& model, const DegradationModel& degr,
                          MaskCounters* counters) {
  PointCloud empty_noise(0, 3);
  const StepPrep prep =
      prepare_step(noised_template, empty_noise, view, degr, counters);
  Eigen::VectorXd latent_t;
  if (prep.keep_template.empty()) {
    latent_t = encode(model, noised_template);
  } else {
    PointCloud kept(prep.keep_template.size(), 3);
    for (size_t i = 0; i < prep.keep_template.size(); ++i) {
      kept.row(i) = noised_template.row(prep.keep_template[i]);
    }
    latent_t = encode(model, kept);
  }
  return (latent_t - prep.data_latent).squaredNorm();
}

}  // namespace internal

// --- spec-level loss operations ---------------------------------------------

double loss_view(const Eigen::VectorXd& z, const RigidMotion& rho, const PointCloud& x,
                 const DescriptorModel& model, const DegradationModel& degr, Rng& rng) {
  validate_cloud(x, "loss_view");
  degr.validate();
  const PointCloud posed = apply_motion(rho, decode(model, z));
  PointCloud noised = posed;
  if (degr.has_noise()) noised = jit_noise(posed, degr.sigma, rng);
  // composed from the public masking and encoding operations, so with no
  // degradation this is exactly the plain latent-distance path
  const PointCloud kept_template =
      degr.visibility < 1.0 ? mask_occlusion(noised, x, degr.visibility) : noised;
  const PointCloud kept_data =
      degr.outlier_ratio > 0.0 ? mask_outliers(x, noised, degr.outlier_ratio) : x;
  if (kept_template.rows() == 0) {
    throw runtime_error("loss_view: occlusion mask removed the whole template");
  }
  if (kept_data.rows() == 0) {
    throw runtime_error("loss_view: outlier mask removed the whole view");
  }
  return (encode(model, kept_template) - encode(model, kept_data)).squaredNorm();
}

TotalLoss loss_total(const Eigen::VectorXd& z, const std::vector<RigidMotion>& poses,
                     const std::vector<PointCloud>& views, const DescriptorModel& model,
                     const DegradationModel& degr, const RegConfig& cfg, Rng& rng) {
  if (poses.size() != views.size()) {
    throw data_error("loss_total: pose count does not match view count");
  }
  TotalLoss out;
  for (size_t i = 0; i < views.size(); ++i) {
    out.per_view.push_back(loss_view(z, poses[i], views[i], model, degr, rng));
    out.total += out.per_view.back();
  }
  if (cfg.lambda != 0.0) {
    out.regularizer = density_stddev(decode(model, z), cfg.density_radius);
    out.total += cfg.lambda * out.regularizer;
  }
  return out;
}

int init_medoid(const Eigen::MatrixXd& latents) {
  const Eigen::Index n = latents.rows();
  if (n < 1) throw data_error("init_medoid: empty latent set");
  int best = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      sum += (latents.row(i) - latents.row(j)).norm();
    }
    if (sum < best_sum) {  // strict: ties keep the lowest index
      best_sum = sum;
      best = static_cast<int>(i);
    }
  }
  return best;
}

void update_poses(RegistrationState& state, const std::vector<RigidMotion>& proposed,
                  const std::vector<double>& proposed_losses) {
  if (proposed.size() != state.poses.size() || proposed_losses.size() != state.poses.size()) {
    throw runtime_error("update_poses: size mismatch");
  }
  for (size_t i = 0; i < state.poses.size(); ++i) {
    if (proposed_losses[i] <= state.losses[i]) {  // ties adopt the proposal
      state.poses[i] = proposed[i];
      state.losses[i] = proposed_losses[i];
    }
  }
}

int detect_escapes(const RegistrationState& state, const std::vector<RigidMotion>& proposed,
                   const std::vector<double>& proposed_losses, double threshold_deg) {
  if (proposed.size() != state.poses.size() || proposed_losses.size() != state.poses.size()) {
    throw runtime_error("detect_escapes: size mismatch");
  }
  const double threshold = threshold_deg * std::numbers::pi / 180.0;
  int count = 0;
  for (size_t i = 0; i < state.poses.size(); ++i) {
    if (proposed_losses[i] <= state.losses[i] &&
        relative_angle(proposed[i].r, state.poses[i].r) >= threshold) {
      ++count;
    }
  }
  return count;
}

}  // namespace latreg
