#ifndef LATREG_SRC_REG_INTERNAL_HPP
#define LATREG_SRC_REG_INTERNAL_HPP

#include <atomic>
#include <memory>
#include <vector>

#include "latreg/cloud.hpp"
#include "latreg/degrade.hpp"
#include "latreg/descriptor.hpp"
#include "latreg/geom3d.hpp"
#include "latreg/random.hpp"

namespace latreg::internal {

// Immutable per-view state shared by every loss evaluation in a run.
struct ViewCache {
  PointCloud points;
  std::unique_ptr<NnIndex> index;
  Eigen::MatrixXd features;  // per-point encoder features, k x latent
  Eigen::VectorXd latent;    // pooled over all points

  static ViewCache build(const PointCloud& view, const DescriptorModel& model);
};

struct MaskCounters {
  std::atomic<long> evals{0};
  std::atomic<long> noops{0};
};

// Gaussian noise matrix with covariance factor chol, one row per point,
// addressed by the counter key (k1, k2, k3).
Eigen::MatrixXd counter_noise(const CounterRng& rng, std::uint64_t k1, std::uint64_t k2,
                              std::uint64_t k3, Eigen::Index rows,
                              const Eigen::Matrix3d& chol);

// Cholesky factor for a degradation model's noise (zero matrix when there
// is no noise).
Eigen::Matrix3d noise_chol(const DegradationModel& degr);

// Everything a descent step needs that stays constant within the step:
// the noise realization, the template-side mask, and the masked data latent.
struct StepPrep {
  PointCloud noise;             // 0x0 when no noise
  std::vector<int> keep_template;  // empty = keep all
  Eigen::VectorXd data_latent;
};

StepPrep prepare_step(const PointCloud& posed_template, const PointCloud& noise,
                      const ViewCache& view, const DegradationModel& degr,
                      MaskCounters* counters);

// Full plain-forward per-view loss for a noised, posed template.
double masked_latent_loss(const PointCloud& noised_template, const ViewCache& view,
                          const DescriptorModel& model, const DegradationModel& degr,
                          MaskCounters* counters);

}  // namespace latreg::internal

#endif  // LATREG_SRC_REG_INTERNAL_HPP
