#ifndef LATREG_REGISTRATION_HPP
#define LATREG_REGISTRATION_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "latreg/cloud.hpp"
#include "latreg/degrade.hpp"
#include "latreg/descriptor.hpp"
#include "latreg/geom3d.hpp"
#include "latreg/random.hpp"

namespace latreg {

// L near-uniform rotations with exact geodesic k-nn adjacency. Built once,
// cacheable on disk.
struct RotationGrid {
  std::vector<Rotation> rotations;
  int k = 0;
  std::vector<std::uint32_t> adjacency;  // size L*k, row-major

  int size() const { return static_cast<int>(rotations.size()); }
  const std::uint32_t* neighbors(int i) const { return adjacency.data() + static_cast<size_t>(i) * k; }

  // Structural checks: rotation validity, adjacency well-formedness.
  void validate() const;
};

// Deterministic construction: super-Fibonacci quaternion spiral for the
// rotations, exact brute-force k-nn under relative_angle for the adjacency
// (ties broken by lower index). Requires L > k >= 1.
RotationGrid build_rotation_grid(int l_count, int k, int threads = 1);

// Cache file: magic "SO3G", u32 L, u32 k, L*9 f32 rotations row-major,
// L*k u32 adjacency. Rotations are re-projected onto SO(3) after the f32
// round-trip; the stored adjacency is kept as built.
void save_grid(const RotationGrid& grid, const std::filesystem::path& path);
RotationGrid load_grid(const std::filesystem::path& path);

// --- degradation-aware masks -------------------------------------------------

// Indices of template points kept by the occlusion mask: removes exactly
// floor((1-v) * k) points with the largest nearest-neighbor distance into
// the data view (ties: lower index survives). Returned indices are sorted.
std::vector<int> occlusion_keep_indices(const DistanceVector& template_to_data, double v);
PointCloud mask_occlusion(const PointCloud& template_view, const PointCloud& data_view,
                          double v);

// Indices of data points kept by the outlier mask: removes every point whose
// nearest-neighbor distance into the template strictly exceeds the (1-o)
// nearest-rank percentile of those distances. Order preserved.
std::vector<int> outlier_keep_indices(const DistanceVector& data_to_template, double o);
PointCloud mask_outliers(const PointCloud& data_view, const PointCloud& template_view,
                         double o);

// --- configuration ------------------------------------------------------------

struct RegConfig {
  int multistart_width = 4;        // starts per view in the multistart phase
  double escape_angle_deg = 15.0;  // rotation change that counts as an escape
  double lambda = 1e-2;            // weight of the density regularizer
  double density_radius = 0.1;
  double lr = 1e-2;
  double lr_factor = 10.0;
  int patience_lr = 10;
  int patience_stop = 100;
  int max_steps = 2000;            // safety cap per gradient descent
  int max_rounds = 20;             // safety cap on outer rounds
  double weight_decay = 1e-2;      // applied to the latent only
  DegradationModel degradation;
  std::uint64_t seed = 0;
  int threads = 1;
  // Evaluate the grid search at per-view current translations and with
  // per-view noise draws instead of the shared fast path (slower; results
  // differ only in ranking noise).
  bool grid_search_per_view = false;
  // Skip the internal joint normalization. For callers that construct views
  // in a frame where the template correspondence must be exact.
  bool assume_normalized = false;

  void validate() const;
};

struct RegistrationState {
  Eigen::VectorXd z;
  std::vector<RigidMotion> poses;  // template -> view, normalized frame
  std::vector<double> losses;      // per-view loss at (z, poses)
};

struct RegistrationReport {
  int rounds = 0;
  bool converged = false;
  bool hit_round_cap = false;
  std::vector<int> escapes_per_round;
  std::vector<double> final_losses;
  double final_total_loss = 0.0;
  double wall_time_sec = 0.0;
  // mask bookkeeping: evaluations that were structural no-ops (v=1 / o=0)
  long mask_evals = 0;
  long mask_noops = 0;
  double normalization_scale = 1.0;
  std::vector<Eigen::Vector3d> centroids;
};

struct RegistrationResult {
  Eigen::VectorXd z;
  std::vector<RigidMotion> poses;
  RegistrationReport report;
};

// --- spec-level operations -----------------------------------------------------

// Degradation-aware per-view loss: squared latent distance between the
// masked, noised, posed template and the masked data view. Fresh noise is
// drawn from rng on every call.
double loss_view(const Eigen::VectorXd& z, const RigidMotion& rho, const PointCloud& x,
                 const DescriptorModel& model, const DegradationModel& degr, Rng& rng);

struct TotalLoss {
  double total = 0.0;              // sum of per-view losses + lambda * regularizer
  std::vector<double> per_view;
  double regularizer = 0.0;        // density stddev of the decoded template
};

TotalLoss loss_total(const Eigen::VectorXd& z, const std::vector<RigidMotion>& poses,
                     const std::vector<PointCloud>& views, const DescriptorModel& model,
                     const DegradationModel& degr, const RegConfig& cfg, Rng& rng);

// Latent medoid: index minimizing the summed (unsquared) distances to all
// rows; ties go to the lowest index.
int init_medoid(const Eigen::MatrixXd& latents);

// Pose update rule: adopt the proposed pose when its loss is <= the current
// one (ties adopt).
void update_poses(RegistrationState& state, const std::vector<RigidMotion>& proposed,
                  const std::vector<double>& proposed_losses);

// Number of views whose proposal both improves (<=) the loss and moves the
// rotation by at least the threshold. Evaluated before update_poses.
int detect_escapes(const RegistrationState& state, const std::vector<RigidMotion>& proposed,
                   const std::vector<double>& proposed_losses, double threshold_deg);

struct GridMinimum {
  int rotation_index = -1;
  double loss = 0.0;
};

// --- pipeline -------------------------------------------------------------------

// Owns the normalized views, per-view caches, and the optimization state.
// Exposes the phases of the outer loop individually so they can be driven
// and tested in isolation; run() executes the full algorithm.
class RegistrationPipeline {
 public:
  RegistrationPipeline(const std::vector<PointCloud>& views, const DescriptorModel& model,
                       const RotationGrid* grid, const RegConfig& cfg);
  ~RegistrationPipeline();
  RegistrationPipeline(const RegistrationPipeline&) = delete;
  RegistrationPipeline& operator=(const RegistrationPipeline&) = delete;

  // Medoid latent, zero translations, best grid rotation per view.
  void initialize();

  // Joint descent over (z, all poses); returns the best total loss reached.
  double joint_descent(std::uint64_t nonce);

  // Loss local minima over the rotation grid per view, ascending by
  // (loss, index), truncated to top_m.
  std::vector<std::vector<GridMinimum>> grid_minima(int top_m, std::uint64_t nonce);

  // Single evaluation reproducing one cell of the grid search, for
  // verification.
  double grid_loss_at(int view, int rotation_index, std::uint64_t nonce) const;

  struct Proposals {
    std::vector<RigidMotion> poses;
    std::vector<double> losses;
    std::vector<int> failed_starts;  // recorded and skipped
  };

  // Pose-only descents from every (view, minimum) start with z frozen;
  // per view the best (loss, start index) result wins.
  Proposals multistart(const std::vector<std::vector<GridMinimum>>& minima,
                       std::uint64_t nonce);

  RegistrationResult run();

  const RegistrationState& state() const { return state_; }
  RegistrationState& mutable_state() { return state_; }
  const std::vector<PointCloud>& normalized_views() const;
  const RegistrationReport& report() const { return report_; }

  // Per-view loss at the current state with a deterministic noise draw,
  // used at synchronization points.
  double sync_loss(int view, std::uint64_t nonce) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  RegistrationState state_;
  RegistrationReport report_;
};

// Full run: joint normalization, initialization, the round loop
// (joint descent, grid search, multistart, escape counting, update) until no
// escape is detected or the round cap hits, then a final joint descent.
RegistrationResult run_registration(const std::vector<PointCloud>& views,
                                    const DescriptorModel& model, const RotationGrid& grid,
                                    const RegConfig& cfg);

}  // namespace latreg

#endif  // LATREG_REGISTRATION_HPP
