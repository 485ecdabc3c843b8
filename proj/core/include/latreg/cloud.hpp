#ifndef LATREG_CLOUD_HPP
#define LATREG_CLOUD_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace latreg {

// Points are rows; coordinates share one consistent length unit.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using DistanceVector = std::vector<double>;

// Exact nearest-neighbor index over one immutable cloud (median-split
// kd-tree). Queries return the same distances as a brute-force scan, so
// everything built on top of them (masks, percentiles) is deterministic.
class NnIndex {
 public:
  explicit NnIndex(const PointCloud& cloud);

  // Squared distance to the nearest point.
  double nearest_sq(const Eigen::Vector3d& p) const;

  double nearest(const Eigen::Vector3d& p) const;

  struct Hit {
    int index = -1;
    double sq_dist = 0.0;
  };
  // Nearest point with its row index; distance ties go to the lowest index.
  Hit nearest_hit(const Eigen::Vector3d& p) const;

  // Number of points q with |q - p| < r, strict inequality.
  int count_within(const Eigen::Vector3d& p, double r) const;

  int size() const { return static_cast<int>(pts_.rows()); }
  const PointCloud& points() const { return pts_; }

 private:
  struct Node {
    int axis = -1;         // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end, int depth);
  void nearest_rec(int node, const Eigen::Vector3d& p, double& best_sq) const;
  void nearest_hit_rec(int node, const Eigen::Vector3d& p, Hit& best) const;
  void count_rec(int node, const Eigen::Vector3d& p, double r_sq, int& count) const;

  PointCloud pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Distance from p to its nearest neighbor in q.
double nn_distance(const Eigen::Vector3d& p, const PointCloud& q);
double nn_distance(const Eigen::Vector3d& p, const NnIndex& q);

// Per-point nearest-neighbor distances from p into q, in p's order.
DistanceVector nn_distance_vector(const PointCloud& p, const PointCloud& q);
DistanceVector nn_distance_vector(const PointCloud& p, const NnIndex& q);

// Bidirectional Chamfer distance with unsquared Euclidean point distances:
// mean over p of the nearest distance into q, plus the reverse term.
double chamfer(const PointCloud& p, const PointCloud& q);

// Sample standard deviation (k-1 denominator) of the per-point neighbor
// counts within radius r (strict, the point itself excluded).
double density_stddev(const PointCloud& x, double r);

// Throws if the cloud is empty or has non-finite coordinates.
void validate_cloud(const PointCloud& x, const std::string& what);

// --- file formats ---------------------------------------------------------
// Text: one "x y z" triple per line, '#' starts a comment.
// Binary (.pcd3): magic "PCD3", u32 LE count, then count*3 f32 LE.

PointCloud load_cloud_text(const std::filesystem::path& path);
void save_cloud_text(const PointCloud& cloud, const std::filesystem::path& path);

PointCloud load_cloud_pcd3(const std::filesystem::path& path);
void save_cloud_pcd3(const PointCloud& cloud, const std::filesystem::path& path);

// Dispatch on extension: ".pcd3" binary, anything else text.
PointCloud load_cloud(const std::filesystem::path& path);

}  // namespace latreg

#endif  // LATREG_CLOUD_HPP
