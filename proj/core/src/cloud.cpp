#include "latreg/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latreg/error.hpp"

namespace latreg {

void validate_cloud(const PointCloud& x, const std::string& what) {
  if (x.rows() < 1) throw data_error(what + ": empty point cloud");
  if (!x.allFinite()) throw data_error(what + ": non-finite coordinates");
}

namespace {

inline double sq_dist(const Eigen::Vector3d& a, const Eigen::RowVector3d& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

constexpr int kLeafSize = 12;

}  // namespace

NnIndex::NnIndex(const PointCloud& cloud) : pts_(cloud) {
  validate_cloud(cloud, "NnIndex");
  order_.resize(pts_.rows());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * pts_.rows() / kLeafSize + 2);
  root_ = build(0, static_cast<int>(order_.size()), 0);
}

int NnIndex::build(int begin, int end, int depth) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  const int axis = depth % 3;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     return pts_(a, axis) < pts_(b, axis) ||
                            (pts_(a, axis) == pts_(b, axis) && a < b);
                   });
  node.axis = axis;
  node.split = pts_(order_[mid], axis);
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void NnIndex::nearest_rec(int ni, const Eigen::Vector3d& p, double& best_sq) const {
  const Node& node = nodes_[ni];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const double d = sq_dist(p, pts_.row(order_[i]));
      if (d < best_sq) best_sq = d;
    }
    return;
  }
  const double delta = p[node.axis] - node.split;
  const int near = delta < 0 ? node.left : node.right;
  const int far = delta < 0 ? node.right : node.left;
  nearest_rec(near, p, best_sq);
  if (delta * delta < best_sq) nearest_rec(far, p, best_sq);
}

double NnIndex::nearest_sq(const Eigen::Vector3d& p) const {
  double best = std::numeric_limits<double>::infinity();
  nearest_rec(root_, p, best);
  return best;
}

double NnIndex::nearest(const Eigen::Vector3d& p) const {
  return std::sqrt(nearest_sq(p));
}

void NnIndex::nearest_hit_rec(int ni, const Eigen::Vector3d& p, Hit& best) const {
  const Node& node = nodes_[ni];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d = sq_dist(p, pts_.row(idx));
      if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) {
        best.sq_dist = d;
        best.index = idx;
      }
    }
    return;
  }
  const double delta = p[node.axis] - node.split;
  const int near = delta < 0 ? node.left : node.right;
  const int far = delta < 0 ? node.right : node.left;
  nearest_hit_rec(near, p, best);
  // <= so equidistant points across the split still compete on index
  if (delta * delta <= best.sq_dist) nearest_hit_rec(far, p, best);
}

NnIndex::Hit NnIndex::nearest_hit(const Eigen::Vector3d& p) const {
  Hit best;
  best.sq_dist = std::numeric_limits<double>::infinity();
  nearest_hit_rec(root_, p, best);
  return best;
}

void NnIndex::count_rec(int ni, const Eigen::Vector3d& p, double r_sq, int& count) const {
  const Node& node = nodes_[ni];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      if (sq_dist(p, pts_.row(order_[i])) < r_sq) ++count;
    }
    return;
  }
  const double delta = p[node.axis] - node.split;
  const int near = delta < 0 ? node.left : node.right;
  const int far = delta < 0 ? node.right : node.left;
  count_rec(near, p, r_sq, count);
  if (delta * delta < r_sq) count_rec(far, p, r_sq, count);
}

int NnIndex::count_within(const Eigen::Vector3d& p, double r) const {
  int count = 0;
  count_rec(root_, p, r * r, count);
  return count;
}

double nn_distance(const Eigen::Vector3d& p, const PointCloud& q) {
  validate_cloud(q, "nn_distance");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    const double d = sq_dist(p, q.row(j));
    if (d < best) best = d;
  }
  return std::sqrt(best);
}

double nn_distance(const Eigen::Vector3d& p, const NnIndex& q) {
  return q.nearest(p);
}

DistanceVector nn_distance_vector(const PointCloud& p, const NnIndex& q) {
  validate_cloud(p, "nn_distance_vector");
  DistanceVector out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = q.nearest(p.row(i).transpose());
  return out;
}

DistanceVector nn_distance_vector(const PointCloud& p, const PointCloud& q) {
  validate_cloud(q, "nn_distance_vector");
  NnIndex index(q);
  return nn_distance_vector(p, index);
}

double chamfer(const PointCloud& p, const PointCloud& q) {
  validate_cloud(p, "chamfer");
  validate_cloud(q, "chamfer");
  const NnIndex index_p(p);
  const NnIndex index_q(q);
  double sum_pq = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) sum_pq += index_q.nearest(p.row(i).transpose());
  double sum_qp = 0.0;
  for (Eigen::Index j = 0; j < q.rows(); ++j) sum_qp += index_p.nearest(q.row(j).transpose());
  return sum_pq / static_cast<double>(p.rows()) + sum_qp / static_cast<double>(q.rows());
}

double density_stddev(const PointCloud& x, double r) {
  validate_cloud(x, "density_stddev");
  const Eigen::Index k = x.rows();
  if (k < 2) throw data_error("density_stddev: needs at least 2 points");
  if (!(r > 0.0)) throw data_error("density_stddev: radius must be positive");
  NnIndex index(x);
  Eigen::VectorXd counts(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    // the query point is a member of the cloud and always counts itself
    counts[i] = static_cast<double>(index.count_within(x.row(i).transpose(), r) - 1);
  }
  const double mean = counts.mean();
  const double var = (counts.array() - mean).square().sum() / static_cast<double>(k - 1);
  return std::sqrt(var);
}

}  // namespace latreg
