#ifndef LATREG_AUTODIFF_HPP
#define LATREG_AUTODIFF_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "latreg/geom3d.hpp"

namespace latreg {

// Reverse-mode tape over dense f64 matrices. Nodes are appended in
// evaluation order, which is also a topological order, so the backward pass
// is a single reverse sweep visiting each node once. A tape is
// single-threaded; independent tapes may run concurrently.
//
// Gradients after a max pool touch at most one row per feature column; the
// backward pass tracks the set of possibly-nonzero rows per node and
// restricts the matrix products to those rows. Skipped rows contribute
// exact zeros, so values are unchanged.
class Tape {
 public:
  using NodeId = int;
  using Matrix = Eigen::MatrixXd;

  // Leaf without gradient.
  NodeId constant(Matrix value);
  // Leaf with gradient (an optimization variable or a network weight).
  NodeId param(Matrix value);

  // y = x * w + 1 b   (x: k x in, w: in x out, b: 1 x out)
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId relu(NodeId x);
  // Column-wise max over rows: k x f -> 1 x f. Ties go to the lowest row.
  NodeId max_pool_points(NodeId x);
  NodeId concat_rows(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  // y = x + 1 t  (t: 1 x c broadcast over rows)
  NodeId add_rowvec(NodeId x, NodeId t);
  // y.row(i) = x.row(rows[i])
  NodeId gather_rows(NodeId x, std::vector<int> rows);
  // 1 x 3k -> k x 3; consecutive triples become rows.
  NodeId reshape_points(NodeId x);
  // p * (base * exp(skew(w)))^T for a point matrix p (k x 3) and local
  // exponential coordinates w (1 x 3).
  NodeId rotate_local(NodeId p, NodeId w, const Rotation& base);
  // sum of squared entries of (a - b), scalar output
  NodeId squared_l2(NodeId a, NodeId b);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  // Bidirectional Chamfer distance between two point matrices (k x 3),
  // unsquared distances. Nearest-neighbor selection happens at forward
  // time and is treated as constant by the backward pass.
  NodeId chamfer_nn(NodeId a, NodeId b);

  // Accumulates gradients for every parameter reachable from `output`,
  // which must be scalar (1 x 1).
  void backward(NodeId output);

  const Matrix& value(NodeId id) const { return nodes_[id].value; }
  // Zero matrix if the node was not reached or requires no gradient.
  Matrix grad(NodeId id) const;
  // Borrowed view of an accumulated gradient; valid only for nodes the
  // backward pass reached.
  const Matrix& grad_ref(NodeId id) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear();

 private:
  enum class Op {
    kLeaf, kAffine, kRelu, kMaxPool, kConcatRows, kAdd, kSub, kScale,
    kAddRowVec, kGatherRows, kReshapePoints, kRotateLocal, kSquaredL2, kSum,
    kMean, kChamfer,
  };

  // Rows of `grad` that can be nonzero; kept sorted and unique.
  struct RowSet {
    bool dense = false;
    std::vector<int> rows;
  };

  struct Node {
    Op op = Op::kLeaf;
    Matrix value;
    Matrix grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    RowSet active;
    NodeId a = -1, b = -1, c = -1;
    double scalar = 0.0;
    std::vector<int> indices;    // maxpool argmax / gather rows
    std::vector<int> nn_ab, nn_ba;  // chamfer pairings
    Eigen::Matrix3d base = Eigen::Matrix3d::Identity();
  };

  NodeId push(Node node);
  void ensure_grad(Node& n);
  // Marks rows (or everything) as active and returns the rows to process.
  void add_active_rows(Node& n, const RowSet& rows);
  static RowSet dense_rows();
  const Node& at(NodeId id) const;
  Node& at(NodeId id);
  void check_shape(bool ok, const std::string& what, NodeId x, NodeId y) const;

  void backward_node(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace latreg

#endif  // LATREG_AUTODIFF_HPP
