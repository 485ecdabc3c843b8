#include "latreg/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "latreg/cloud.hpp"
#include "latreg/error.hpp"

namespace latreg {

namespace {

std::string shape_str(const Eigen::MatrixXd& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

// Right Jacobian of the exponential map: exp(skew(w + dw)) ~
// exp(skew(w)) exp(skew(Jr(w) dw)).
Eigen::Matrix3d right_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = skew(w);
  if (theta < 1e-7) {
    return Eigen::Matrix3d::Identity() - 0.5 * k + (1.0 / 6.0) * (k * k);
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Eigen::Matrix3d::Identity() - a * k + b * (k * k);
}

}  // namespace

Tape::NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw runtime_error("Tape: node id out of range");
  }
  return nodes_[id];
}

Tape::Node& Tape::at(NodeId id) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->at(id));
}

void Tape::check_shape(bool ok, const std::string& what, NodeId x, NodeId y) const {
  if (!ok) {
    throw data_error("Tape::" + what + ": incompatible shapes " +
                     shape_str(nodes_[x].value) +
                     (y >= 0 ? " and " + shape_str(nodes_[y].value) : ""));
  }
}

Tape::NodeId Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::param(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Tape::NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  const Node& nx = at(x);
  const Node& nw = at(w);
  const Node& nb = at(b);
  check_shape(nx.value.cols() == nw.value.rows(), "affine", x, w);
  check_shape(nb.value.rows() == 1 && nb.value.cols() == nw.value.cols(), "affine", w, b);
  Node n;
  n.op = Op::kAffine;
  n.a = x; n.b = w; n.c = b;
  n.requires_grad = nx.requires_grad || nw.requires_grad || nb.requires_grad;
  n.value.noalias() = nx.value * nw.value;
  n.value.rowwise() += nb.value.row(0);
  return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.requires_grad = at(x).requires_grad;
  n.value = at(x).value.cwiseMax(0.0);
  return push(std::move(n));
}

Tape::NodeId Tape::max_pool_points(NodeId x) {
  const Node& nx = at(x);
  check_shape(nx.value.rows() >= 1, "max_pool_points", x, -1);
  Node n;
  n.op = Op::kMaxPool;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  const Eigen::Index k = nx.value.rows();
  const Eigen::Index f = nx.value.cols();
  n.value.resize(1, f);
  n.indices.resize(f);
  for (Eigen::Index c = 0; c < f; ++c) {
    int best = 0;
    double best_v = nx.value(0, c);
    for (Eigen::Index r = 1; r < k; ++r) {
      if (nx.value(r, c) > best_v) {  // strict: ties keep the lowest row
        best_v = nx.value(r, c);
        best = static_cast<int>(r);
      }
    }
    n.value(0, c) = best_v;
    n.indices[c] = best;
  }
  return push(std::move(n));
}

Tape::NodeId Tape::concat_rows(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  check_shape(na.value.cols() == nb.value.cols(), "concat_rows", a, b);
  Node n;
  n.op = Op::kConcatRows;
  n.a = a; n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value.resize(na.value.rows() + nb.value.rows(), na.value.cols());
  n.value.topRows(na.value.rows()) = na.value;
  n.value.bottomRows(nb.value.rows()) = nb.value;
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  check_shape(at(a).value.rows() == at(b).value.rows() &&
              at(a).value.cols() == at(b).value.cols(), "add", a, b);
  Node n;
  n.op = Op::kAdd;
  n.a = a; n.b = b;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = at(a).value + at(b).value;
  return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  check_shape(at(a).value.rows() == at(b).value.rows() &&
              at(a).value.cols() == at(b).value.cols(), "sub", a, b);
  Node n;
  n.op = Op::kSub;
  n.a = a; n.b = b;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = at(a).value - at(b).value;
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = s;
  n.requires_grad = at(a).requires_grad;
  n.value = s * at(a).value;
  return push(std::move(n));
}

Tape::NodeId Tape::add_rowvec(NodeId x, NodeId t) {
  const Node& nx = at(x);
  const Node& nt = at(t);
  check_shape(nt.value.rows() == 1 && nt.value.cols() == nx.value.cols(),
              "add_rowvec", x, t);
  Node n;
  n.op = Op::kAddRowVec;
  n.a = x; n.b = t;
  n.requires_grad = nx.requires_grad || nt.requires_grad;
  n.value = nx.value;
  n.value.rowwise() += nt.value.row(0);
  return push(std::move(n));
}

Tape::NodeId Tape::gather_rows(NodeId x, std::vector<int> rows) {
  const Node& nx = at(x);
  for (int r : rows) {
    if (r < 0 || r >= nx.value.rows()) {
      throw data_error("Tape::gather_rows: row index out of range");
    }
  }
  Node n;
  n.op = Op::kGatherRows;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  n.value.resize(static_cast<Eigen::Index>(rows.size()), nx.value.cols());
  for (size_t i = 0; i < rows.size(); ++i) n.value.row(i) = nx.value.row(rows[i]);
  n.indices = std::move(rows);
  return push(std::move(n));
}

Tape::NodeId Tape::reshape_points(NodeId x) {
  const Node& nx = at(x);
  check_shape(nx.value.rows() == 1 && nx.value.cols() % 3 == 0, "reshape_points", x, -1);
  Node n;
  n.op = Op::kReshapePoints;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  const Eigen::Index k = nx.value.cols() / 3;
  n.value.resize(k, 3);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) n.value(i, c) = nx.value(0, 3 * i + c);
  return push(std::move(n));
}

Tape::NodeId Tape::rotate_local(NodeId p, NodeId w, const Rotation& base) {
  const Node& np = at(p);
  const Node& nw = at(w);
  check_shape(np.value.cols() == 3, "rotate_local", p, -1);
  check_shape(nw.value.rows() == 1 && nw.value.cols() == 3, "rotate_local", w, -1);
  Node n;
  n.op = Op::kRotateLocal;
  n.a = p; n.b = w;
  n.base = base.matrix();
  n.requires_grad = np.requires_grad || nw.requires_grad;
  const Rotation local = rotation_exp(nw.value.row(0).transpose());
  const Eigen::Matrix3d total = base.matrix() * local.matrix();
  n.value.noalias() = np.value * total.transpose();
  return push(std::move(n));
}

Tape::NodeId Tape::squared_l2(NodeId a, NodeId b) {
  check_shape(at(a).value.rows() == at(b).value.rows() &&
              at(a).value.cols() == at(b).value.cols(), "squared_l2", a, b);
  Node n;
  n.op = Op::kSquaredL2;
  n.a = a; n.b = b;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value.resize(1, 1);
  n.value(0, 0) = (at(a).value - at(b).value).squaredNorm();
  return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.requires_grad = at(a).requires_grad;
  n.value.resize(1, 1);
  n.value(0, 0) = at(a).value.sum();
  return push(std::move(n));
}

Tape::NodeId Tape::mean(NodeId a) {
  Node n;
  n.op = Op::kMean;
  n.a = a;
  n.requires_grad = at(a).requires_grad;
  n.value.resize(1, 1);
  n.value(0, 0) = at(a).value.mean();
  return push(std::move(n));
}

Tape::NodeId Tape::chamfer_nn(NodeId a, NodeId b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  check_shape(na.value.cols() == 3 && nb.value.cols() == 3, "chamfer_nn", a, b);
  check_shape(na.value.rows() >= 1 && nb.value.rows() >= 1, "chamfer_nn", a, b);
  Node n;
  n.op = Op::kChamfer;
  n.a = a; n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;

  const Eigen::Index m = na.value.rows();
  const Eigen::Index nn = nb.value.rows();
  n.nn_ab.resize(m);
  n.nn_ba.resize(nn);
  // exact pairing through the kd index; distance ties resolve to the lowest
  // row index, matching a first-wins linear scan
  const NnIndex index_a(na.value);
  const NnIndex index_b(nb.value);
  double sum_ab = 0.0, sum_ba = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto hit = index_b.nearest_hit(na.value.row(i).transpose());
    n.nn_ab[i] = hit.index;
    sum_ab += std::sqrt(hit.sq_dist);
  }
  for (Eigen::Index j = 0; j < nn; ++j) {
    const auto hit = index_a.nearest_hit(nb.value.row(j).transpose());
    n.nn_ba[j] = hit.index;
    sum_ba += std::sqrt(hit.sq_dist);
  }
  n.value.resize(1, 1);
  n.value(0, 0) = sum_ab / static_cast<double>(m) + sum_ba / static_cast<double>(nn);
  return push(std::move(n));
}

void Tape::ensure_grad(Node& n) {
  if (!n.grad_alloc) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_alloc = true;
    n.active = RowSet{};
  }
}

Tape::RowSet Tape::dense_rows() {
  RowSet rs;
  rs.dense = true;
  return rs;
}

void Tape::add_active_rows(Node& n, const RowSet& rows) {
  if (n.active.dense) return;
  if (rows.dense) {
    n.active = dense_rows();
    n.active.rows.clear();
    return;
  }
  std::vector<int> merged;
  merged.reserve(n.active.rows.size() + rows.rows.size());
  std::set_union(n.active.rows.begin(), n.active.rows.end(), rows.rows.begin(),
                 rows.rows.end(), std::back_inserter(merged));
  // fall back to dense once most rows are active
  if (4 * merged.size() >= 3 * static_cast<size_t>(n.value.rows())) {
    n.active = dense_rows();
  } else {
    n.active.rows = std::move(merged);
  }
}

namespace {

// Compact copy of the given rows of m.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

}  // namespace

void Tape::backward_node(Node& n) {
  const bool dense = n.active.dense;
  const std::vector<int>& rows = n.active.rows;

  auto propagate_rows_to = [&](NodeId target) {
    Node& t = at(target);
    ensure_grad(t);
    if (dense) {
      add_active_rows(t, dense_rows());
    } else {
      RowSet rs;
      rs.rows = rows;
      add_active_rows(t, rs);
    }
  };

  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kAffine: {
      Node& nx = at(n.a);
      Node& nw = at(n.b);
      Node& nb = at(n.c);
      if (dense) {
        if (nx.requires_grad) {
          ensure_grad(nx);
          add_active_rows(nx, dense_rows());
          nx.grad.noalias() += n.grad * nw.value.transpose();
        }
        if (nw.requires_grad) {
          ensure_grad(nw);
          nw.grad.noalias() += nx.value.transpose() * n.grad;
          add_active_rows(nw, dense_rows());
        }
        if (nb.requires_grad) {
          ensure_grad(nb);
          nb.grad.row(0) += n.grad.colwise().sum();
          add_active_rows(nb, dense_rows());
        }
      } else {
        const Matrix gy = take_rows(n.grad, rows);
        if (nx.requires_grad) {
          ensure_grad(nx);
          RowSet rs; rs.rows = rows;
          add_active_rows(nx, rs);
          const Matrix gx = gy * nw.value.transpose();
          for (size_t i = 0; i < rows.size(); ++i) nx.grad.row(rows[i]) += gx.row(i);
        }
        if (nw.requires_grad) {
          ensure_grad(nw);
          const Matrix xr = take_rows(nx.value, rows);
          nw.grad.noalias() += xr.transpose() * gy;
          add_active_rows(nw, dense_rows());
        }
        if (nb.requires_grad) {
          ensure_grad(nb);
          nb.grad.row(0) += gy.colwise().sum();
          add_active_rows(nb, dense_rows());
        }
      }
      return;
    }
    case Op::kRelu: {
      Node& nx = at(n.a);
      if (!nx.requires_grad) return;
      ensure_grad(nx);
      if (dense) {
        add_active_rows(nx, dense_rows());
        nx.grad.array() += n.grad.array() * (nx.value.array() > 0.0).cast<double>();
      } else {
        RowSet rs; rs.rows = rows;
        add_active_rows(nx, rs);
        for (int r : rows) {
          nx.grad.row(r).array() +=
              n.grad.row(r).array() * (nx.value.row(r).array() > 0.0).cast<double>();
        }
      }
      return;
    }
    case Op::kMaxPool: {
      Node& nx = at(n.a);
      if (!nx.requires_grad) return;
      ensure_grad(nx);
      std::vector<int> touched(n.indices.begin(), n.indices.end());
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      RowSet rs; rs.rows = std::move(touched);
      add_active_rows(nx, rs);
      for (Eigen::Index c = 0; c < n.value.cols(); ++c) {
        nx.grad(n.indices[c], c) += n.grad(0, c);
      }
      return;
    }
    case Op::kConcatRows: {
      Node& na = at(n.a);
      Node& nb = at(n.b);
      const int split = static_cast<int>(na.value.rows());
      if (na.requires_grad) {
        ensure_grad(na);
        if (dense) {
          add_active_rows(na, dense_rows());
          na.grad += n.grad.topRows(split);
        } else {
          RowSet rs;
          for (int r : rows) if (r < split) rs.rows.push_back(r);
          add_active_rows(na, rs);
          for (int r : rs.rows) na.grad.row(r) += n.grad.row(r);
        }
      }
      if (nb.requires_grad) {
        ensure_grad(nb);
        if (dense) {
          add_active_rows(nb, dense_rows());
          nb.grad += n.grad.bottomRows(nb.value.rows());
        } else {
          RowSet rs;
          for (int r : rows) if (r >= split) rs.rows.push_back(r - split);
          add_active_rows(nb, rs);
          for (int r : rs.rows) nb.grad.row(r) += n.grad.row(r + split);
        }
      }
      return;
    }
    case Op::kAdd:
    case Op::kSub: {
      const double sign_b = n.op == Op::kSub ? -1.0 : 1.0;
      for (int which = 0; which < 2; ++which) {
        Node& t = at(which == 0 ? n.a : n.b);
        if (!t.requires_grad) continue;
        ensure_grad(t);
        const double s = which == 0 ? 1.0 : sign_b;
        if (dense) {
          add_active_rows(t, dense_rows());
          t.grad += s * n.grad;
        } else {
          RowSet rs; rs.rows = rows;
          add_active_rows(t, rs);
          for (int r : rows) t.grad.row(r) += s * n.grad.row(r);
        }
      }
      return;
    }
    case Op::kScale: {
      Node& nx = at(n.a);
      if (!nx.requires_grad) return;
      ensure_grad(nx);
      if (dense) {
        add_active_rows(nx, dense_rows());
        nx.grad += n.scalar * n.grad;
      } else {
        RowSet rs; rs.rows = rows;
        add_active_rows(nx, rs);
        for (int r : rows) nx.grad.row(r) += n.scalar * n.grad.row(r);
      }
      return;
    }
    case Op::kAddRowVec: {
      Node& nx = at(n.a);
      Node& nt = at(n.b);
      if (nx.requires_grad) {
        ensure_grad(nx);
        if (dense) {
          add_active_rows(nx, dense_rows());
          nx.grad += n.grad;
        } else {
          RowSet rs; rs.rows = rows;
          add_active_rows(nx, rs);
          for (int r : rows) nx.grad.row(r) += n.grad.row(r);
        }
      }
      if (nt.requires_grad) {
        ensure_grad(nt);
        add_active_rows(nt, dense_rows());
        if (dense) {
          nt.grad.row(0) += n.grad.colwise().sum();
        } else {
          for (int r : rows) nt.grad.row(0) += n.grad.row(r);
        }
      }
      return;
    }
    case Op::kGatherRows: {
      Node& nx = at(n.a);
      if (!nx.requires_grad) return;
      ensure_grad(nx);
      RowSet rs;
      if (dense) {
        rs.rows.assign(n.indices.begin(), n.indices.end());
        std::sort(rs.rows.begin(), rs.rows.end());
        rs.rows.erase(std::unique(rs.rows.begin(), rs.rows.end()), rs.rows.end());
        add_active_rows(nx, rs);
        for (size_t i = 0; i < n.indices.size(); ++i) {
          nx.grad.row(n.indices[i]) += n.grad.row(static_cast<Eigen::Index>(i));
        }
      } else {
        for (int r : rows) rs.rows.push_back(n.indices[r]);
        std::sort(rs.rows.begin(), rs.rows.end());
        rs.rows.erase(std::unique(rs.rows.begin(), rs.rows.end()), rs.rows.end());
        add_active_rows(nx, rs);
        for (int r : rows) nx.grad.row(n.indices[r]) += n.grad.row(r);
      }
      return;
    }
    case Op::kReshapePoints: {
      Node& nx = at(n.a);
      if (!nx.requires_grad) return;
      ensure_grad(nx);
      add_active_rows(nx, dense_rows());
      auto scatter = [&](Eigen::Index r) {
        for (int c = 0; c < 3; ++c) nx.grad(0, 3 * r + c) += n.grad(r, c);
      };
      if (dense) {
        for (Eigen::Index r = 0; r < n.value.rows(); ++r) scatter(r);
      } else {
        for (int r : rows) scatter(r);
      }
      return;
    }
    case Op::kRotateLocal: {
      Node& np = at(n.a);
      Node& nw = at(n.b);
      const Rotation local = rotation_exp(nw.value.row(0).transpose());
      const Eigen::Matrix3d total = n.base * local.matrix();
      if (np.requires_grad) {
        ensure_grad(np);
        if (dense) {
          add_active_rows(np, dense_rows());
          np.grad.noalias() += n.grad * total;
        } else {
          RowSet rs; rs.rows = rows;
          add_active_rows(np, rs);
          for (int r : rows) np.grad.row(r) += n.grad.row(r) * total;
        }
      }
      if (nw.requires_grad) {
        ensure_grad(nw);
        add_active_rows(nw, dense_rows());
        const Eigen::Matrix3d jr = right_jacobian(nw.value.row(0).transpose());
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        auto accumulate = [&](Eigen::Index r) {
          const Eigen::Vector3d g = total.transpose() * n.grad.row(r).transpose();
          const Eigen::Vector3d p = np.value.row(r).transpose();
          acc += p.cross(g);
        };
        if (dense) {
          for (Eigen::Index r = 0; r < np.value.rows(); ++r) accumulate(r);
        } else {
          for (int r : rows) accumulate(r);
        }
        nw.grad.row(0) += (acc.transpose() * jr);
      }
      return;
    }
    case Op::kSquaredL2: {
      Node& na = at(n.a);
      Node& nb = at(n.b);
      const double g = 2.0 * n.grad(0, 0);
      const Matrix diff = na.value - nb.value;
      if (na.requires_grad) {
        ensure_grad(na);
        add_active_rows(na, dense_rows());
        na.grad += g * diff;
      }
      if (nb.requires_grad) {
        ensure_grad(nb);
        add_active_rows(nb, dense_rows());
        nb.grad -= g * diff;
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      Node& na = at(n.a);
      if (!na.requires_grad) return;
      ensure_grad(na);
      add_active_rows(na, dense_rows());
      double g = n.grad(0, 0);
      if (n.op == Op::kMean) g /= static_cast<double>(na.value.size());
      na.grad.array() += g;
      return;
    }
    case Op::kChamfer: {
      Node& na = at(n.a);
      Node& nb = at(n.b);
      const double g = n.grad(0, 0);
      const double m = static_cast<double>(na.value.rows());
      const double nn = static_cast<double>(nb.value.rows());
      if (na.requires_grad) { ensure_grad(na); add_active_rows(na, dense_rows()); }
      if (nb.requires_grad) { ensure_grad(nb); add_active_rows(nb, dense_rows()); }
      for (Eigen::Index i = 0; i < na.value.rows(); ++i) {
        const int j = n.nn_ab[i];
        const Eigen::RowVector3d diff = na.value.row(i) - nb.value.row(j);
        const double d = diff.norm();
        if (d <= 0.0) continue;  // coincident pair contributes no gradient
        const Eigen::RowVector3d u = (g / (m * d)) * diff;
        if (na.requires_grad) na.grad.row(i) += u;
        if (nb.requires_grad) nb.grad.row(j) -= u;
      }
      for (Eigen::Index j = 0; j < nb.value.rows(); ++j) {
        const int i = n.nn_ba[j];
        const Eigen::RowVector3d diff = nb.value.row(j) - na.value.row(i);
        const double d = diff.norm();
        if (d <= 0.0) continue;
        const Eigen::RowVector3d u = (g / (nn * d)) * diff;
        if (nb.requires_grad) nb.grad.row(j) += u;
        if (na.requires_grad) na.grad.row(i) -= u;
      }
      return;
    }
  }
}

void Tape::backward(NodeId output) {
  Node& out = at(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw data_error("Tape::backward: output must be scalar, got " +
                     shape_str(out.value));
  }
  if (!out.requires_grad) return;
  ensure_grad(out);
  out.grad(0, 0) = 1.0;
  add_active_rows(out, dense_rows());
  for (NodeId id = output; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_alloc || !n.requires_grad) continue;
    backward_node(n);
  }
}

Tape::Matrix Tape::grad(NodeId id) const {
  const Node& n = at(id);
  if (!n.grad_alloc) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const Tape::Matrix& Tape::grad_ref(NodeId id) const {
  const Node& n = at(id);
  if (!n.grad_alloc) {
    throw runtime_error("Tape::grad_ref: gradient was never accumulated for this node");
  }
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

}  // namespace latreg
