#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "latreg/error.hpp"
#include "latreg/parallel.hpp"
#include "latreg/registration.hpp"

namespace latreg {

namespace {

// Super-Fibonacci spiral on the quaternion sphere: a deterministic
// low-discrepancy sampling of SO(3).
Rotation super_fibonacci_rotation(int i, int n) {
  constexpr double kPhi = 1.4142135623730951;              // sqrt(2)
  constexpr double kPsi = 1.533751168755204288118041;      // real root of x^4 = x + 4
  const double s = static_cast<double>(i) + 0.5;
  const double t = s / static_cast<double>(n);
  const double r = std::sqrt(t);
  const double big_r = std::sqrt(1.0 - t);
  const double alpha = 2.0 * std::numbers::pi * s / kPhi;
  const double beta = 2.0 * std::numbers::pi * s / kPsi;
  const double qx = r * std::sin(alpha);
  const double qy = r * std::cos(alpha);
  const double qz = big_r * std::sin(beta);
  const double qw = big_r * std::cos(beta);

  // unit quaternion (w, x, y, z) -> rotation matrix
  Eigen::Matrix3d m;
  m << 1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw),
       2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw),
       2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy);
  return Rotation::from_matrix(m);
}

// Same value as relative_angle, computed from the Frobenius inner product.
inline double angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double tr = a.cwiseProduct(b).sum();
  return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

}  // namespace

void RotationGrid::validate() const {
  const int l_count = size();
  if (l_count < 2) throw data_error("RotationGrid: needs at least 2 rotations");
  if (k < 1 || k >= l_count) throw data_error("RotationGrid: invalid neighbor count");
  if (adjacency.size() != static_cast<size_t>(l_count) * k) {
    throw data_error("RotationGrid: adjacency size mismatch");
  }
  for (const auto& r : rotations) {
    if (!r.is_valid()) throw data_error("RotationGrid: invalid rotation entry");
  }
  for (int i = 0; i < l_count; ++i) {
    for (int j = 0; j < k; ++j) {
      const std::uint32_t nb = neighbors(i)[j];
      if (nb >= static_cast<std::uint32_t>(l_count)) {
        throw data_error("RotationGrid: adjacency index out of range");
      }
      if (nb == static_cast<std::uint32_t>(i)) {
        throw data_error("RotationGrid: self-referential adjacency");
      }
    }
  }
}

RotationGrid build_rotation_grid(int l_count, int k, int threads) {
  if (k < 1) throw config_error("build_rotation_grid: k must be >= 1");
  if (l_count <= k) throw config_error("build_rotation_grid: L must exceed k");
  RotationGrid grid;
  grid.k = k;
  grid.rotations.reserve(l_count);
  for (int i = 0; i < l_count; ++i) {
    grid.rotations.push_back(super_fibonacci_rotation(i, l_count));
  }
  grid.adjacency.resize(static_cast<size_t>(l_count) * k);

  parallel_for(0, l_count, threads, [&](std::int64_t i) {
    const Eigen::Matrix3d& mi = grid.rotations[i].matrix();
    std::vector<std::pair<double, int>> cand;
    cand.reserve(l_count - 1);
    for (int j = 0; j < l_count; ++j) {
      if (j == static_cast<int>(i)) continue;
      cand.emplace_back(angle_between(mi, grid.rotations[j].matrix()), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int j = 0; j < k; ++j) {
      grid.adjacency[static_cast<size_t>(i) * k + j] =
          static_cast<std::uint32_t>(cand[j].second);
    }
  });
  return grid;
}

namespace {

constexpr char kGridMagic[4] = {'S', 'O', '3', 'G'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw data_error("grid file: truncated while reading " + what);
  return v;
}

}  // namespace

void save_grid(const RotationGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out.write(kGridMagic, 4);
  write_raw(out, static_cast<std::uint32_t>(grid.size()));
  write_raw(out, static_cast<std::uint32_t>(grid.k));
  for (const auto& r : grid.rotations) {
    const Eigen::Matrix3d& m = r.matrix();
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) write_raw(out, static_cast<float>(m(row, col)));
  }
  for (std::uint32_t v : grid.adjacency) write_raw(out, v);
  if (!out) throw data_error(path.string() + ": write failed");
}

RotationGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path.string() + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGridMagic, 4) != 0) {
    throw data_error(path.string() + ": bad magic, not a rotation-grid file");
  }
  const auto l_count = read_raw<std::uint32_t>(in, "L");
  const auto k = read_raw<std::uint32_t>(in, "k");
  if (l_count < 2 || k < 1 || k >= l_count) {
    throw data_error(path.string() + ": implausible grid header");
  }
  RotationGrid grid;
  grid.k = static_cast<int>(k);
  grid.rotations.reserve(l_count);
  for (std::uint32_t i = 0; i < l_count; ++i) {
    Eigen::Matrix3d m;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) {
        m(row, col) = static_cast<double>(read_raw<float>(in, "rotation data"));
      }
    // absorb the f32 rounding
    grid.rotations.push_back(Rotation::project(m));
  }
  grid.adjacency.resize(static_cast<size_t>(l_count) * k);
  for (auto& v : grid.adjacency) v = read_raw<std::uint32_t>(in, "adjacency");
  grid.validate();
  return grid;
}

}  // namespace latreg
