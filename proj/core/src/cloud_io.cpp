#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "latreg/cloud.hpp"
#include "latreg/error.hpp"

namespace latreg {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'D', '3'};

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& path, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw data_error(path + ": truncated " + what);
  return value;
}

}  // namespace

PointCloud load_cloud_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path.string() + ": cannot open");
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double x, y, z;
    if (ls >> x >> y >> z) {
      pts.emplace_back(x, y, z);
    } else if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": malformed point line");
    }
  }
  if (pts.empty()) throw data_error(path.string() + ": no points");
  PointCloud cloud(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) cloud.row(i) = pts[i].transpose();
  validate_cloud(cloud, path.string());
  return cloud;
}

void save_cloud_text(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out.precision(17);
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    out << cloud(i, 0) << ' ' << cloud(i, 1) << ' ' << cloud(i, 2) << '\n';
  }
  if (!out) throw data_error(path.string() + ": write failed");
}

PointCloud load_cloud_pcd3(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path.string() + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw data_error(path.string() + ": bad magic, not a PCD3 file");
  }
  const auto count = read_raw<std::uint32_t>(in, path.string(), "count");
  if (count == 0) throw data_error(path.string() + ": zero point count");
  PointCloud cloud(count, 3);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) {
      cloud(i, c) = static_cast<double>(read_raw<float>(in, path.string(), "point data"));
    }
  }
  validate_cloud(cloud, path.string());
  return cloud;
}

void save_cloud_pcd3(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out.write(kMagic, 4);
  write_raw(out, static_cast<std::uint32_t>(cloud.rows()));
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    for (int c = 0; c < 3; ++c) write_raw(out, static_cast<float>(cloud(i, c)));
  }
  if (!out) throw data_error(path.string() + ": write failed");
}

PointCloud load_cloud(const std::filesystem::path& path) {
  if (path.extension() == ".pcd3") return load_cloud_pcd3(path);
  return load_cloud_text(path);
}

}  // namespace latreg
