#include "latreg/descriptor.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "latreg/error.hpp"

namespace latreg {

void DescriptorModel::validate() const {
  if (encoder.empty() || decoder.empty()) throw model_error("model: no layers");
  if (encoder.front().w.rows() != 3) {
    throw model_error("model: encoder input dimension must be 3");
  }
  Eigen::Index dim = 3;
  for (size_t i = 0; i < encoder.size(); ++i) {
    const auto& l = encoder[i];
    if (l.w.rows() != dim || l.b.rows() != 1 || l.b.cols() != l.w.cols()) {
      throw model_error("model: encoder layer " + std::to_string(i) + " has inconsistent shape");
    }
    dim = l.w.cols();
  }
  if (dim != latent_dim) throw model_error("model: encoder output does not match latent_dim");
  for (size_t i = 0; i < decoder.size(); ++i) {
    const auto& l = decoder[i];
    if (l.w.rows() != dim || l.b.rows() != 1 || l.b.cols() != l.w.cols()) {
      throw model_error("model: decoder layer " + std::to_string(i) + " has inconsistent shape");
    }
    dim = l.w.cols();
  }
  if (dim != 3LL * output_points) {
    throw model_error("model: decoder output does not match 3*output_points");
  }
}

DescriptorModel init_model(const ModelShape& shape, Rng& rng) {
  if (shape.latent_dim < 1 || shape.output_points < 1) {
    throw config_error("init_model: latent_dim and output_points must be positive");
  }
  auto make_layer = [&rng](int in, int out) {
    DescriptorModel::Layer layer;
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    layer.w.resize(in, out);
    for (int r = 0; r < in; ++r)
      for (int c = 0; c < out; ++c) layer.w(r, c) = rng.uniform(-bound, bound);
    layer.b = Eigen::MatrixXd::Zero(1, out);
    return layer;
  };
  DescriptorModel model;
  model.latent_dim = shape.latent_dim;
  model.output_points = shape.output_points;
  int dim = 3;
  for (int width : shape.encoder_widths) {
    model.encoder.push_back(make_layer(dim, width));
    dim = width;
  }
  model.encoder.push_back(make_layer(dim, shape.latent_dim));
  dim = shape.latent_dim;
  for (int width : shape.decoder_widths) {
    model.decoder.push_back(make_layer(dim, width));
    dim = width;
  }
  model.decoder.push_back(make_layer(dim, 3 * shape.output_points));
  model.validate();
  return model;
}

Eigen::MatrixXd encode_features(const DescriptorModel& model, const PointCloud& x) {
  validate_cloud(x, "encode");
  Eigen::MatrixXd h = x;
  for (const auto& layer : model.encoder) {
    Eigen::MatrixXd next = h * layer.w;
    next.rowwise() += layer.b.row(0);
    h = next.cwiseMax(0.0);
  }
  return h;
}

Eigen::VectorXd pool_all(const Eigen::MatrixXd& features) {
  return features.colwise().maxCoeff().transpose();
}

Eigen::VectorXd pool_rows(const Eigen::MatrixXd& features, const std::vector<int>& rows) {
  if (rows.empty()) throw data_error("pool_rows: empty row subset");
  Eigen::VectorXd out = features.row(rows[0]).transpose();
  for (size_t i = 1; i < rows.size(); ++i) {
    out = out.cwiseMax(features.row(rows[i]).transpose());
  }
  return out;
}

Eigen::VectorXd encode(const DescriptorModel& model, const PointCloud& x) {
  validate_cloud(x, "encode");
  // evaluated point by point: the feature of a point then never depends on
  // which other points share the batch, so permutation and duplication
  // invariance hold exactly
  Eigen::VectorXd out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::RowVectorXd h = x.row(i);
    for (const auto& layer : model.encoder) {
      h = ((h * layer.w).rowwise() + layer.b.row(0)).cwiseMax(0.0);
    }
    out = i == 0 ? Eigen::VectorXd(h.transpose()) : out.cwiseMax(h.transpose());
  }
  return out;
}

PointCloud decode(const DescriptorModel& model, const Eigen::VectorXd& z) {
  if (z.size() != model.latent_dim) {
    throw model_error("decode: latent has length " + std::to_string(z.size()) +
                      ", model expects " + std::to_string(model.latent_dim));
  }
  Eigen::MatrixXd h = z.transpose();
  for (size_t i = 0; i < model.decoder.size(); ++i) {
    Eigen::MatrixXd next = h * model.decoder[i].w;
    next.rowwise() += model.decoder[i].b.row(0);
    if (i + 1 < model.decoder.size()) next = next.cwiseMax(0.0);
    h = next;
  }
  return Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(
             h.data(), 3, model.output_points)
      .transpose();
}

ModelParamNodes add_model_params(Tape& tape, const DescriptorModel& model) {
  ModelParamNodes out;
  for (const auto& layer : model.encoder) {
    out.nodes.push_back(tape.param(layer.w));
    out.nodes.push_back(tape.param(layer.b));
  }
  for (const auto& layer : model.decoder) {
    out.nodes.push_back(tape.param(layer.w));
    out.nodes.push_back(tape.param(layer.b));
  }
  return out;
}

Tape::NodeId tape_encode(Tape& tape, const DescriptorModel& model, Tape::NodeId points,
                         const ModelParamNodes* params) {
  Tape::NodeId h = points;
  for (size_t i = 0; i < model.encoder.size(); ++i) {
    const Tape::NodeId w = params ? params->nodes[2 * i] : tape.constant(model.encoder[i].w);
    const Tape::NodeId b =
        params ? params->nodes[2 * i + 1] : tape.constant(model.encoder[i].b);
    h = tape.relu(tape.affine(h, w, b));
  }
  return tape.max_pool_points(h);
}

Tape::NodeId tape_decode(Tape& tape, const DescriptorModel& model, Tape::NodeId z,
                         const ModelParamNodes* params) {
  const size_t offset = 2 * model.encoder.size();
  Tape::NodeId h = z;
  for (size_t i = 0; i < model.decoder.size(); ++i) {
    const Tape::NodeId w =
        params ? params->nodes[offset + 2 * i] : tape.constant(model.decoder[i].w);
    const Tape::NodeId b =
        params ? params->nodes[offset + 2 * i + 1] : tape.constant(model.decoder[i].b);
    h = tape.affine(h, w, b);
    if (i + 1 < model.decoder.size()) h = tape.relu(h);
  }
  return h;  // 1 x 3*output_points; reshape happens at the consumer
}

void quantize_to_f32(DescriptorModel& model) {
  auto round_layer = [](DescriptorModel::Layer& l) {
    l.w = l.w.cast<float>().cast<double>();
    l.b = l.b.cast<float>().cast<double>();
  };
  for (auto& l : model.encoder) round_layer(l);
  for (auto& l : model.decoder) round_layer(l);
}

namespace {

constexpr char kMagic[4] = {'P', 'L', 'R', 'M'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw model_error("model file: truncated while reading " + what);
  return v;
}

void write_layer(std::ostream& out, const DescriptorModel::Layer& l) {
  write_raw(out, static_cast<std::uint32_t>(l.w.rows()));
  write_raw(out, static_cast<std::uint32_t>(l.w.cols()));
  for (Eigen::Index r = 0; r < l.w.rows(); ++r)
    for (Eigen::Index c = 0; c < l.w.cols(); ++c) write_raw(out, static_cast<float>(l.w(r, c)));
  for (Eigen::Index c = 0; c < l.b.cols(); ++c) write_raw(out, static_cast<float>(l.b(0, c)));
}

DescriptorModel::Layer read_layer(std::istream& in, const std::string& name) {
  const auto rows = read_raw<std::uint32_t>(in, name + " shape");
  const auto cols = read_raw<std::uint32_t>(in, name + " shape");
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
    throw model_error("model file: implausible shape in " + name);
  }
  DescriptorModel::Layer l;
  l.w.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      l.w(r, c) = static_cast<double>(read_raw<float>(in, name + " weights"));
    }
  l.b.resize(1, cols);
  for (std::uint32_t c = 0; c < cols; ++c) {
    l.b(0, c) = static_cast<double>(read_raw<float>(in, name + " biases"));
  }
  return l;
}

}  // namespace

void save_model(const DescriptorModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw model_error(path.string() + ": cannot open for writing");
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint32_t>(model.latent_dim));
  write_raw(out, static_cast<std::uint32_t>(model.output_points));
  write_raw(out, static_cast<std::uint32_t>(model.encoder.size()));
  write_raw(out, static_cast<std::uint32_t>(model.decoder.size()));
  for (const auto& l : model.encoder) write_layer(out, l);
  for (const auto& l : model.decoder) write_layer(out, l);
  if (!out) throw model_error(path.string() + ": write failed");
}

DescriptorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw model_error(path.string() + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw model_error(path.string() + ": bad magic, not a model file");
  }
  const auto version = read_raw<std::uint16_t>(in, "version");
  if (version != kVersion) {
    throw model_error(path.string() + ": unsupported version " + std::to_string(version));
  }
  DescriptorModel model;
  model.latent_dim = static_cast<int>(read_raw<std::uint32_t>(in, "latent_dim"));
  model.output_points = static_cast<int>(read_raw<std::uint32_t>(in, "output_points"));
  const auto n_enc = read_raw<std::uint32_t>(in, "encoder layer count");
  const auto n_dec = read_raw<std::uint32_t>(in, "decoder layer count");
  for (std::uint32_t i = 0; i < n_enc; ++i) {
    model.encoder.push_back(read_layer(in, "encoder layer " + std::to_string(i)));
  }
  for (std::uint32_t i = 0; i < n_dec; ++i) {
    model.decoder.push_back(read_layer(in, "decoder layer " + std::to_string(i)));
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw model_error(path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace latreg
