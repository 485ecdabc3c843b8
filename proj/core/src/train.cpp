#include <cmath>
#include <limits>

#include "latreg/degrade.hpp"
#include "latreg/descriptor.hpp"
#include "latreg/error.hpp"
#include "latreg/optim.hpp"

namespace latreg {

void TrainConfig::validate() const {
  if (epochs < 1) throw config_error("train: epochs must be positive");
  if (batch_size < 1) throw config_error("train: batch_size must be positive");
  if (samples_per_epoch < batch_size) {
    throw config_error("train: samples_per_epoch must be at least batch_size");
  }
  if (!(lr > 0.0)) throw config_error("train: lr must be positive");
  if (!(lr_factor > 1.0)) throw config_error("train: lr_factor must be > 1");
  if (lr_patience < 1) throw config_error("train: lr_patience must be positive");
  if (points_per_cloud < 64) throw config_error("train: points_per_cloud must be >= 64");
  if (!(jit_sigma_max >= 0.0)) throw config_error("train: jit_sigma_max must be >= 0");
  if (!(cut_min > 0.0 && cut_min <= 1.0)) throw config_error("train: cut_min must be in (0, 1]");
}

namespace {

// Resolves a shape entry: a built-in name, or a point-cloud file to
// subsample from.
struct ShapeSource {
  std::string name;
  PointCloud file_points;  // empty when built-in
  bool from_file = false;

  PointCloud sample(int k, Rng& rng) const {
    if (!from_file) return make_shape(name, k, rng);
    const Eigen::Index n = file_points.rows();
    PointCloud out(k, 3);
    for (int i = 0; i < k; ++i) {
      out.row(i) = file_points.row(static_cast<Eigen::Index>(rng.index(n)));
    }
    return out;
  }
};

std::vector<ShapeSource> resolve_shapes(const std::vector<std::string>& entries) {
  std::vector<std::string> names = entries;
  if (names.empty()) names = builtin_shape_names();
  std::vector<ShapeSource> sources;
  for (const auto& entry : names) {
    ShapeSource src;
    src.name = entry;
    const auto& builtins = builtin_shape_names();
    if (std::find(builtins.begin(), builtins.end(), entry) == builtins.end()) {
      src.file_points = load_cloud(entry);
      src.from_file = true;
    }
    sources.push_back(std::move(src));
  }
  if (sources.size() < 2) {
    throw config_error("train: need at least 2 distinct shapes");
  }
  return sources;
}

struct Sample {
  PointCloud input;   // degraded, re-normalized
  PointCloud target;  // clean posed cloud
};

Sample make_sample(const std::vector<ShapeSource>& shapes, const TrainConfig& cfg,
                   Rng& rng) {
  const auto& src = shapes[rng.index(shapes.size())];
  const PointCloud raw = src.sample(cfg.points_per_cloud, rng);
  const PointCloud clean = center_and_normalize(raw);
  const Rotation pose = sample_uniform_rotation(rng, RotationSampling::kHaar);
  Sample s;
  s.target = apply_rotation(pose, clean);

  PointCloud degraded = s.target;
  if (cfg.jit_sigma_max > 0.0) {
    Eigen::Vector3d stddev(rng.uniform(0.0, cfg.jit_sigma_max),
                           rng.uniform(0.0, cfg.jit_sigma_max),
                           rng.uniform(0.0, cfg.jit_sigma_max));
    degraded = jit_noise(degraded, stddev.array().square().matrix().asDiagonal(), rng);
  }
  if (cfg.cut_min < 1.0) {
    degraded = plane_cut(degraded, rng.uniform(cfg.cut_min, 1.0), rng);
  }
  s.input = center_and_normalize(degraded);
  return s;
}

}  // namespace

DescriptorModel train_descriptor(const TrainConfig& config, TrainLog* log) {
  config.validate();
  const auto shapes = resolve_shapes(config.shapes);

  Rng init_rng(derive_seed(config.seed, 0xA0));
  DescriptorModel model = init_model(config.shape, init_rng);

  AdamW::Config oc;
  oc.lr = config.lr;
  oc.weight_decay = config.weight_decay;
  AdamW opt(oc);

  // parameter slots in layer order, weights before biases
  std::vector<Eigen::MatrixXd*> params;
  for (size_t i = 0; i < model.encoder.size(); ++i) {
    opt.add_param("enc" + std::to_string(i) + ".w", model.encoder[i].w.rows(),
                  model.encoder[i].w.cols());
    params.push_back(&model.encoder[i].w);
    opt.add_param("enc" + std::to_string(i) + ".b", 1, model.encoder[i].b.cols());
    params.push_back(&model.encoder[i].b);
  }
  for (size_t i = 0; i < model.decoder.size(); ++i) {
    opt.add_param("dec" + std::to_string(i) + ".w", model.decoder[i].w.rows(),
                  model.decoder[i].w.cols());
    params.push_back(&model.decoder[i].w);
    opt.add_param("dec" + std::to_string(i) + ".b", 1, model.decoder[i].b.cols());
    params.push_back(&model.decoder[i].b);
  }

  PlateauSchedule::Config sc;
  sc.factor = config.lr_factor;
  sc.patience_lr = config.lr_patience;
  sc.patience_stop = std::numeric_limits<int>::max();  // epoch count is the stop
  PlateauSchedule schedule(config.lr, sc);

  const int batches = config.samples_per_epoch / config.batch_size;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(config.seed, 0xE0000 + static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    for (int b = 0; b < batches; ++b) {
      // all samples of a batch share one tape and the same weight nodes, so
      // gradients accumulate in place and the backward pass runs once
      Tape tape;
      const ModelParamNodes nodes = add_model_params(tape, model);
      Tape::NodeId batch_sum = -1;
      for (int s = 0; s < config.batch_size; ++s) {
        const Sample sample = make_sample(shapes, config, epoch_rng);
        const auto input = tape.constant(sample.input);
        const auto z = tape_encode(tape, model, input, &nodes);
        const auto flat = tape_decode(tape, model, z, &nodes);
        const auto recon = tape.reshape_points(flat);
        const auto target = tape.constant(sample.target);
        const auto loss = tape.chamfer_nn(recon, target);
        batch_sum = s == 0 ? loss : tape.add(batch_sum, loss);
      }
      const double inv = 1.0 / static_cast<double>(config.batch_size);
      const auto batch_loss = tape.scale(batch_sum, inv);
      tape.backward(batch_loss);
      std::vector<const Eigen::MatrixXd*> grads;
      grads.reserve(nodes.nodes.size());
      for (const auto id : nodes.nodes) grads.push_back(&tape.grad_ref(id));
      opt.step(params, grads);
      epoch_loss += tape.value(batch_loss)(0, 0);
    }
    epoch_loss /= static_cast<double>(batches);
    if (!std::isfinite(epoch_loss)) {
      throw runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
    }
    const auto outcome = schedule.observe(epoch_loss);
    opt.set_lr(outcome.lr);
    if (log) log->epochs.push_back({epoch, epoch_loss, outcome.lr});
  }

  quantize_to_f32(model);

  if (log) {
    // held-out clean reconstruction quality
    Rng val_rng(derive_seed(config.seed, 0x7A11DA7EULL));
    double total = 0.0;
    int count = 0;
    for (const auto& src : shapes) {
      for (int rep = 0; rep < 4; ++rep) {
        const PointCloud clean = center_and_normalize(src.sample(config.points_per_cloud, val_rng));
        const PointCloud posed =
            apply_rotation(sample_uniform_rotation(val_rng, RotationSampling::kHaar), clean);
        const PointCloud recon = decode(model, encode(model, posed));
        total += chamfer(recon, posed);
        ++count;
      }
    }
    log->final_validation_chamfer = total / count;
  }
  return model;
}

}  // namespace latreg
