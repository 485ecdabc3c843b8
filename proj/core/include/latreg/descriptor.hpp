#ifndef LATREG_DESCRIPTOR_HPP
#define LATREG_DESCRIPTOR_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "latreg/autodiff.hpp"
#include "latreg/cloud.hpp"
#include "latreg/random.hpp"

namespace latreg {

// Global point-cloud descriptor: a shared per-point MLP with a column-wise
// max pool (encoder), and an MLP decoder mapping the latent back to a fixed
// number of points. No normalization layers, so the encoder is exactly
// permutation- and duplication-invariant and accepts any point count.
struct DescriptorModel {
  struct Layer {
    Eigen::MatrixXd w;  // in x out
    Eigen::MatrixXd b;  // 1 x out
  };

  std::vector<Layer> encoder;  // 3 -> ... -> latent_dim, relu after each
  std::vector<Layer> decoder;  // latent_dim -> ... -> 3*output_points,
                               // relu after all but the last
  int latent_dim = 0;
  int output_points = 0;

  void validate() const;
};

struct ModelShape {
  std::vector<int> encoder_widths = {64, 128, 256};  // hidden widths before the latent
  std::vector<int> decoder_widths = {512, 1024};     // hidden widths after the latent
  int latent_dim = 128;
  int output_points = 512;
};

// Kaiming-style uniform fan-in initialization, seeded.
DescriptorModel init_model(const ModelShape& shape, Rng& rng);

// Latent vector of a cloud; permutation-invariant, any k >= 1.
Eigen::VectorXd encode(const DescriptorModel& model, const PointCloud& x);

// Per-point encoder features before the max pool (k x latent_dim). The
// latent of any row subset is the column-wise max over those rows, which is
// what the masked losses exploit.
Eigen::MatrixXd encode_features(const DescriptorModel& model, const PointCloud& x);

// Column-wise max over a row subset of a feature matrix.
Eigen::VectorXd pool_rows(const Eigen::MatrixXd& features, const std::vector<int>& rows);
Eigen::VectorXd pool_all(const Eigen::MatrixXd& features);

// Decoded template cloud (output_points x 3).
PointCloud decode(const DescriptorModel& model, const Eigen::VectorXd& z);

// Tape graph builders. By default weights enter the tape as constants (the
// model is frozen for registration). For training, add the weights once as
// parameters and pass the node set; several samples on one tape then share
// the weight nodes and their gradients accumulate across samples.
struct ModelParamNodes {
  std::vector<Tape::NodeId> nodes;  // layer order, encoder then decoder, w before b
};

ModelParamNodes add_model_params(Tape& tape, const DescriptorModel& model);

Tape::NodeId tape_encode(Tape& tape, const DescriptorModel& model, Tape::NodeId points,
                         const ModelParamNodes* params = nullptr);
Tape::NodeId tape_decode(Tape& tape, const DescriptorModel& model, Tape::NodeId z,
                         const ModelParamNodes* params = nullptr);

// --- model file -------------------------------------------------------------
// Magic "PLRM", u16 version, u32 latent_dim, u32 output_points,
// u32 encoder layers, u32 decoder layers, then per layer: u32 rows, u32 cols,
// rows*cols f32 weights (row-major), cols f32 biases. Round-trips bit-exactly
// because in-memory weights are kept f32-representable.
void save_model(const DescriptorModel& model, const std::filesystem::path& path);
DescriptorModel load_model(const std::filesystem::path& path);

// Rounds every weight to the nearest f32; applied once after training so
// that save/load is the identity.
void quantize_to_f32(DescriptorModel& model);

// --- training ----------------------------------------------------------------

struct TrainConfig {
  ModelShape shape;
  int epochs = 120;
  int batch_size = 16;
  int samples_per_epoch = 320;
  double lr = 1e-3;              // initial learning rate
  double lr_factor = 2.0;        // plateau divisor, per epoch
  int lr_patience = 10;          // epochs without improvement
  double weight_decay = 1e-2;
  int points_per_cloud = 1024;
  // degradation policy for training samples
  double jit_sigma_max = 0.06;   // per-axis stddev ~ U(0, max)
  double cut_min = 0.7;          // visibility ~ U(cut_min, 1)
  std::vector<std::string> shapes;  // defaults to the built-in set
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainLog {
  struct Epoch {
    int epoch;
    double loss;      // mean training reconstruction loss
    double lr;
  };
  std::vector<Epoch> epochs;
  double final_validation_chamfer = 0.0;
};

// Trains the reconstruction autoencoder on degraded views of the configured
// shapes. Aborts with the epoch number if the loss turns non-finite.
DescriptorModel train_descriptor(const TrainConfig& config, TrainLog* log = nullptr);

}  // namespace latreg

#endif  // LATREG_DESCRIPTOR_HPP
