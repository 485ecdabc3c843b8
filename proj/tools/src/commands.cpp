#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "latreg/degrade.hpp"
#include "latreg/descriptor.hpp"
#include "latreg/error.hpp"
#include "latreg/metrics.hpp"
#include "latreg/parallel.hpp"
#include "latreg/registration.hpp"

namespace latreg::cli {

namespace {

namespace fs = std::filesystem;

Json resolve(const Json& defaults, const std::string& config_path, const Json& flags,
             const std::string& where) {
  Json merged = defaults;
  if (!config_path.empty()) {
    merged = merge_config(merged, load_config_file(config_path), where);
  }
  return merge_config(merged, flags, where);
}

int resolve_threads(int threads) {
  return threads <= 0 ? default_thread_count() : threads;
}

DegradationModel degradation_from(const Json& cfg) {
  const auto s = parse_triple(cfg.at("sigma").get<std::string>(), "sigma");
  Eigen::Vector3d stddev(s[0], s[1], s[2]);
  if (cfg.at("sigma_is_variance").get<bool>()) {
    if ((stddev.array() < 0.0).any()) throw config_error("sigma: variances must be >= 0");
    stddev = stddev.array().sqrt();
  }
  return DegradationModel::from_stddevs(stddev, cfg.at("v").get<double>(),
                                        cfg.at("o").get<double>());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw data_error(path.string() + ": write failed");
}

std::string format_angle_deg(double radians) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", radians * 180.0 / std::numbers::pi);
  return buf;
}

std::vector<Rotation> rotations_from_pose_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path.string() + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path.string() + ": " + e.what());
  }
  if (!j.contains("poses") || !j.at("poses").is_array()) {
    throw data_error(path.string() + ": no 'poses' array");
  }
  std::vector<Rotation> rotations;
  for (const auto& p : j.at("poses")) {
    const auto rot = p.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw data_error(path.string() + ": rotation must have 9 entries");
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = rot[3 * r + c];
    rotations.push_back(Rotation::project(m));
  }
  if (rotations.empty()) throw data_error(path.string() + ": empty pose list");
  return rotations;
}

void write_metric_files(const PairwiseErrors& errors, const std::vector<double>& thresholds_deg,
                        const fs::path& out_dir) {
  std::string csv = "i,j,theta_deg\n";
  for (const auto& e : errors.entries) {
    csv += std::to_string(e.i) + "," + std::to_string(e.j) + "," + format_angle_deg(e.theta) + "\n";
  }
  write_text(out_dir / "errors.csv", csv);

  const auto cdf = recall_cdf(errors);
  std::string cdf_csv = "theta_deg,fraction\n";
  for (const auto& [theta, fraction] : cdf) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", fraction);
    cdf_csv += format_angle_deg(theta) + std::string(",") + buf + "\n";
  }
  write_text(out_dir / "cdf.csv", cdf_csv);

  Json summary;
  summary["n_pairs"] = errors.size();
  summary["thresholds_deg"] = thresholds_deg;
  Json recall = Json::object();
  for (double t : thresholds_deg) {
    char key[32];
    std::snprintf(key, sizeof(key), "%g", t);
    recall[key] = registration_recall(errors, t * std::numbers::pi / 180.0);
  }
  summary["recall"] = recall;
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

PointCloud resolve_shape(const std::string& shape, int k, Rng& rng) {
  const auto& builtins = builtin_shape_names();
  if (std::find(builtins.begin(), builtins.end(), shape) != builtins.end()) {
    return center_and_normalize(make_shape(shape, k, rng));
  }
  if (!fs::exists(shape)) {
    throw data_error("genviews: '" + shape + "' is neither a built-in shape nor a file");
  }
  PointCloud cloud = load_cloud(shape);
  if (cloud.rows() > k) {
    PointCloud sub(k, 3);
    for (int i = 0; i < k; ++i) {
      sub.row(i) = cloud.row(static_cast<Eigen::Index>(rng.index(cloud.rows())));
    }
    cloud = sub;
  }
  return center_and_normalize(cloud);
}

}  // namespace

int cmd_grid_build(const Json& flags, const std::string& config_path, const std::string& out,
                   bool force) {
  Json defaults;
  defaults["L"] = nullptr;
  defaults["k"] = nullptr;
  defaults["threads"] = 0;
  const Json cfg = resolve(defaults, config_path, flags, "grid build");
  require_key(cfg, "L", "grid build");
  require_key(cfg, "k", "grid build");
  const int l_count = cfg.at("L").get<int>();
  const int k = cfg.at("k").get<int>();
  if (l_count <= k || k < 1) {
    throw config_error("grid build: need L > k >= 1, got L=" + std::to_string(l_count) +
                       " k=" + std::to_string(k));
  }
  const fs::path out_path(out);
  if (fs::exists(out_path) && !force) {
    throw config_error("grid build: '" + out + "' exists; pass --force to overwrite");
  }
  const auto grid = build_rotation_grid(l_count, k, resolve_threads(cfg.at("threads").get<int>()));
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_grid(grid, out_path);
  echo_config(cfg, "grid build",
              out_path.has_parent_path() ? out_path.parent_path() : fs::path("."));
  std::cout << "grid: L=" << l_count << " k=" << k << " -> " << out << "\n";
  return 0;
}

int cmd_train(const Json& flags, const std::string& config_path, const std::string& out) {
  Json defaults;
  defaults["epochs"] = nullptr;
  defaults["seed"] = nullptr;
  defaults["batch_size"] = 16;
  defaults["samples_per_epoch"] = 320;
  defaults["lr"] = 1e-3;
  defaults["lr_factor"] = 2.0;
  defaults["lr_patience"] = 10;
  defaults["weight_decay"] = 1e-2;
  defaults["points_per_cloud"] = 1024;
  defaults["jit_sigma_max"] = 0.06;
  defaults["cut_min"] = 0.7;
  defaults["shapes"] = builtin_shape_names();
  defaults["latent_dim"] = 128;
  defaults["output_points"] = 512;
  defaults["encoder_widths"] = std::vector<int>{64, 128, 256};
  defaults["decoder_widths"] = std::vector<int>{512, 1024};
  const Json cfg = resolve(defaults, config_path, flags, "train");
  require_key(cfg, "epochs", "train");
  require_key(cfg, "seed", "train");

  TrainConfig tc;
  tc.epochs = cfg.at("epochs").get<int>();
  tc.seed = cfg.at("seed").get<std::uint64_t>();
  tc.batch_size = cfg.at("batch_size").get<int>();
  tc.samples_per_epoch = cfg.at("samples_per_epoch").get<int>();
  tc.lr = cfg.at("lr").get<double>();
  tc.lr_factor = cfg.at("lr_factor").get<double>();
  tc.lr_patience = cfg.at("lr_patience").get<int>();
  tc.weight_decay = cfg.at("weight_decay").get<double>();
  tc.points_per_cloud = cfg.at("points_per_cloud").get<int>();
  tc.jit_sigma_max = cfg.at("jit_sigma_max").get<double>();
  tc.cut_min = cfg.at("cut_min").get<double>();
  tc.shapes = cfg.at("shapes").get<std::vector<std::string>>();
  tc.shape.latent_dim = cfg.at("latent_dim").get<int>();
  tc.shape.output_points = cfg.at("output_points").get<int>();
  tc.shape.encoder_widths = cfg.at("encoder_widths").get<std::vector<int>>();
  tc.shape.decoder_widths = cfg.at("decoder_widths").get<std::vector<int>>();

  TrainLog log;
  const auto t0 = std::chrono::steady_clock::now();
  const DescriptorModel model = train_descriptor(tc, &log);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path out_path(out);
  const fs::path out_dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  fs::create_directories(out_dir);
  save_model(model, out_path);

  std::string csv = "epoch,loss,lr\n";
  for (const auto& e : log.epochs) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.loss, e.lr);
    csv += buf;
  }
  write_text(out_dir / "train_log.csv", csv);
  echo_config(cfg, "train", out_dir);
  std::cout << "trained " << tc.epochs << " epochs in " << seconds
            << " s; final loss " << (log.epochs.empty() ? 0.0 : log.epochs.back().loss)
            << "; validation chamfer " << log.final_validation_chamfer << "\n";
  return 0;
}

int cmd_genviews(const Json& flags, const std::string& config_path, const std::string& out) {
  Json defaults;
  defaults["shape"] = nullptr;
  defaults["n"] = nullptr;
  defaults["seed"] = nullptr;
  defaults["k"] = 1024;
  defaults["sigma"] = "0,0,0";
  defaults["sigma_is_variance"] = false;
  defaults["v"] = 1.0;
  defaults["o"] = 0.0;
  defaults["translation_halfwidth"] = 0.25;
  defaults["rotation_mode"] = "haar";
  const Json cfg = resolve(defaults, config_path, flags, "genviews");
  require_key(cfg, "shape", "genviews");
  require_key(cfg, "n", "genviews");
  require_key(cfg, "seed", "genviews");

  const auto shape = cfg.at("shape").get<std::string>();
  const int n = cfg.at("n").get<int>();
  const int k = cfg.at("k").get<int>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const DegradationModel degr = degradation_from(cfg);
  GenerateOptions options;
  options.translation_halfwidth = cfg.at("translation_halfwidth").get<double>();
  const auto mode = cfg.at("rotation_mode").get<std::string>();
  if (mode == "haar") {
    options.rotation_mode = RotationSampling::kHaar;
  } else if (mode == "uniform-angle") {
    options.rotation_mode = RotationSampling::kUniformAngle;
  } else {
    throw config_error("genviews: rotation_mode must be 'haar' or 'uniform-angle'");
  }

  Rng rng(derive_seed(seed, 0x9E1));
  const PointCloud reference = resolve_shape(shape, k, rng);
  Rng gen_rng(derive_seed(seed, 0x9E2));
  const ViewSet set = generate_views(reference, n, degr, gen_rng, options);

  const fs::path out_dir(out);
  save_viewset(set, out_dir);
  Json meta;
  meta["shape"] = shape;
  meta["n"] = n;
  meta["k"] = k;
  meta["sigma"] = cfg.at("sigma");
  meta["sigma_is_variance"] = cfg.at("sigma_is_variance");
  meta["v"] = degr.visibility;
  meta["o"] = degr.outlier_ratio;
  meta["seed"] = seed;
  write_text(out_dir / "meta.json", meta.dump(2) + "\n");
  echo_config(cfg, "genviews", out_dir);
  std::cout << "wrote " << n << " views of '" << shape << "' to " << out << "\n";
  return 0;
}

int cmd_register(const Json& flags, const std::string& config_path,
                 const std::string& views_dir, const std::string& model_path,
                 const std::string& grid_path, const std::string& out) {
  Json defaults;
  defaults["M"] = 4;
  defaults["T_R_deg"] = 15.0;
  defaults["lambda"] = 1e-2;
  defaults["density_radius"] = 0.1;
  defaults["lr"] = 1e-2;
  defaults["lr_factor"] = 10.0;
  defaults["patience_lr"] = 10;
  defaults["patience_stop"] = 100;
  defaults["max_steps"] = 2000;
  defaults["max_rounds"] = 20;
  defaults["weight_decay"] = 1e-2;
  defaults["sigma"] = "0,0,0";
  defaults["sigma_is_variance"] = false;
  defaults["v"] = 1.0;
  defaults["o"] = 0.0;
  defaults["seed"] = 0;
  defaults["threads"] = 0;
  defaults["grid_search_per_view"] = false;
  defaults["thresholds_deg"] = std::vector<double>{10.0, 15.0, 30.0};
  const Json cfg = resolve(defaults, config_path, flags, "register");

  if (!fs::exists(views_dir)) throw data_error("register: views directory not found: " + views_dir);
  if (!fs::exists(model_path)) throw model_error("register: model file not found: " + model_path);
  if (!fs::exists(grid_path)) throw data_error("register: grid file not found: " + grid_path);

  const ViewSet set = load_viewset(views_dir);
  const DescriptorModel model = load_model(model_path);
  const RotationGrid grid = load_grid(grid_path);

  RegConfig rc;
  rc.multistart_width = cfg.at("M").get<int>();
  rc.escape_angle_deg = cfg.at("T_R_deg").get<double>();
  rc.lambda = cfg.at("lambda").get<double>();
  rc.density_radius = cfg.at("density_radius").get<double>();
  rc.lr = cfg.at("lr").get<double>();
  rc.lr_factor = cfg.at("lr_factor").get<double>();
  rc.patience_lr = cfg.at("patience_lr").get<int>();
  rc.patience_stop = cfg.at("patience_stop").get<int>();
  rc.max_steps = cfg.at("max_steps").get<int>();
  rc.max_rounds = cfg.at("max_rounds").get<int>();
  rc.weight_decay = cfg.at("weight_decay").get<double>();
  rc.degradation = degradation_from(cfg);
  rc.seed = cfg.at("seed").get<std::uint64_t>();
  rc.threads = resolve_threads(cfg.at("threads").get<int>());
  rc.grid_search_per_view = cfg.at("grid_search_per_view").get<bool>();

  const RegistrationResult result = run_registration(set.views, model, grid, rc);

  const fs::path out_dir(out);
  fs::create_directories(out_dir);

  Json rj;
  rj["poses"] = Json::array();
  for (const auto& pose : result.poses) {
    Json p;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[3 * r + c] = pose.r.matrix()(r, c);
    p["rotation"] = rot;
    p["translation"] = {pose.t.x(), pose.t.y(), pose.t.z()};
    rj["poses"].push_back(p);
  }
  rj["losses"] = result.report.final_losses;
  rj["total_loss"] = result.report.final_total_loss;
  rj["rounds"] = result.report.rounds;
  rj["escapes"] = result.report.escapes_per_round;
  rj["converged"] = result.report.converged;
  rj["hit_round_cap"] = result.report.hit_round_cap;
  rj["mask_evals"] = result.report.mask_evals;
  rj["mask_noops"] = result.report.mask_noops;
  Json norm;
  norm["scale"] = result.report.normalization_scale;
  norm["centroids"] = Json::array();
  for (const auto& c : result.report.centroids) norm["centroids"].push_back({c.x(), c.y(), c.z()});
  rj["normalization"] = norm;
  write_text(out_dir / "result.json", rj.dump(2) + "\n");

  save_cloud_pcd3(decode(model, result.z), out_dir / "template.pcd3");

  if (set.truth) {
    std::vector<Rotation> est, truth;
    for (const auto& p : result.poses) est.push_back(p.r);
    for (const auto& p : *set.truth) truth.push_back(p.r);
    const auto errors = pairwise_rre(est, truth);
    write_metric_files(errors, cfg.at("thresholds_deg").get<std::vector<double>>(), out_dir);
  }
  echo_config(cfg, "register", out_dir);
  std::cout << "registered " << set.size() << " views in " << result.report.wall_time_sec
            << " s; rounds=" << result.report.rounds
            << " converged=" << (result.report.converged ? "yes" : "no") << "\n";
  return 0;
}

int cmd_eval(const Json& flags, const std::string& config_path, const std::string& est_path,
             const std::string& truth_path, const std::string& out) {
  Json defaults;
  defaults["thresholds_deg"] = std::vector<double>{10.0, 15.0, 30.0};
  const Json cfg = resolve(defaults, config_path, flags, "eval");

  const auto est = rotations_from_pose_file(est_path);
  const auto truth = rotations_from_pose_file(truth_path);
  if (est.size() != truth.size()) {
    throw data_error("eval: estimate has " + std::to_string(est.size()) +
                     " poses but truth has " + std::to_string(truth.size()));
  }
  const auto errors = pairwise_rre(est, truth);
  const fs::path out_dir(out.empty() ? "." : out);
  fs::create_directories(out_dir);
  write_metric_files(errors, cfg.at("thresholds_deg").get<std::vector<double>>(), out_dir);
  echo_config(cfg, "eval", out_dir);
  const double rr10 = registration_recall(errors, 10.0 * std::numbers::pi / 180.0);
  std::cout << "pairs=" << errors.size() << " RR@10=" << rr10 << "\n";
  return 0;
}

}  // namespace latreg::cli
