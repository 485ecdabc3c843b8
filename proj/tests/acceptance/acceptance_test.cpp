// Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
// The trained reference model and the rotation grid are built once and
// cached under LATREG_ARTIFACT_DIR so reruns skip the expensive setup.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "latreg/autodiff.hpp"
#include "latreg/cloud.hpp"
#include "latreg/degrade.hpp"
#include "latreg/descriptor.hpp"
#include "latreg/geom3d.hpp"
#include "latreg/metrics.hpp"
#include "latreg/registration.hpp"
#include "test_util.hpp"

using namespace latreg;
using testutil::random_cloud;

namespace {

namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("CRITERION %d: %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// shared artifacts

struct Artifacts {
  DescriptorModel model;
  RotationGrid grid;
  double train_seconds = -1.0;  // negative when loaded from cache
  double validation_chamfer = 0.0;

  static constexpr int kGridL = 5000;
  static constexpr int kGridK = 64;
  static constexpr std::uint64_t kTrainSeed = 1001;

  static TrainConfig train_config() {
    TrainConfig cfg;  // desk scale: latent 128, 512 output points
    cfg.epochs = 110;
    cfg.batch_size = 16;
    cfg.samples_per_epoch = 320;
    cfg.seed = kTrainSeed;
    return cfg;
  }
};

Artifacts* g_artifacts = nullptr;

class ArtifactEnvironment : public ::testing::Environment {
 public:
  void SetUp() override {
    static Artifacts artifacts;
    g_artifacts = &artifacts;
    const fs::path dir(LATREG_ARTIFACT_DIR);
    fs::create_directories(dir);

    const fs::path model_path = dir / "reference_model.plrm";
    const fs::path meta_path = dir / "reference_model.meta";
    if (fs::exists(model_path) && fs::exists(meta_path)) {
      artifacts.model = load_model(model_path);
      std::ifstream meta(meta_path);
      meta >> artifacts.validation_chamfer;
      std::printf("[setup] reference model loaded from cache (val chamfer %.4f)\n",
                  artifacts.validation_chamfer);
    } else {
      std::printf("[setup] training the reference model...\n");
      std::fflush(stdout);
      const auto t0 = Clock::now();
      TrainLog log;
      artifacts.model = train_descriptor(Artifacts::train_config(), &log);
      artifacts.train_seconds = seconds_since(t0);
      artifacts.validation_chamfer = log.final_validation_chamfer;
      save_model(artifacts.model, model_path);
      std::ofstream meta(meta_path);
      meta << artifacts.validation_chamfer << "\n" << artifacts.train_seconds << "\n";
      std::printf("[setup] trained in %.1f s; validation chamfer %.4f\n",
                  artifacts.train_seconds, artifacts.validation_chamfer);
    }

    const fs::path grid_path = dir / "grid_5000_64.so3g";
    if (fs::exists(grid_path)) {
      artifacts.grid = load_grid(grid_path);
      std::printf("[setup] rotation grid loaded from cache\n");
    } else {
      std::printf("[setup] building the rotation grid (L=%d, k=%d)...\n", Artifacts::kGridL,
                  Artifacts::kGridK);
      std::fflush(stdout);
      const auto t0 = Clock::now();
      artifacts.grid = build_rotation_grid(Artifacts::kGridL, Artifacts::kGridK);
      std::printf("[setup] grid built in %.1f s\n", seconds_since(t0));
      save_grid(artifacts.grid, grid_path);
    }
    std::fflush(stdout);
  }
};

const auto* const g_env =
    ::testing::AddGlobalTestEnvironment(new ArtifactEnvironment());

// view generation used by the registration criteria
ViewSet make_problem(const std::string& shape, int n_views, const DegradationModel& degr,
                     std::uint64_t seed) {
  Rng shape_rng(derive_seed(seed, 0x5AFE));
  const PointCloud reference = center_and_normalize(make_shape(shape, 1024, shape_rng));
  Rng rng(derive_seed(seed, 0x6E2));
  return generate_views(reference, n_views, degr, rng);
}

struct RunOutcome {
  double recall10 = 0.0;
  double recall15 = 0.0;
  double seconds = 0.0;
  RegistrationResult result;
};

RunOutcome run_problem(const ViewSet& set, const DegradationModel& declared,
                       std::uint64_t seed) {
  RegConfig cfg;
  cfg.degradation = declared;
  cfg.seed = seed;
  const auto t0 = Clock::now();
  RunOutcome out;
  out.result = run_registration(set.views, g_artifacts->model, g_artifacts->grid, cfg);
  out.seconds = seconds_since(t0);
  std::vector<Rotation> est, truth;
  for (const auto& p : out.result.poses) est.push_back(p.r);
  for (const auto& p : *set.truth) truth.push_back(p.r);
  const auto errors = pairwise_rre(est, truth);
  out.recall10 = registration_recall(errors, 10.0 * kDeg);
  out.recall15 = registration_recall(errors, 15.0 * kDeg);
  return out;
}

const char* kHeldOutShape = "helix-block";

std::string cli_path() { return LATREG_CLI_PATH; }

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Acceptance, Criterion01_GradientCorrectness) {
  const auto t0 = Clock::now();
  Rng rng(2001);
  int graphs = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    // randomized small model and a loss graph mixing the registration and
    // training paths: decode -> rotate -> translate -> encode -> latent
    // distance, plus a chamfer reconstruction branch
    ModelShape shape;
    shape.encoder_widths = {static_cast<int>(4 + rng.index(6)),
                            static_cast<int>(6 + rng.index(8))};
    shape.decoder_widths = {static_cast<int>(8 + rng.index(8))};
    shape.latent_dim = static_cast<int>(4 + rng.index(5));
    shape.output_points = static_cast<int>(6 + rng.index(10));
    Rng init(rng.bits());
    const DescriptorModel model = init_model(shape, init);
    const Rotation base = sample_uniform_rotation(rng);
    const PointCloud data = random_cloud(5 + static_cast<int>(rng.index(8)), rng);
    const Eigen::VectorXd data_latent = encode(model, data);

    Eigen::MatrixXd z0 = Eigen::MatrixXd::Random(1, shape.latent_dim) * 0.7;
    Eigen::MatrixXd w0 = Eigen::MatrixXd::Random(1, 3) * 0.2;
    Eigen::MatrixXd t0v = Eigen::MatrixXd::Random(1, 3) * 0.2;

    auto eval = [&](const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                    const Eigen::MatrixXd& t, Eigen::MatrixXd* gz, Eigen::MatrixXd* gw,
                    Eigen::MatrixXd* gt) {
      Tape tape;
      const auto zn = tape.param(z);
      const auto wn = tape.param(w);
      const auto tn = tape.param(t);
      const auto cloud = tape.reshape_points(tape_decode(tape, model, zn));
      const auto posed = tape.add_rowvec(tape.rotate_local(cloud, wn, base), tn);
      const auto latent = tape_encode(tape, model, posed);
      const auto l1 = tape.squared_l2(latent, tape.constant(data_latent.transpose()));
      const auto l2 = tape.chamfer_nn(cloud, tape.constant(data));
      const auto total = tape.add(l1, tape.scale(l2, 0.5));
      tape.backward(total);
      if (gz) *gz = tape.grad(zn);
      if (gw) *gw = tape.grad(wn);
      if (gt) *gt = tape.grad(tn);
      return tape.value(total)(0, 0);
    };

    Eigen::MatrixXd gz, gw, gt;
    eval(z0, w0, t0v, &gz, &gw, &gt);
    auto check = [&](Eigen::MatrixXd& params, const Eigen::MatrixXd& grad, int which) {
      const double h = 1e-4;
      for (Eigen::Index c = 0; c < params.cols(); ++c) {
        const double keep = params(0, c);
        params(0, c) = keep + h;
        const double fp = which == 0 ? eval(params, w0, t0v, nullptr, nullptr, nullptr)
                          : which == 1 ? eval(z0, params, t0v, nullptr, nullptr, nullptr)
                                       : eval(z0, w0, params, nullptr, nullptr, nullptr);
        params(0, c) = keep - h;
        const double fm = which == 0 ? eval(params, w0, t0v, nullptr, nullptr, nullptr)
                          : which == 1 ? eval(z0, params, t0v, nullptr, nullptr, nullptr)
                                       : eval(z0, w0, params, nullptr, nullptr, nullptr);
        params(0, c) = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = std::abs(grad(0, c) - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
      }
    };
    check(z0, gz, 0);
    check(w0, gw, 1);
    check(t0v, gt, 2);
    ++graphs;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = graphs >= 50 && worst <= 1e-4 && elapsed <= 60.0;
  report(1, pass,
         "reverse-mode vs central differences on " + std::to_string(graphs) +
             " graphs; worst rel err " + std::to_string(worst) + "; " +
             std::to_string(elapsed) + " s");
  EXPECT_GE(graphs, 50);
  EXPECT_LE(worst, 1e-4);
  EXPECT_LE(elapsed, 60.0);
}

TEST(Acceptance, Criterion02_Geometry) {
  const auto t0 = Clock::now();
  Rng rng(2002);
  double worst_roundtrip = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double angle = rng.uniform(0.0, kPi);
    const Rotation r = rotation_from_axis_angle({rng.unit_vector(), angle});
    worst_roundtrip =
        std::max(worst_roundtrip, std::abs(relative_angle(r, Rotation::identity()) - angle));
  }

  const int n = 50000;
  Eigen::Matrix3d mean = Eigen::Matrix3d::Zero();
  std::vector<double> angles(n);
  for (int i = 0; i < n; ++i) {
    const Rotation r = sample_uniform_rotation(rng, RotationSampling::kHaar);
    mean += r.matrix();
    angles[i] = relative_angle(r, Rotation::identity());
  }
  mean /= static_cast<double>(n);
  const double mean_abs = mean.cwiseAbs().maxCoeff();
  std::sort(angles.begin(), angles.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = (angles[i] - std::sin(angles[i])) / kPi;
    ks = std::max(ks, std::abs(cdf - (i + 1.0) / n));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
  }
  const double elapsed = seconds_since(t0);
  const bool pass =
      worst_roundtrip <= 1e-9 && mean_abs <= 0.02 && ks <= 0.01 && elapsed <= 60.0;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "round-trip err %.2e; |mean| %.4f; KS %.4f; %.1f s", worst_roundtrip,
                mean_abs, ks, elapsed);
  report(2, pass, detail);
  EXPECT_LE(worst_roundtrip, 1e-9);
  EXPECT_LE(mean_abs, 0.02);
  EXPECT_LE(ks, 0.01);
  EXPECT_LE(elapsed, 60.0);
}

TEST(Acceptance, Criterion03_OracleEquivalence) {
  const auto t0 = Clock::now();
  Rng rng(2003);
  int instances = 0;
  bool ok = true;

  for (int rep = 0; rep < 100; ++rep) {
    const int m = 20 + static_cast<int>(rng.index(60));
    const int n = 20 + static_cast<int>(rng.index(60));
    const PointCloud p = random_cloud(m, rng);
    const PointCloud q = random_cloud(n, rng);
    // chamfer and per-point distances against the brute-force oracles
    ok = ok && std::abs(chamfer(p, q) - testutil::brute_chamfer(p, q)) <= 1e-12;
    const auto dv = nn_distance_vector(p, q);
    for (int i = 0; i < m; ++i) {
      ok = ok && dv[i] == testutil::brute_nn_distance(p.row(i).transpose(), q);
    }
    const double r = rng.uniform(0.05, 0.7);
    ok = ok && density_stddev(p, r) == testutil::brute_density_stddev(p, r);
    // medoid against the O(N^2) scan
    Eigen::MatrixXd latents(8 + rng.index(8), 6);
    for (Eigen::Index i = 0; i < latents.rows(); ++i)
      for (Eigen::Index j = 0; j < latents.cols(); ++j) latents(i, j) = rng.uniform(-1, 1);
    int best = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < latents.rows(); ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < latents.rows(); ++j) {
        sum += (latents.row(i) - latents.row(j)).norm();
      }
      if (sum < best_sum) {
        best_sum = sum;
        best = static_cast<int>(i);
      }
    }
    ok = ok && init_medoid(latents) == best;
    ++instances;
  }

  // grid adjacency on sampled nodes
  const RotationGrid& grid = g_artifacts->grid;
  for (int rep = 0; rep < 40; ++rep) {
    const int i = static_cast<int>(rng.index(grid.size()));
    std::vector<std::pair<double, int>> cand;
    cand.reserve(grid.size() - 1);
    for (int j = 0; j < grid.size(); ++j) {
      if (j == i) continue;
      cand.emplace_back(relative_angle(grid.rotations[i], grid.rotations[j]), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + grid.k, cand.end());
    for (int k = 0; k < grid.k; ++k) {
      ok = ok && grid.neighbors(i)[k] == static_cast<std::uint32_t>(cand[k].second);
    }
    ++instances;
  }

  const double elapsed = seconds_since(t0);
  const bool pass = ok && instances >= 100 && elapsed <= 120.0;
  report(3, pass,
         std::to_string(instances) + " randomized instances, exact agreement; " +
             std::to_string(elapsed) + " s");
  EXPECT_TRUE(ok);
  EXPECT_LE(elapsed, 120.0);
}

TEST(Acceptance, Criterion04_MaskContracts) {
  const auto t0 = Clock::now();
  Rng rng(2004);
  bool ok = true;
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 50 + static_cast<int>(rng.index(300));
    const double v = rng.uniform(0.05, 1.0);
    const PointCloud t = random_cloud(k, rng);
    const PointCloud d = random_cloud(60, rng);
    const int removed = k - static_cast<int>(mask_occlusion(t, d, v).rows());
    ok = ok && removed == static_cast<int>(std::floor((1.0 - v) * k + 1e-9));

    const int n_out = 1 + static_cast<int>(rng.index(8));
    const PointCloud temp = random_cloud(k, rng);
    PointCloud data(k + n_out, 3);
    data.topRows(k) = temp;
    for (int i = 0; i < n_out; ++i) {
      data.row(k + i) = (rng.unit_vector() * (15.0 + 2.0 * i)).transpose();
    }
    const double o = static_cast<double>(n_out) / (k + n_out);
    const PointCloud masked = mask_outliers(data, temp, o);
    ok = ok && masked.rows() == k && (masked - temp).norm() == 0.0;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = ok && elapsed <= 60.0;
  report(4, pass, "100 randomized (v, o) instances; " + std::to_string(elapsed) + " s");
  EXPECT_TRUE(ok);
  EXPECT_LE(elapsed, 60.0);
}

TEST(Acceptance, Criterion05_CleanMultiviewRegistration) {
  // training-budget part of the criterion
  if (g_artifacts->train_seconds >= 0.0) {
    EXPECT_LE(g_artifacts->train_seconds, 900.0)
        << "reference training exceeded the 15 min budget";
  }
  bool pass = true;
  std::string detail;
  for (const std::uint64_t seed : {101ULL, 202ULL, 303ULL}) {
    const ViewSet set = make_problem(kHeldOutShape, 20, DegradationModel::none(), seed);
    const RunOutcome out = run_problem(set, DegradationModel::none(), seed);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "[seed %llu: RR@10 %.3f in %.0f s] ",
                  static_cast<unsigned long long>(seed), out.recall10, out.seconds);
    detail += buf;
    pass = pass && out.recall10 >= 0.95 && out.seconds <= 600.0;
    EXPECT_GE(out.recall10, 0.95) << "seed " << seed;
    EXPECT_LE(out.seconds, 600.0) << "seed " << seed;
  }
  report(5, pass, detail);
}

TEST(Acceptance, Criterion06_DegradationRobustness) {
  bool pass = true;
  std::string detail;
  struct Setting {
    const char* name;
    DegradationModel degr;
    double floor;
  };
  const std::vector<Setting> settings = {
      {"noise 0.05", DegradationModel::from_stddevs({0.05, 0.05, 0.05}, 1.0, 0.0), 0.8},
      {"visibility 0.8", DegradationModel::from_stddevs({0, 0, 0}, 0.8, 0.0), 0.8},
      {"outliers 0.2", DegradationModel::from_stddevs({0, 0, 0}, 1.0, 0.2), 0.8},
      {"combined", DegradationModel::from_stddevs({0.02, 0.02, 0.02}, 0.8, 0.2), 0.7},
  };
  for (const auto& setting : settings) {
    const std::uint64_t seed = 404;
    const ViewSet set = make_problem(kHeldOutShape, 20, setting.degr, seed);
    const RunOutcome out = run_problem(set, setting.degr, seed);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "[%s: RR@15 %.3f (floor %.2f) in %.0f s] ", setting.name,
                  out.recall15, setting.floor, out.seconds);
    detail += buf;
    pass = pass && out.recall15 >= setting.floor;
    EXPECT_GE(out.recall15, setting.floor) << setting.name;
  }
  report(6, pass, detail);
}

TEST(Acceptance, Criterion07_AblationDirection) {
  const DegradationModel true_degr = DegradationModel::from_stddevs({0, 0, 0}, 1.0, 0.2);
  const DegradationModel plain = DegradationModel::none();  // declared clean
  double aware_sum = 0.0, plain_sum = 0.0;
  std::string detail;
  for (const std::uint64_t seed : {505ULL, 606ULL, 707ULL}) {
    const ViewSet set = make_problem(kHeldOutShape, 20, true_degr, seed);
    const RunOutcome aware = run_problem(set, true_degr, seed);
    const RunOutcome basic = run_problem(set, plain, seed);
    aware_sum += aware.recall15;
    plain_sum += basic.recall15;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "[seed %llu: aware %.3f vs plain %.3f] ",
                  static_cast<unsigned long long>(seed), aware.recall15, basic.recall15);
    detail += buf;
  }
  const bool pass = aware_sum / 3.0 > plain_sum / 3.0;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "mean aware %.3f > mean plain %.3f", aware_sum / 3.0,
                plain_sum / 3.0);
  report(7, pass, detail + buf);
  EXPECT_GT(aware_sum / 3.0, plain_sum / 3.0);
}

namespace {

// Near two-fold symmetric construction: a hub with two long opposite arms of
// slightly different radius along x, plus a small z stub breaking exactness.
PointCloud near_symmetric_shape(int k, Rng& rng) {
  PointCloud cloud(k, 3);
  for (int i = 0; i < k; ++i) {
    const double pick = rng.uniform();
    Eigen::Vector3d p;
    if (pick < 0.42) {  // +x arm
      const double t = rng.uniform(0.0, 0.95);
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      p << t, 0.10 * std::cos(phi), 0.10 * std::sin(phi);
    } else if (pick < 0.84) {  // -x arm, slightly thicker
      const double t = rng.uniform(0.0, 0.95);
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      p << -t, 0.12 * std::cos(phi), 0.12 * std::sin(phi);
    } else if (pick < 0.94) {  // hub
      p = 0.16 * rng.unit_vector();
    } else {  // small stub along +z (the symmetry breaker)
      const double t = rng.uniform(0.0, 0.3);
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      p << 0.05 * std::cos(phi), 0.05 * std::sin(phi), 0.16 + t;
    }
    cloud.row(i) = p.transpose();
  }
  return cloud;
}

}  // namespace

TEST(Acceptance, Criterion08_TwoFoldMinimaDetection) {
  Rng shape_rng(2008);
  const PointCloud shape = center_and_normalize(near_symmetric_shape(1024, shape_rng));
  Rng rng(2009);
  const ViewSet set = generate_views(shape, 4, DegradationModel::none(), rng);

  RegConfig cfg;
  cfg.seed = 808;
  RegistrationPipeline pipeline(set.views, g_artifacts->model, &g_artifacts->grid, cfg);
  pipeline.initialize();
  const auto minima = pipeline.grid_minima(8, 1);

  int views_with_pair = 0;
  double example_angle = 0.0;
  for (const auto& per_view : minima) {
    bool found = false;
    for (size_t a = 0; a < per_view.size() && !found; ++a) {
      for (size_t b = a + 1; b < per_view.size() && !found; ++b) {
        const double angle =
            relative_angle(g_artifacts->grid.rotations[per_view[a].rotation_index],
                           g_artifacts->grid.rotations[per_view[b].rotation_index]);
        if (angle >= 170.0 * kDeg) {
          found = true;
          example_angle = angle;
        }
      }
    }
    if (found) ++views_with_pair;
  }
  const bool pass = views_with_pair >= 1;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d/4 views show minima pairs 180 deg apart (example %.1f deg)",
                views_with_pair, example_angle / kDeg);
  report(8, pass, buf);
  EXPECT_GE(views_with_pair, 1);
}

TEST(Acceptance, Criterion09_LinearScalingInViews) {
  std::vector<double> ns = {10, 20, 40};
  std::vector<double> times;
  std::string detail;
  for (double n : ns) {
    const ViewSet set =
        make_problem(kHeldOutShape, static_cast<int>(n), DegradationModel::none(), 909);
    const RunOutcome out = run_problem(set, DegradationModel::none(), 909);
    times.push_back(out.seconds);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "[N=%d: %.1f s] ", static_cast<int>(n), out.seconds);
    detail += buf;
  }
  // least-squares affine fit t = a + b n and its R^2
  const double n_mean = std::accumulate(ns.begin(), ns.end(), 0.0) / ns.size();
  const double t_mean = std::accumulate(times.begin(), times.end(), 0.0) / times.size();
  double sxy = 0.0, sxx = 0.0, sst = 0.0;
  for (size_t i = 0; i < ns.size(); ++i) {
    sxy += (ns[i] - n_mean) * (times[i] - t_mean);
    sxx += (ns[i] - n_mean) * (ns[i] - n_mean);
    sst += (times[i] - t_mean) * (times[i] - t_mean);
  }
  const double slope = sxy / sxx;
  double ssr = 0.0;
  for (size_t i = 0; i < ns.size(); ++i) {
    const double fit = t_mean + slope * (ns[i] - n_mean);
    ssr += (times[i] - fit) * (times[i] - fit);
  }
  const double r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
  const bool pass = r2 >= 0.9;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "linear fit R^2 = %.4f (slope %.2f s/view)", r2, slope);
  report(9, pass, detail + buf);
  EXPECT_GE(r2, 0.9);
}

TEST(Acceptance, Criterion10_CliDeterminism) {
  const fs::path base = fs::temp_directory_path() / "latreg_acceptance_cli";
  fs::remove_all(base);
  fs::create_directories(base);
  bool pass = true;
  std::string detail;

  // grid build
  {
    const auto d1 = base / "grid1";
    const auto d2 = base / "grid2";
    fs::create_directories(d1);
    fs::create_directories(d2);
    pass = pass && run_cli("grid build --L 400 --k 8 --out " + (d1 / "g.so3g").string()) == 0;
    pass = pass &&
           run_cli("grid build --config " + (d1 / "effective_config.json").string() +
                   " --out " + (d2 / "g.so3g").string()) == 0;
    pass = pass && slurp(d1 / "g.so3g") == slurp(d2 / "g.so3g");
    detail += std::string("[grid ") + (pass ? "ok] " : "MISMATCH] ");
  }
  // genviews
  {
    const auto d1 = base / "gen1";
    const auto d2 = base / "gen2";
    pass = pass && run_cli("genviews --shape asym-lamp --n 4 --k 256 --sigma 0.02,0.02,0.05 "
                           "--v 0.9 --o 0.1 --seed 42 --out " + d1.string()) == 0;
    pass = pass && run_cli("genviews --config " + (d1 / "effective_config.json").string() +
                           " --out " + d2.string()) == 0;
    for (const char* f : {"view_0000.pcd3", "view_0003.pcd3", "truth.json", "meta.json"}) {
      pass = pass && slurp(d1 / f) == slurp(d2 / f);
    }
    detail += std::string("[genviews ") + (pass ? "ok] " : "MISMATCH] ");
  }
  // train (tiny model)
  {
    const auto d1 = base / "train1";
    const auto d2 = base / "train2";
    fs::create_directories(d1);
    fs::create_directories(d2);
    std::ofstream cfg(base / "train.json");
    cfg << R"({"epochs": 2, "seed": 5, "batch_size": 4, "samples_per_epoch": 8,
               "points_per_cloud": 96, "latent_dim": 12, "output_points": 40,
               "encoder_widths": [16, 32], "decoder_widths": [48]})";
    cfg.close();
    pass = pass && run_cli("train --config " + (base / "train.json").string() + " --out " +
                           (d1 / "m.plrm").string()) == 0;
    pass = pass && run_cli("train --config " + (d1 / "effective_config.json").string() +
                           " --out " + (d2 / "m.plrm").string()) == 0;
    pass = pass && slurp(d1 / "m.plrm") == slurp(d2 / "m.plrm");
    pass = pass && slurp(d1 / "train_log.csv") == slurp(d2 / "train_log.csv");
    detail += std::string("[train ") + (pass ? "ok] " : "MISMATCH] ");
  }
  // register + eval on a small problem with the tiny artifacts
  {
    const auto views = base / "views";
    pass = pass && run_cli("genviews --shape three-prong --n 4 --k 200 --seed 77 --out " +
                           views.string()) == 0;
    const auto r1 = base / "reg1";
    const auto r2 = base / "reg2";
    std::ofstream cfg(base / "reg.json");
    cfg << R"({"M": 2, "max_steps": 80, "max_rounds": 2, "seed": 7})";
    cfg.close();
    const std::string model = (base / "train1" / "m.plrm").string();
    const std::string grid = (base / "grid1" / "g.so3g").string();
    pass = pass && run_cli("register --views " + views.string() + " --model " + model +
                           " --grid " + grid + " --config " + (base / "reg.json").string() +
                           " --out " + r1.string()) == 0;
    pass = pass && run_cli("register --views " + views.string() + " --model " + model +
                           " --grid " + grid + " --config " +
                           (r1 / "effective_config.json").string() + " --out " +
                           r2.string()) == 0;
    for (const char* f : {"result.json", "template.pcd3", "errors.csv", "cdf.csv",
                          "summary.json"}) {
      pass = pass && slurp(r1 / f) == slurp(r2 / f);
    }
    detail += std::string("[register ") + (pass ? "ok] " : "MISMATCH] ");

    const auto e1 = base / "eval1";
    const auto e2 = base / "eval2";
    pass = pass && run_cli("eval --est " + (r1 / "result.json").string() + " --truth " +
                           (views / "truth.json").string() + " --thresholds 10,15,30 --out " +
                           e1.string()) == 0;
    pass = pass && run_cli("eval --est " + (r1 / "result.json").string() + " --truth " +
                           (views / "truth.json").string() + " --config " +
                           (e1 / "effective_config.json").string() + " --out " +
                           e2.string()) == 0;
    pass = pass && slurp(e1 / "summary.json") == slurp(e2 / "summary.json");
    pass = pass && slurp(e1 / "errors.csv") == slurp(e2 / "errors.csv");
    detail += std::string("[eval ") + (pass ? "ok] " : "MISMATCH] ");
  }
  report(10, pass, detail);
  EXPECT_TRUE(pass);
}

// Derived example from the operation contracts, run on the trained model:
// a pose started 5 degrees from the truth refines to under 1 degree.
TEST(Acceptance, TrainedModelJointRefinement) {
  const ViewSet set = make_problem(kHeldOutShape, 2, DegradationModel::none(), 111);
  RegConfig cfg;
  cfg.seed = 19;
  RegistrationPipeline pipeline(set.views, g_artifacts->model, &g_artifacts->grid, cfg);
  auto& state = pipeline.mutable_state();

  // normalized frame: rotations are unchanged by joint normalization
  const auto& normalized = pipeline.normalized_views();
  state.z = encode(g_artifacts->model, normalized[0]);
  const Rotation truth0 = (*set.truth)[0].r;
  const Rotation truth1 = (*set.truth)[1].r;
  state.poses = {
      {truth0 * rotation_from_axis_angle({{0, 0, 1}, 5.0 * kDeg}), Eigen::Vector3d::Zero()},
      {truth1, Eigen::Vector3d::Zero()}};
  state.losses = {pipeline.sync_loss(0, 0), pipeline.sync_loss(1, 0)};
  pipeline.joint_descent(1);
  // compare relative rotations (the template pose is a free gauge)
  const double after = relative_angle(
      pipeline.state().poses[0].r * pipeline.state().poses[1].r.transpose(),
      truth0 * truth1.transpose());
  std::printf("[example] 5 deg perturbation refined to %.3f deg\n", after / kDeg);
  EXPECT_LT(after, 1.0 * kDeg);
}

// Validation floor for the trained reference model, frozen after the first
// successful desk-scale run.
TEST(Acceptance, TrainedModelReconstructionQuality) {
  EXPECT_LE(g_artifacts->validation_chamfer, 0.15);
  std::printf("[example] validation chamfer %.4f (threshold 0.15)\n",
              g_artifacts->validation_chamfer);
}
