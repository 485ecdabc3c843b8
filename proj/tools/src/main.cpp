#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "latreg/error.hpp"
#include "latreg/parallel.hpp"
#include "commands.hpp"

namespace {

using latreg::cli::Json;

// Collects only the flags the user actually passed, so they can override a
// config file without clobbering its other values.
template <typename T>
void put_if(CLI::Option* opt, Json& flags, const std::string& key, const T& value) {
  if (opt->count() > 0) flags[key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  latreg::tune_allocator();
  CLI::App app{"multiview point-cloud rigid registration in a learned latent space"};
  app.require_subcommand(1);

  // grid build
  auto* grid = app.add_subcommand("grid", "rotation grid utilities");
  grid->require_subcommand(1);
  auto* gbuild = grid->add_subcommand("build", "build and cache a rotation grid");
  int g_l = 0, g_k = 0, g_threads = 0;
  std::string g_out, g_config;
  bool g_force = false;
  auto* g_l_opt = gbuild->add_option("--L", g_l, "number of rotations");
  auto* g_k_opt = gbuild->add_option("--k", g_k, "graph neighbors per rotation");
  auto* g_t_opt = gbuild->add_option("--threads", g_threads, "worker threads (0 = auto)");
  gbuild->add_option("--out", g_out, "output grid file")->required();
  gbuild->add_option("--config", g_config, "JSON config file");
  gbuild->add_flag("--force", g_force, "overwrite an existing grid file");

  // train
  auto* train = app.add_subcommand("train", "train the descriptor autoencoder");
  std::string t_config, t_out;
  int t_epochs = 0;
  std::uint64_t t_seed = 0;
  train->add_option("--config", t_config, "JSON config file");
  train->add_option("--out", t_out, "output model file")->required();
  auto* t_epochs_opt = train->add_option("--epochs", t_epochs, "training epochs");
  auto* t_seed_opt = train->add_option("--seed", t_seed, "training seed");

  // genviews
  auto* gen = app.add_subcommand("genviews", "generate degraded views of a shape");
  std::string v_shape, v_sigma, v_out, v_config;
  int v_n = 0, v_k = 0;
  double v_v = 1.0, v_o = 0.0;
  std::uint64_t v_seed = 0;
  auto* v_shape_opt = gen->add_option("--shape", v_shape, "built-in shape name or cloud file");
  auto* v_n_opt = gen->add_option("--n", v_n, "number of views");
  auto* v_k_opt = gen->add_option("--k", v_k, "points per reference cloud");
  auto* v_sigma_opt = gen->add_option("--sigma", v_sigma, "per-axis noise stddevs a,b,c");
  auto* v_v_opt = gen->add_option("--v", v_v, "visibility ratio in (0,1]");
  auto* v_o_opt = gen->add_option("--o", v_o, "outlier ratio in [0,1)");
  auto* v_seed_opt = gen->add_option("--seed", v_seed, "generation seed");
  gen->add_option("--out", v_out, "output directory")->required();
  gen->add_option("--config", v_config, "JSON config file");

  // register
  auto* reg = app.add_subcommand("register", "register a view set");
  std::string r_views, r_model, r_grid, r_config, r_out, r_sigma;
  double r_v = 1.0, r_o = 0.0;
  std::uint64_t r_seed = 0;
  int r_threads = 0;
  reg->add_option("--views", r_views, "view-set directory")->required();
  reg->add_option("--model", r_model, "descriptor model file")->required();
  reg->add_option("--grid", r_grid, "rotation grid file")->required();
  reg->add_option("--config", r_config, "JSON config file");
  reg->add_option("--out", r_out, "output directory")->required();
  auto* r_sigma_opt = reg->add_option("--sigma", r_sigma, "known noise stddevs a,b,c");
  auto* r_v_opt = reg->add_option("--v", r_v, "known visibility ratio");
  auto* r_o_opt = reg->add_option("--o", r_o, "known outlier ratio");
  auto* r_seed_opt = reg->add_option("--seed", r_seed, "optimization seed");
  auto* r_threads_opt = reg->add_option("--threads", r_threads, "worker threads (0 = auto)");

  // eval
  auto* eval = app.add_subcommand("eval", "metrics from saved pose files");
  std::string e_est, e_truth, e_thresholds, e_out = ".", e_config;
  eval->add_option("--est", e_est, "estimated poses (result.json)")->required();
  eval->add_option("--truth", e_truth, "ground-truth poses (truth.json)")->required();
  auto* e_thr_opt = eval->add_option("--thresholds", e_thresholds, "recall thresholds, degrees");
  eval->add_option("--out", e_out, "output directory");
  eval->add_option("--config", e_config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage problems are config errors
  }

  try {
    if (gbuild->parsed()) {
      Json flags;
      put_if(g_l_opt, flags, "L", g_l);
      put_if(g_k_opt, flags, "k", g_k);
      put_if(g_t_opt, flags, "threads", g_threads);
      return latreg::cli::cmd_grid_build(flags, g_config, g_out, g_force);
    }
    if (train->parsed()) {
      Json flags;
      put_if(t_epochs_opt, flags, "epochs", t_epochs);
      put_if(t_seed_opt, flags, "seed", t_seed);
      return latreg::cli::cmd_train(flags, t_config, t_out);
    }
    if (gen->parsed()) {
      Json flags;
      put_if(v_shape_opt, flags, "shape", v_shape);
      put_if(v_n_opt, flags, "n", v_n);
      put_if(v_k_opt, flags, "k", v_k);
      put_if(v_sigma_opt, flags, "sigma", v_sigma);
      put_if(v_v_opt, flags, "v", v_v);
      put_if(v_o_opt, flags, "o", v_o);
      put_if(v_seed_opt, flags, "seed", v_seed);
      return latreg::cli::cmd_genviews(flags, v_config, v_out);
    }
    if (reg->parsed()) {
      Json flags;
      put_if(r_sigma_opt, flags, "sigma", r_sigma);
      put_if(r_v_opt, flags, "v", r_v);
      put_if(r_o_opt, flags, "o", r_o);
      put_if(r_seed_opt, flags, "seed", r_seed);
      put_if(r_threads_opt, flags, "threads", r_threads);
      return latreg::cli::cmd_register(flags, r_config, r_views, r_model, r_grid, r_out);
    }
    if (eval->parsed()) {
      Json flags;
      if (e_thr_opt->count() > 0) {
        std::vector<double> thresholds;
        std::string item;
        std::istringstream in(e_thresholds);
        while (std::getline(in, item, ',')) {
          if (!item.empty()) thresholds.push_back(std::stod(item));
        }
        if (thresholds.empty()) throw latreg::config_error("eval: empty threshold list");
        flags["thresholds_deg"] = thresholds;
      }
      return latreg::cli::cmd_eval(flags, e_config, e_est, e_truth, e_out);
    }
    throw latreg::config_error("no command given");
  } catch (const latreg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 5;
  }
}
