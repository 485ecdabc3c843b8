#include "latreg/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "latreg/autodiff.hpp"
#include "latreg/error.hpp"
#include "latreg/optim.hpp"
#include "latreg/parallel.hpp"
#include "reg_internal.hpp"

namespace latreg {

using internal::ViewCache;

void RegConfig::validate() const {
  if (multistart_width < 1) throw config_error("register: multistart width must be >= 1");
  if (!(escape_angle_deg > 0.0 && escape_angle_deg < 180.0)) {
    throw config_error("register: escape angle must be in (0, 180) degrees");
  }
  if (lambda < 0.0) throw config_error("register: lambda must be >= 0");
  if (!(density_radius > 0.0)) throw config_error("register: density radius must be positive");
  if (!(lr > 0.0)) throw config_error("register: lr must be positive");
  if (!(lr_factor > 1.0)) throw config_error("register: lr factor must be > 1");
  if (patience_lr < 1 || patience_stop < 1) {
    throw config_error("register: patience values must be positive");
  }
  if (max_steps < 1 || max_rounds < 1) {
    throw config_error("register: step and round caps must be positive");
  }
  if (threads < 1) throw config_error("register: threads must be >= 1");
  degradation.validate();
}

namespace {

constexpr std::uint64_t kPhaseJoint = 1;
constexpr std::uint64_t kPhaseGrid = 2;
constexpr std::uint64_t kPhaseMulti = 3;
constexpr std::uint64_t kPhaseSync = 4;

std::uint64_t phase_key(std::uint64_t phase, std::uint64_t nonce) {
  return (phase << 56) ^ nonce;
}

PointCloud rows_of(const PointCloud& x, const std::vector<int>& rows) {
  PointCloud out(rows.size(), 3);
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = x.row(rows[i]);
  return out;
}

}  // namespace

struct RegistrationPipeline::Impl {
  DescriptorModel model;
  const RotationGrid* grid = nullptr;
  RegConfig cfg;
  NormalizedViews normalized;
  std::vector<ViewCache> caches;
  Eigen::MatrixXd data_latents;  // N x latent
  CounterRng crng;
  Eigen::Matrix3d chol = Eigen::Matrix3d::Zero();
  bool has_noise = false;
  internal::MaskCounters counters;

  Impl(const std::vector<PointCloud>& views, const DescriptorModel& model_in,
       const RotationGrid* grid_in, const RegConfig& cfg_in)
      : model(model_in), grid(grid_in), cfg(cfg_in), crng(cfg_in.seed) {
    cfg.validate();
    model.validate();
    if (views.empty()) throw data_error("register: no views");
    if (cfg.assume_normalized) {
      for (size_t i = 0; i < views.size(); ++i) {
        validate_cloud(views[i], "register view " + std::to_string(i));
      }
      normalized.views = views;
      normalized.scale = 1.0;
      normalized.centroids.assign(views.size(), Eigen::Vector3d::Zero());
    } else {
      normalized = joint_normalize(views);
    }
    caches.reserve(views.size());
    for (const auto& v : normalized.views) {
      caches.push_back(ViewCache::build(v, model));
    }
    data_latents.resize(static_cast<Eigen::Index>(caches.size()), model.latent_dim);
    for (size_t i = 0; i < caches.size(); ++i) {
      data_latents.row(i) = caches[i].latent.transpose();
    }
    has_noise = cfg.degradation.has_noise();
    if (has_noise) chol = internal::noise_chol(cfg.degradation);
  }

  int view_count() const { return static_cast<int>(caches.size()); }

  PointCloud noise_for(std::uint64_t phase, std::uint64_t nonce, std::uint64_t k2,
                       std::uint64_t k3, Eigen::Index rows) const {
    if (!has_noise) return PointCloud(0, 3);
    return internal::counter_noise(crng, phase_key(phase, nonce), k2, k3, rows, chol);
  }

  // Loss of one grid cell, shared-translation fast path: the noised posed
  // template (and its per-point features) depend only on the rotation.
  double grid_cell_loss(const PointCloud& posed_noised, const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& latent_full, const NnIndex* template_index,
                        int view) {
    const ViewCache& cache = caches[view];
    counters.evals += 2;
    Eigen::VectorXd latent_t;
    if (cfg.degradation.visibility < 1.0) {
      const auto keep = occlusion_keep_indices(
          nn_distance_vector(posed_noised, *cache.index), cfg.degradation.visibility);
      latent_t = pool_rows(features, keep);
    } else {
      latent_t = latent_full;
      counters.noops += 1;
    }
    Eigen::VectorXd latent_d;
    if (cfg.degradation.outlier_ratio > 0.0) {
      const auto keep = outlier_keep_indices(
          nn_distance_vector(cache.points, *template_index), cfg.degradation.outlier_ratio);
      latent_d = pool_rows(cache.features, keep);
    } else {
      latent_d = cache.latent;
      counters.noops += 1;
    }
    return (latent_t - latent_d).squaredNorm();
  }
};

RegistrationPipeline::RegistrationPipeline(const std::vector<PointCloud>& views,
                                           const DescriptorModel& model,
                                           const RotationGrid* grid, const RegConfig& cfg)
    : impl_(std::make_unique<Impl>(views, model, grid, cfg)) {
  state_.z = Eigen::VectorXd::Zero(model.latent_dim);
  state_.poses.assign(impl_->view_count(), RigidMotion::identity());
  state_.losses.assign(impl_->view_count(), std::numeric_limits<double>::infinity());
  report_.centroids = impl_->normalized.centroids;
  report_.normalization_scale = impl_->normalized.scale;
}

RegistrationPipeline::~RegistrationPipeline() = default;

const std::vector<PointCloud>& RegistrationPipeline::normalized_views() const {
  return impl_->normalized.views;
}

double RegistrationPipeline::sync_loss(int view, std::uint64_t nonce) const {
  const PointCloud p = decode(impl_->model, state_.z);
  PointCloud posed = apply_motion(state_.poses[view], p);
  const PointCloud noise = impl_->noise_for(kPhaseSync, nonce, view, 0, posed.rows());
  if (noise.rows() == posed.rows()) posed += noise;
  return internal::masked_latent_loss(posed, impl_->caches[view], impl_->model,
                                      impl_->cfg.degradation, &impl_->counters);
}

void RegistrationPipeline::initialize() {
  state_.z = impl_->data_latents.row(init_medoid(impl_->data_latents)).transpose();
  for (auto& pose : state_.poses) pose = RigidMotion::identity();
  const auto minima = grid_minima(1, 0);
  for (int i = 0; i < impl_->view_count(); ++i) {
    if (!minima[i].empty()) {
      state_.poses[i].r = impl_->grid->rotations[minima[i][0].rotation_index];
    }
  }
  for (int i = 0; i < impl_->view_count(); ++i) state_.losses[i] = sync_loss(i, 0);
}

std::vector<std::vector<GridMinimum>> RegistrationPipeline::grid_minima(
    int top_m, std::uint64_t nonce) {
  if (impl_->grid == nullptr) throw runtime_error("register: no rotation grid");
  const RotationGrid& grid = *impl_->grid;
  const int l_count = grid.size();
  const int n_views = impl_->view_count();
  const PointCloud p = decode(impl_->model, state_.z);
  const bool per_view = impl_->cfg.grid_search_per_view;

  // losses(r, i) laid out row-major per rotation
  std::vector<double> losses(static_cast<size_t>(l_count) * n_views);
  parallel_for(0, l_count, impl_->cfg.threads, [&](std::int64_t r) {
    if (per_view) {
      for (int i = 0; i < n_views; ++i) {
        PointCloud posed = apply_rotation(grid.rotations[r], p);
        posed.rowwise() += state_.poses[i].t.transpose();
        const PointCloud noise =
            impl_->noise_for(kPhaseGrid, nonce, r, 1 + i, posed.rows());
        if (noise.rows() == posed.rows()) posed += noise;
        losses[static_cast<size_t>(r) * n_views + i] = internal::masked_latent_loss(
            posed, impl_->caches[i], impl_->model, impl_->cfg.degradation, &impl_->counters);
      }
      return;
    }
    PointCloud posed = apply_rotation(grid.rotations[r], p);
    const PointCloud noise = impl_->noise_for(kPhaseGrid, nonce, r, 0, posed.rows());
    if (noise.rows() == posed.rows()) posed += noise;
    const Eigen::MatrixXd features = encode_features(impl_->model, posed);
    const Eigen::VectorXd latent_full = pool_all(features);
    std::unique_ptr<NnIndex> template_index;
    if (impl_->cfg.degradation.outlier_ratio > 0.0) {
      template_index = std::make_unique<NnIndex>(posed);
    }
    for (int i = 0; i < n_views; ++i) {
      losses[static_cast<size_t>(r) * n_views + i] =
          impl_->grid_cell_loss(posed, features, latent_full, template_index.get(), i);
    }
  });

  // a rotation is a local minimum for a view when no graph neighbor has a
  // strictly lower loss
  std::vector<std::vector<GridMinimum>> result(n_views);
  for (int i = 0; i < n_views; ++i) {
    std::vector<GridMinimum> minima;
    for (int r = 0; r < l_count; ++r) {
      const double v = losses[static_cast<size_t>(r) * n_views + i];
      bool is_min = true;
      const std::uint32_t* nbr = grid.neighbors(r);
      for (int j = 0; j < grid.k; ++j) {
        if (losses[static_cast<size_t>(nbr[j]) * n_views + i] < v) {
          is_min = false;
          break;
        }
      }
      if (is_min) minima.push_back({r, v});
    }
    std::sort(minima.begin(), minima.end(), [](const GridMinimum& a, const GridMinimum& b) {
      return a.loss < b.loss || (a.loss == b.loss && a.rotation_index < b.rotation_index);
    });
    if (static_cast<int>(minima.size()) > top_m) minima.resize(top_m);
    result[i] = std::move(minima);
  }
  return result;
}

double RegistrationPipeline::grid_loss_at(int view, int rotation_index,
                                          std::uint64_t nonce) const {
  const RotationGrid& grid = *impl_->grid;
  const PointCloud p = decode(impl_->model, state_.z);
  if (impl_->cfg.grid_search_per_view) {
    PointCloud posed = apply_rotation(grid.rotations[rotation_index], p);
    posed.rowwise() += state_.poses[view].t.transpose();
    const PointCloud noise =
        impl_->noise_for(kPhaseGrid, nonce, rotation_index, 1 + view, posed.rows());
    if (noise.rows() == posed.rows()) posed += noise;
    return internal::masked_latent_loss(posed, impl_->caches[view], impl_->model,
                                        impl_->cfg.degradation, &impl_->counters);
  }
  PointCloud posed = apply_rotation(grid.rotations[rotation_index], p);
  const PointCloud noise = impl_->noise_for(kPhaseGrid, nonce, rotation_index, 0, posed.rows());
  if (noise.rows() == posed.rows()) posed += noise;
  const Eigen::MatrixXd features = encode_features(impl_->model, posed);
  const Eigen::VectorXd latent_full = pool_all(features);
  std::unique_ptr<NnIndex> template_index;
  if (impl_->cfg.degradation.outlier_ratio > 0.0) {
    template_index = std::make_unique<NnIndex>(posed);
  }
  return impl_->grid_cell_loss(posed, features, latent_full, template_index.get(), view);
}

namespace {

// State of one pose-only descent; shared by multistart and (with the latent
// added) the joint phase.
struct DescentSnapshot {
  Eigen::MatrixXd z;                    // 1 x latent (joint only)
  std::vector<Rotation> bases;
  std::vector<Eigen::MatrixXd> trans;   // 1 x 3 each
  std::vector<double> view_losses;
  double total = std::numeric_limits<double>::infinity();
};

}  // namespace

double RegistrationPipeline::joint_descent(std::uint64_t nonce) {
  Impl& im = *impl_;
  const int n_views = im.view_count();
  const RegConfig& cfg = im.cfg;

  AdamW::Config oc;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  AdamW opt(oc);
  opt.add_param("z", 1, im.model.latent_dim, /*decayed=*/true);
  for (int i = 0; i < n_views; ++i) {
    opt.add_param("w" + std::to_string(i), 1, 3, /*decayed=*/false);
    opt.add_param("t" + std::to_string(i), 1, 3, /*decayed=*/false);
  }
  PlateauSchedule schedule(cfg.lr, {cfg.lr_factor, cfg.patience_lr, cfg.patience_stop});

  Eigen::MatrixXd z_param = state_.z.transpose();
  std::vector<Rotation> bases(n_views);
  std::vector<Eigen::MatrixXd> w_params(n_views, Eigen::MatrixXd::Zero(1, 3));
  std::vector<Eigen::MatrixXd> t_params(n_views);
  for (int i = 0; i < n_views; ++i) {
    bases[i] = state_.poses[i].r;
    t_params[i] = state_.poses[i].t.transpose();
  }

  DescentSnapshot best;
  for (int step = 0; step < cfg.max_steps; ++step) {
    // constants of this step: noise draws, masks, masked data latents
    const PointCloud p_now = decode(im.model, Eigen::VectorXd(z_param.transpose()));
    std::vector<internal::StepPrep> preps(n_views);
    for (int i = 0; i < n_views; ++i) {
      PointCloud posed = apply_rotation(bases[i], p_now);
      posed.rowwise() += t_params[i].row(0);
      const PointCloud noise =
          im.noise_for(kPhaseJoint, nonce, i, static_cast<std::uint64_t>(step), posed.rows());
      preps[i] = internal::prepare_step(posed, noise, im.caches[i], cfg.degradation,
                                        &im.counters);
    }

    Tape tape;
    const auto z_node = tape.param(z_param);
    const auto p_node = tape.reshape_points(tape_decode(tape, im.model, z_node));
    std::vector<Tape::NodeId> w_nodes(n_views), t_nodes(n_views), loss_nodes(n_views);
    Tape::NodeId total_node = -1;
    for (int i = 0; i < n_views; ++i) {
      w_nodes[i] = tape.param(w_params[i]);
      t_nodes[i] = tape.param(t_params[i]);
      auto cur = tape.add_rowvec(tape.rotate_local(p_node, w_nodes[i], bases[i]), t_nodes[i]);
      if (preps[i].noise.rows() > 0) cur = tape.add(cur, tape.constant(preps[i].noise));
      if (!preps[i].keep_template.empty()) {
        cur = tape.gather_rows(cur, preps[i].keep_template);
      }
      const auto latent = tape_encode(tape, im.model, cur);
      loss_nodes[i] =
          tape.squared_l2(latent, tape.constant(preps[i].data_latent.transpose()));
      total_node = i == 0 ? loss_nodes[i] : tape.add(total_node, loss_nodes[i]);
    }
    tape.backward(total_node);

    double total_value = tape.value(total_node)(0, 0);
    if (cfg.lambda != 0.0) {
      total_value += cfg.lambda * density_stddev(p_now, cfg.density_radius);
    }
    if (!std::isfinite(total_value)) {
      throw runtime_error("joint descent: non-finite loss at step " + std::to_string(step));
    }

    if (total_value < best.total) {
      best.total = total_value;
      best.z = z_param;
      best.bases = bases;
      best.trans = t_params;
      best.view_losses.resize(n_views);
      for (int i = 0; i < n_views; ++i) best.view_losses[i] = tape.value(loss_nodes[i])(0, 0);
    }

    const auto outcome = schedule.observe(total_value);
    opt.set_lr(outcome.lr);
    if (outcome.stop) break;

    std::vector<Eigen::MatrixXd*> params{&z_param};
    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(1 + 2 * n_views);
    grads.push_back(tape.grad(z_node));
    for (int i = 0; i < n_views; ++i) {
      params.push_back(&w_params[i]);
      params.push_back(&t_params[i]);
      grads.push_back(tape.grad(w_nodes[i]));
      grads.push_back(tape.grad(t_nodes[i]));
    }
    std::vector<const Eigen::MatrixXd*> grad_ptrs;
    for (const auto& g : grads) grad_ptrs.push_back(&g);
    opt.step(params, grad_ptrs);

    // fold local rotation coordinates into the stored rotation
    for (int i = 0; i < n_views; ++i) {
      bases[i] = bases[i] * rotation_exp(w_params[i].row(0).transpose());
      w_params[i].setZero();
    }
  }

  state_.z = best.z.row(0).transpose();
  for (int i = 0; i < n_views; ++i) {
    state_.poses[i].r = best.bases[i];
    state_.poses[i].t = best.trans[i].row(0).transpose();
    state_.losses[i] = best.view_losses[i];
  }
  return best.total;
}

RegistrationPipeline::Proposals RegistrationPipeline::multistart(
    const std::vector<std::vector<GridMinimum>>& minima, std::uint64_t nonce) {
  Impl& im = *impl_;
  const int n_views = im.view_count();
  const RegConfig& cfg = im.cfg;
  const PointCloud p = decode(im.model, state_.z);

  struct Start {
    int view;
    int slot;  // index within the view's minima
    Rotation base;
  };
  std::vector<Start> starts;
  for (int i = 0; i < n_views; ++i) {
    const int m = std::min<int>(cfg.multistart_width, static_cast<int>(minima[i].size()));
    for (int s = 0; s < m; ++s) {
      starts.push_back({i, s, im.grid->rotations[minima[i][s].rotation_index]});
    }
  }

  struct Outcome {
    bool ok = false;
    double loss = std::numeric_limits<double>::infinity();
    Rotation rotation;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  };
  std::vector<Outcome> outcomes(starts.size());

  parallel_for(0, static_cast<std::int64_t>(starts.size()), cfg.threads, [&](std::int64_t si) {
    const Start& start = starts[si];
    const std::uint64_t start_id =
        static_cast<std::uint64_t>(start.view) * 1024 + static_cast<std::uint64_t>(start.slot);
    try {
      AdamW::Config oc;
      oc.lr = cfg.lr;
      oc.weight_decay = 0.0;
      AdamW opt(oc);
      opt.add_param("w", 1, 3, false);
      opt.add_param("t", 1, 3, false);
      PlateauSchedule schedule(cfg.lr, {cfg.lr_factor, cfg.patience_lr, cfg.patience_stop});

      Rotation base = start.base;
      Eigen::MatrixXd w_param = Eigen::MatrixXd::Zero(1, 3);
      Eigen::MatrixXd t_param = state_.poses[start.view].t.transpose();

      double best_loss = std::numeric_limits<double>::infinity();
      Rotation best_rot = base;
      Eigen::MatrixXd best_t = t_param;

      for (int step = 0; step < cfg.max_steps; ++step) {
        PointCloud posed = apply_rotation(base, p);
        posed.rowwise() += t_param.row(0);
        const PointCloud noise = im.noise_for(kPhaseMulti, nonce, start_id,
                                              static_cast<std::uint64_t>(step), posed.rows());
        const auto prep = internal::prepare_step(posed, noise, im.caches[start.view],
                                                 cfg.degradation, &im.counters);
        Tape tape;
        const auto p_node = tape.constant(p);
        const auto w_node = tape.param(w_param);
        const auto t_node = tape.param(t_param);
        auto cur = tape.add_rowvec(tape.rotate_local(p_node, w_node, base), t_node);
        if (prep.noise.rows() > 0) cur = tape.add(cur, tape.constant(prep.noise));
        if (!prep.keep_template.empty()) cur = tape.gather_rows(cur, prep.keep_template);
        const auto latent = tape_encode(tape, im.model, cur);
        const auto loss_node =
            tape.squared_l2(latent, tape.constant(prep.data_latent.transpose()));
        tape.backward(loss_node);

        const double loss = tape.value(loss_node)(0, 0);
        if (!std::isfinite(loss)) throw runtime_error("multistart: non-finite loss");
        if (loss < best_loss) {
          best_loss = loss;
          best_rot = base;
          best_t = t_param;
        }
        const auto outcome = schedule.observe(loss);
        opt.set_lr(outcome.lr);
        if (outcome.stop) break;

        std::vector<Eigen::MatrixXd*> params{&w_param, &t_param};
        const Eigen::MatrixXd gw = tape.grad(w_node);
        const Eigen::MatrixXd gt = tape.grad(t_node);
        opt.step(params, {&gw, &gt});
        base = base * rotation_exp(w_param.row(0).transpose());
        w_param.setZero();
      }
      outcomes[si] = {true, best_loss, best_rot, best_t.row(0).transpose()};
    } catch (const std::exception&) {
      outcomes[si].ok = false;  // recorded and skipped
    }
  });

  Proposals out;
  out.poses = state_.poses;
  out.losses = state_.losses;
  std::vector<bool> any(n_views, false);
  for (size_t si = 0; si < starts.size(); ++si) {
    const auto& outcome = outcomes[si];
    if (!outcome.ok) {
      out.failed_starts.push_back(static_cast<int>(si));
      continue;
    }
    const int i = starts[si].view;
    // starts are ordered by (view, slot); strict < keeps the lowest slot on ties
    if (!any[i] || outcome.loss < out.losses[i]) {
      any[i] = true;
      out.poses[i] = RigidMotion{outcome.rotation, outcome.translation};
      out.losses[i] = outcome.loss;
    }
  }
  return out;
}

RegistrationResult RegistrationPipeline::run() {
  const auto t0 = std::chrono::steady_clock::now();
  initialize();
  report_.converged = false;
  report_.hit_round_cap = false;
  report_.escapes_per_round.clear();
  int round = 0;
  while (true) {
    ++round;
    joint_descent(static_cast<std::uint64_t>(round));
    const auto minima = grid_minima(impl_->cfg.multistart_width, static_cast<std::uint64_t>(round));
    const auto proposals = multistart(minima, static_cast<std::uint64_t>(round));
    const int escapes = detect_escapes(state_, proposals.poses, proposals.losses,
                                       impl_->cfg.escape_angle_deg);
    update_poses(state_, proposals.poses, proposals.losses);
    report_.escapes_per_round.push_back(escapes);
    if (escapes == 0) {
      report_.converged = true;
      break;
    }
    if (round >= impl_->cfg.max_rounds) {
      report_.hit_round_cap = true;
      break;
    }
  }
  const double final_total = joint_descent(0xF17A1);
  report_.rounds = round;
  report_.final_losses = state_.losses;
  report_.final_total_loss = final_total;
  report_.mask_evals = impl_->counters.evals.load();
  report_.mask_noops = impl_->counters.noops.load();
  report_.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RegistrationResult result;
  result.z = state_.z;
  result.poses = state_.poses;
  result.report = report_;
  return result;
}

RegistrationResult run_registration(const std::vector<PointCloud>& views,
                                    const DescriptorModel& model, const RotationGrid& grid,
                                    const RegConfig& cfg) {
  RegistrationPipeline pipeline(views, model, &grid, cfg);
  return pipeline.run();
}

}  // namespace latreg
