// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsplat/guide.hpp"
#include "gsplat/noise.hpp"
#include "gsplat/raster.hpp"
#include "gsplat/raster_backward.hpp"
#include "gsplat/scene.hpp"
#include "gsplat/vgs.hpp"

namespace gsplat {

struct OptimizerConfig {
  double lr_position = 1.6e-4;
  double lr_position_final_factor = 0.01;  // geometric decay over the run
  double lr_log_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_color = 1.25e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct DensifyConfig {
  std::int64_t start = 300;
  std::int64_t interval = 50;
  double tau_grad = 2e-4;      // mean accumulated positional gradient per view
  double tau_prune = 0.005;    // activated opacity below this is removed
  double split_scale_fraction = 0.01;  // of scene_extent: split above, clone below
  double split_scale_shrink = 1.6;
  double scene_extent = 1.0;
};

struct SceneInitConfig {
  int count = 4096;
  double radius = 0.5;
  double opacity = 0.1;
  Vec3 color = Vec3(0.5, 0.5, 0.5);
};

struct TrainConfig {
  std::int64_t total_steps = 2000;
  DensifyConfig densify;
  std::int64_t opacity_reset_interval = 400;
  double opacity_reset_value = 0.05;
  std::int64_t checkpoint_interval = 500;
  std::int64_t eval_interval = 10;  // heldout eval cadence; 0 = off
  OptimizerConfig optimizer;
  SceneInitConfig init;
  CameraConfig camera;
  RenderSettings raster;
  double white_bg_prob = 1.0;  // per-step white background probability
  SigmaSchedule sigma;
  double rho_start = 0.3;
  double rho_end = 0.05;
  bool structured_noise_enabled = true;
  bool noise_resample_per_step = true;
  VgsConfig vgs;
  std::uint64_t seed = 0;

  void validate() const {
    if (total_steps < 0)
      throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
    if (densify.interval <= 0 || opacity_reset_interval <= 0 ||
        (checkpoint_interval <= 0) || densify.start > total_steps)
      throw std::invalid_argument("TrainConfig: bad interval configuration");
    if (!(rho_start >= 0.0 && rho_start <= 1.0 && rho_end >= 0.0 &&
          rho_end <= 1.0))
      throw std::invalid_argument("TrainConfig: rho must be in [0, 1]");
    sigma.validate();
    vgs.validate();
  }
};

// First/second Adam moments per parameter class, tracked per gaussian.
struct AdamState {
  std::vector<Vec3> m_position, v_position;
  std::vector<Vec3> m_log_scale, v_log_scale;
  std::vector<Vec4> m_rotation, v_rotation;
  std::vector<double> m_opacity, v_opacity;
  std::vector<Vec3> m_color, v_color;

  static AdamState zeros(size_t n) {
    AdamState s;
    s.m_position.assign(n, Vec3::Zero());
    s.v_position.assign(n, Vec3::Zero());
    s.m_log_scale.assign(n, Vec3::Zero());
    s.v_log_scale.assign(n, Vec3::Zero());
    s.m_rotation.assign(n, Vec4::Zero());
    s.v_rotation.assign(n, Vec4::Zero());
    s.m_opacity.assign(n, 0.0);
    s.v_opacity.assign(n, 0.0);
    s.m_color.assign(n, Vec3::Zero());
    s.v_color.assign(n, Vec3::Zero());
    return s;
  }

  size_t size() const { return m_position.size(); }
};

struct StepRecord {
  std::int64_t step = 0;
  double sigma = 0.0;
  double rho = 0.0;
  double score_norm = 0.0;
  std::int64_t gaussian_count = 0;
  double heldout_rmse = std::numeric_limits<double>::quiet_NaN();
  bool aborted = false;
};

struct TrainState {
  GaussianCloud cloud;
  std::int64_t step = 0;
  AdamState adam;
  std::int64_t accum_steps = 0;  // views accumulated since last densify
  std::vector<StepRecord> metrics;

  void check_consistent() const {
    const size_t n = cloud.size();
    if (adam.size() != n || cloud.grad_accum.size() != n)
      throw std::logic_error(
          "TrainState: accumulator sizes out of sync with cloud");
  }
};

inline TrainState init_train_state(const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.cloud = init_sphere_cloud(config.init.count, config.init.radius,
                                  config.init.opacity, config.init.color,
                                  derive_seed(config.seed, kStreamScene));
  state.adam = AdamState::zeros(state.cloud.size());
  return state;
}

// Decoupled Adam step per parameter class; the caller passes descent
// gradients (the distilled score is negated once, in train_step).
inline void optimizer_update(TrainState& state, const CloudGradients& grads,
                             const TrainConfig& config) {
  const size_t n = state.cloud.size();
  if (grads.size() != n)
    throw std::invalid_argument("optimizer_update: gradient shape mismatch");
  const OptimizerConfig& opt = config.optimizer;
  const std::int64_t t = state.step + 1;  // 1-based update count
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));

  const double progress =
      config.total_steps > 0
          ? static_cast<double>(state.step) /
                static_cast<double>(config.total_steps)
          : 0.0;
  const double lr_position =
      opt.lr_position * std::pow(opt.lr_position_final_factor, progress);

  auto adam_scalar = [&](double& param, double& m, double& v, double g,
                         double lr) {
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    if (!std::isfinite(m_hat) || !std::isfinite(v_hat))
      throw std::runtime_error("optimizer_update: non-finite moments");
    param -= lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
  };

  for (size_t i = 0; i < n; ++i) {
    Gaussian3D& g = state.cloud.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      adam_scalar(g.position[k], state.adam.m_position[i][k],
                  state.adam.v_position[i][k], grads.position[i][k],
                  lr_position);
      adam_scalar(g.log_scale[k], state.adam.m_log_scale[i][k],
                  state.adam.v_log_scale[i][k], grads.log_scale[i][k],
                  opt.lr_log_scale);
      adam_scalar(g.color[k], state.adam.m_color[i][k],
                  state.adam.v_color[i][k], grads.color[i][k], opt.lr_color);
    }
    for (int k = 0; k < 4; ++k)
      adam_scalar(g.rotation[k], state.adam.m_rotation[i][k],
                  state.adam.v_rotation[i][k], grads.rotation[i][k],
                  opt.lr_rotation);
    adam_scalar(g.opacity_logit, state.adam.m_opacity[i],
                state.adam.v_opacity[i], grads.opacity_logit[i],
                opt.lr_opacity);
  }
}

// Clone/split gaussians whose mean accumulated positional gradient exceeds
// tau_grad, prune transparent ones, and keep every per-gaussian array in
// lock step. Split children sample their positions from the parent.
inline void densify(TrainState& state, const TrainConfig& config) {
  const DensifyConfig& dc = config.densify;
  const size_t n = state.cloud.size();
  const double views =
      static_cast<double>(std::max<std::int64_t>(1, state.accum_steps));

  Rng rng(derive_seed(derive_seed(config.seed, kStreamDensify),
                      static_cast<std::uint64_t>(state.step)));

  GaussianCloud next;
  AdamState next_adam;
  auto append = [&](const Gaussian3D& g, bool keep_moments, size_t idx) {
    next.gaussians.push_back(g);
    if (keep_moments) {
      next_adam.m_position.push_back(state.adam.m_position[idx]);
      next_adam.v_position.push_back(state.adam.v_position[idx]);
      next_adam.m_log_scale.push_back(state.adam.m_log_scale[idx]);
      next_adam.v_log_scale.push_back(state.adam.v_log_scale[idx]);
      next_adam.m_rotation.push_back(state.adam.m_rotation[idx]);
      next_adam.v_rotation.push_back(state.adam.v_rotation[idx]);
      next_adam.m_opacity.push_back(state.adam.m_opacity[idx]);
      next_adam.v_opacity.push_back(state.adam.v_opacity[idx]);
      next_adam.m_color.push_back(state.adam.m_color[idx]);
      next_adam.v_color.push_back(state.adam.v_color[idx]);
    } else {
      next_adam.m_position.push_back(Vec3::Zero());
      next_adam.v_position.push_back(Vec3::Zero());
      next_adam.m_log_scale.push_back(Vec3::Zero());
      next_adam.v_log_scale.push_back(Vec3::Zero());
      next_adam.m_rotation.push_back(Vec4::Zero());
      next_adam.v_rotation.push_back(Vec4::Zero());
      next_adam.m_opacity.push_back(0.0);
      next_adam.v_opacity.push_back(0.0);
      next_adam.m_color.push_back(Vec3::Zero());
      next_adam.v_color.push_back(Vec3::Zero());
    }
  };

  for (size_t i = 0; i < n; ++i) {
    const Gaussian3D& g = state.cloud.gaussians[i];
    if (g.activated_opacity() < dc.tau_prune) continue;

    const double mean_grad = state.cloud.grad_accum[i] / views;
    if (mean_grad > dc.tau_grad) {
      const Vec3 scale = g.activated_scale();
      if (scale.maxCoeff() > dc.split_scale_fraction * dc.scene_extent) {
        // Split: two children drawn from the parent, scale shrunk.
        const Mat3 rot = quaternion_to_rotation(g.unit_rotation());
        for (int child = 0; child < 2; ++child) {
          Gaussian3D c = g;
          const Vec3 eps(rng.normal(), rng.normal(), rng.normal());
          c.position = g.position + rot * scale.cwiseProduct(eps);
          c.log_scale =
              g.log_scale - Vec3::Constant(std::log(dc.split_scale_shrink));
          append(c, false, 0);
        }
      } else {
        // Clone: keep the original (with its moments) plus a fresh copy.
        append(g, true, i);
        append(g, false, 0);
      }
    } else {
      append(g, true, i);
    }
  }

  next.step_counter = state.cloud.step_counter;
  next.reset_accumulators();
  state.cloud = std::move(next);
  state.adam = std::move(next_adam);
  state.accum_steps = 0;
  state.check_consistent();
}

// Clamp every activated opacity down to the reset value (in logit space);
// opacities already below it are left bit-identical.
inline void reset_opacity(TrainState& state, double reset_value = 0.05) {
  const double threshold_logit = logit(reset_value);
  for (Gaussian3D& g : state.cloud.gaussians) {
    if (g.activated_opacity() > reset_value) g.opacity_logit = threshold_logit;
  }
}

// One optimization step: sample a camera, perturb (vgs), distill, update,
// renormalize, and run the densify/reset hooks on schedule. Steps are
// 1-based: the first call executes step 1.
inline void train_step(TrainState& state, const TrainConfig& config,
                       const NoiseField& field, const ScoreProvider& provider,
                       Rng& rng) {
  state.check_consistent();
  const std::int64_t step = state.step + 1;

  const Camera camera = sample_camera(rng, config.camera);
  const double sigma = sigma_at(config.sigma, state.step);
  const double rho = config.structured_noise_enabled
                         ? mix_schedule(state.step, config.total_steps,
                                        config.rho_start, config.rho_end)
                         : 0.0;

  RenderSettings settings = config.raster;
  const double bg_draw = rng.uniform01();
  if (bg_draw < config.white_bg_prob) settings.background = Vec3::Ones();

  // Per-step derived seed keeps the main stream identical whether or not
  // the perturbation is enabled.
  const std::uint64_t vgs_seed = derive_seed(
      derive_seed(config.seed, kStreamVgs), static_cast<std::uint64_t>(step));
  const PerturbedCloud perturbed =
      perturb(state.cloud, sigma, config.vgs, vgs_seed);

  const std::uint64_t fixed_color_seed = field.color_seed;
  DistillResult distill =
      distill_step(perturbed.cloud, camera, field, provider, sigma, rho,
                   settings, rng,
                   config.noise_resample_per_step ? nullptr
                                                  : &fixed_color_seed);
  CloudGradients grads =
      passthrough_gradients(distill.gradients, state.cloud.size());

  StepRecord record;
  record.step = step;
  record.sigma = sigma;
  record.rho = rho;
  record.score_norm = distill.report.score_norm;
  record.gaussian_count = static_cast<std::int64_t>(state.cloud.size());

  if (!grads.all_finite()) {
    record.aborted = true;
    state.metrics.push_back(record);
    state.step = step;
    state.cloud.step_counter = step;
    return;  // cloud left unchanged
  }

  // The distilled direction is ascent on the log density; negate once so the
  // optimizer below is a plain minimizer.
  grads.scale_by(-1.0);
  optimizer_update(state, grads, config);

  for (Gaussian3D& g : state.cloud.gaussians)
    g.rotation = g.unit_rotation();

  // sigma^2-scaled so the densify signal tracks the reconstruction residual
  // instead of the 1/sigma^2 growth of the score along the schedule.
  for (size_t i = 0; i < state.cloud.size(); ++i)
    state.cloud.grad_accum[i] += sigma * sigma * grads.position[i].norm();
  state.accum_steps += 1;

  state.step = step;
  state.cloud.step_counter = step;

  if (step >= config.densify.start && step % config.densify.interval == 0)
    densify(state, config);
  // A reset needs subsequent steps to re-learn opacities, so it never fires
  // on the terminal step.
  if (step % config.opacity_reset_interval == 0 && step < config.total_steps)
    reset_opacity(state, config.opacity_reset_value);

  record.gaussian_count = static_cast<std::int64_t>(state.cloud.size());
  state.metrics.push_back(record);
  state.check_consistent();
}

struct TrainHooks {
  std::function<void(const TrainState&)> on_checkpoint;
  std::function<double(const GaussianCloud&)> heldout_eval;
};

inline TrainState run_training(const TrainConfig& config,
                               const NoiseField& field,
                               const ScoreProvider& provider,
                               const TrainHooks& hooks = {}) {
  config.validate();
  TrainState state = init_train_state(config);
  Rng rng(derive_seed(config.seed, kStreamTrain));
  for (std::int64_t s = 0; s < config.total_steps; ++s) {
    train_step(state, config, field, provider, rng);
    if (hooks.heldout_eval && config.eval_interval > 0 &&
        state.step % config.eval_interval == 0)
      state.metrics.back().heldout_rmse = hooks.heldout_eval(state.cloud);
    if (hooks.on_checkpoint && config.checkpoint_interval > 0 &&
        state.step % config.checkpoint_interval == 0)
      hooks.on_checkpoint(state);
  }
  return state;
}

}  // namespace gsplat
