// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "gsplat/trainer.hpp"
#include "support/test_util.hpp"

using namespace gsplat;
using Catch::Approx;

namespace {

// Small configuration that keeps unit runs fast.
TrainConfig small_config(std::int64_t steps = 20) {
  TrainConfig cfg;
  cfg.total_steps = steps;
  cfg.init.count = 32;
  cfg.camera.width = 16;
  cfg.camera.height = 16;
  cfg.raster.tile_size = 8;
  cfg.sigma.total_steps = cfg.total_steps;
  cfg.densify.start = cfg.total_steps;  // no densify in the short default
  cfg.eval_interval = 0;
  cfg.seed = 31415;
  return cfg;
}

NoiseField small_field() { return init_noise_cloud(128, 2718); }

bool clouds_equal(const GaussianCloud& a, const GaussianCloud& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a.gaussians[i].position != b.gaussians[i].position) return false;
    if (a.gaussians[i].log_scale != b.gaussians[i].log_scale) return false;
    if (a.gaussians[i].rotation != b.gaussians[i].rotation) return false;
    if (a.gaussians[i].opacity_logit != b.gaussians[i].opacity_logit)
      return false;
    if (a.gaussians[i].color != b.gaussians[i].color) return false;
  }
  return true;
}

class NanDenoiser final : public ScoreProvider {
 public:
  Image denoise(const Image& x, double, const Camera&, Rng&) const override {
    return Image(x.width, x.height, std::numeric_limits<double>::quiet_NaN());
  }
};

}  // namespace

TEST_CASE("adam matches a hand-stepped recursion", "[trainer]") {
  TrainConfig cfg = small_config();
  TrainState state;
  state.cloud.gaussians.resize(1);
  state.cloud.reset_accumulators();
  state.cloud.gaussians[0].opacity_logit = 0.5;
  state.adam = AdamState::zeros(1);

  const std::vector<double> gradient_sequence = {0.3, -0.1, 0.25, 0.0, -0.4};
  double param = 0.5, m = 0.0, v = 0.0;
  const auto& opt = cfg.optimizer;
  for (size_t t = 0; t < gradient_sequence.size(); ++t) {
    CloudGradients grads = CloudGradients::zeros(1);
    grads.opacity_logit[0] = gradient_sequence[t];
    optimizer_update(state, grads, cfg);
    state.step += 1;  // optimizer uses step+1 as the update count

    const double g = gradient_sequence[t];
    m = opt.beta1 * m + (1 - opt.beta1) * g;
    v = opt.beta2 * v + (1 - opt.beta2) * g * g;
    const double m_hat = m / (1 - std::pow(opt.beta1, double(t + 1)));
    const double v_hat = v / (1 - std::pow(opt.beta2, double(t + 1)));
    param -= opt.lr_opacity * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    REQUIRE(state.cloud.gaussians[0].opacity_logit ==
            Approx(param).epsilon(1e-12).margin(1e-15));
  }
}

TEST_CASE("zero gradients leave parameters unchanged and decay moments",
          "[trainer]") {
  TrainConfig cfg = small_config();
  TrainState state;
  state.cloud.gaussians.resize(2);
  state.cloud.reset_accumulators();
  state.adam = AdamState::zeros(2);

  // Prime the moments with one nonzero update.
  CloudGradients grads = CloudGradients::zeros(2);
  grads.position[0] = Vec3(1.0, 0.0, 0.0);
  optimizer_update(state, grads, cfg);
  state.step += 1;
  const double m_before = state.adam.m_position[0][0];
  const GaussianCloud snapshot = state.cloud;

  CloudGradients zero = CloudGradients::zeros(2);
  optimizer_update(state, zero, cfg);
  REQUIRE(state.adam.m_position[0][0] ==
          Approx(cfg.optimizer.beta1 * m_before).epsilon(1e-15));
  // Parameters of untouched gaussians stay bitwise put.
  REQUIRE(state.cloud.gaussians[1].position == snapshot.gaussians[1].position);

  SECTION("fresh state with zero gradients is a strict no-op") {
    TrainState fresh;
    fresh.cloud.gaussians.resize(1);
    fresh.cloud.gaussians[0].position = Vec3(0.1, 0.2, 0.3);
    fresh.cloud.reset_accumulators();
    fresh.adam = AdamState::zeros(1);
    optimizer_update(fresh, CloudGradients::zeros(1), cfg);
    REQUIRE(fresh.cloud.gaussians[0].position == Vec3(0.1, 0.2, 0.3));
  }
  SECTION("shape mismatch is rejected") {
    REQUIRE_THROWS_AS(optimizer_update(state, CloudGradients::zeros(3), cfg),
                      std::invalid_argument);
  }
}

TEST_CASE("opacity reset clamps down and only down", "[trainer]") {
  TrainState state;
  state.cloud.gaussians.resize(3);
  state.cloud.gaussians[0].opacity_logit = logit(0.01);
  state.cloud.gaussians[1].opacity_logit = logit(0.9);
  state.cloud.gaussians[2].opacity_logit = logit(0.05) - 1e-9;
  const Vec3 pos1 = state.cloud.gaussians[1].position;
  state.cloud.reset_accumulators();
  state.adam = AdamState::zeros(3);

  const double low_logit = state.cloud.gaussians[0].opacity_logit;
  reset_opacity(state, 0.05);
  REQUIRE(state.cloud.gaussians[0].opacity_logit == low_logit);
  REQUIRE(state.cloud.gaussians[1].activated_opacity() ==
          Approx(0.05).epsilon(1e-12));
  REQUIRE(state.cloud.gaussians[1].opacity_logit == logit(0.05));
  REQUIRE(state.cloud.gaussians[2].opacity_logit == logit(0.05) - 1e-9);
  // Other fields untouched.
  REQUIRE(state.cloud.gaussians[1].position == pos1);
}

TEST_CASE("densify bookkeeping on hand-built triggers", "[trainer]") {
  TrainConfig cfg = small_config();
  cfg.densify.tau_grad = 0.5;
  cfg.densify.tau_prune = 0.01;
  cfg.densify.split_scale_fraction = 0.1;  // boundary at 0.1 * extent
  cfg.densify.scene_extent = 1.0;

  auto fresh_state = [&]() {
    TrainState state;
    state.cloud.gaussians.resize(3);
    state.cloud.gaussians[0].log_scale = Vec3::Constant(std::log(0.05));
    state.cloud.gaussians[1].log_scale = Vec3::Constant(std::log(0.3));
    state.cloud.gaussians[2].log_scale = Vec3::Constant(std::log(0.05));
    for (auto& g : state.cloud.gaussians) g.opacity_logit = logit(0.5);
    state.cloud.reset_accumulators();
    state.adam = AdamState::zeros(3);
    state.accum_steps = 1;
    return state;
  };

  SECTION("no triggers leave the cloud unchanged") {
    TrainState state = fresh_state();
    const GaussianCloud before = state.cloud;
    densify(state, cfg);
    REQUIRE(clouds_equal(state.cloud, before));
  }
  SECTION("small gaussian above threshold clones") {
    TrainState state = fresh_state();
    state.cloud.grad_accum[0] = 1.0;
    densify(state, cfg);
    REQUIRE(state.cloud.size() == 4);
    // Clone keeps the original parameters and appends an identical copy.
    REQUIRE(state.cloud.gaussians[0].position ==
            state.cloud.gaussians[1].position);
    REQUIRE(state.adam.size() == 4);
  }
  SECTION("large gaussian above threshold splits into two children") {
    TrainState state = fresh_state();
    state.cloud.grad_accum[1] = 1.0;
    densify(state, cfg);
    REQUIRE(state.cloud.size() == 4);  // 3 - 1 + 2
    // Children carry the shrunk scale.
    const double expected = std::log(0.3) - std::log(1.6);
    REQUIRE(state.cloud.gaussians[1].log_scale[0] == Approx(expected));
    REQUIRE(state.cloud.gaussians[2].log_scale[0] == Approx(expected));
  }
  SECTION("transparent gaussians are pruned") {
    TrainState state = fresh_state();
    state.cloud.gaussians[2].opacity_logit = logit(0.001);
    densify(state, cfg);
    REQUIRE(state.cloud.size() == 2);
  }
  SECTION("accumulators reset after the pass") {
    TrainState state = fresh_state();
    state.cloud.grad_accum[0] = 1.0;
    densify(state, cfg);
    for (double a : state.cloud.grad_accum) REQUIRE(a == 0.0);
    REQUIRE(state.accum_steps == 0);
  }
}

TEST_CASE("densify matches an independent rule replay", "[trainer]") {
  TrainConfig cfg = small_config();
  cfg.densify.tau_grad = 0.2;
  cfg.densify.tau_prune = 0.02;
  cfg.densify.split_scale_fraction = 0.12;

  Rng rng(404);
  TrainState state;
  const int n = 64;
  state.cloud.gaussians.resize(n);
  for (auto& g : state.cloud.gaussians) {
    g.log_scale = Vec3::Constant(std::log(rng.uniform(0.02, 0.4)));
    g.opacity_logit = logit(rng.uniform(0.005, 0.9));
  }
  state.cloud.reset_accumulators();
  for (int i = 0; i < n; ++i) state.cloud.grad_accum[i] = rng.uniform(0.0, 0.5);
  state.adam = AdamState::zeros(n);
  state.accum_steps = 1;

  // Replay the clone/split/prune rules independently to predict the layout.
  std::vector<double> expected_opacity;
  for (int i = 0; i < n; ++i) {
    const Gaussian3D& g = state.cloud.gaussians[i];
    if (g.activated_opacity() < cfg.densify.tau_prune) continue;
    if (state.cloud.grad_accum[i] > cfg.densify.tau_grad) {
      if (g.activated_scale().maxCoeff() >
          cfg.densify.split_scale_fraction * cfg.densify.scene_extent) {
        expected_opacity.push_back(g.activated_opacity());
        expected_opacity.push_back(g.activated_opacity());
      } else {
        expected_opacity.push_back(g.activated_opacity());
        expected_opacity.push_back(g.activated_opacity());
      }
    } else {
      expected_opacity.push_back(g.activated_opacity());
    }
  }

  densify(state, cfg);
  REQUIRE(state.cloud.size() == expected_opacity.size());
  for (size_t i = 0; i < expected_opacity.size(); ++i)
    REQUIRE(state.cloud.gaussians[i].activated_opacity() ==
            Approx(expected_opacity[i]).epsilon(1e-12));
  state.check_consistent();
}

TEST_CASE("identity provider is a training fixed point", "[trainer]") {
  TrainConfig cfg = small_config(10);
  const NoiseField field = small_field();
  const IdentityDenoiser provider;
  const TrainState state = run_training(cfg, field, provider);
  const TrainState initial = init_train_state(cfg);
  REQUIRE(clouds_equal(state.cloud, initial.cloud));
  REQUIRE(state.step == 10);
  for (const StepRecord& r : state.metrics) {
    REQUIRE(r.score_norm == 0.0);
    REQUIRE_FALSE(r.aborted);
  }
}

TEST_CASE("training is bitwise reproducible", "[trainer]") {
  TrainConfig cfg = small_config(12);
  const NoiseField field = small_field();

  const GaussianCloud target_cloud = gsplat_test::make_demo_cloud();
  const auto poses = gsplat_test::demo_target_poses(16, 16);
  const TargetViewDenoiser provider(
      gsplat_test::render_views(target_cloud, poses, Vec3::Ones()));

  const TrainState a = run_training(cfg, field, provider);
  const TrainState b = run_training(cfg, field, provider);
  REQUIRE(clouds_equal(a.cloud, b.cloud));
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    REQUIRE(a.metrics[i].score_norm == b.metrics[i].score_norm);
    REQUIRE(a.metrics[i].sigma == b.metrics[i].sigma);
  }
}

TEST_CASE("training result does not depend on the thread count", "[trainer]") {
  TrainConfig cfg = small_config(6);
  const NoiseField field = small_field();
  const GaussianCloud target_cloud = gsplat_test::make_demo_cloud();
  const auto poses = gsplat_test::demo_target_poses(16, 16);
  const TargetViewDenoiser provider(
      gsplat_test::render_views(target_cloud, poses, Vec3::Ones()));

  cfg.raster.threads = 1;
  const TrainState a = run_training(cfg, field, provider);
  cfg.raster.threads = 4;
  const TrainState b = run_training(cfg, field, provider);
  REQUIRE(clouds_equal(a.cloud, b.cloud));
}

TEST_CASE("disabled perturbation equals gamma zero bitwise", "[trainer]") {
  TrainConfig base = small_config(8);
  const NoiseField field = small_field();
  const GaussianCloud target_cloud = gsplat_test::make_demo_cloud();
  const auto poses = gsplat_test::demo_target_poses(16, 16);
  const TargetViewDenoiser provider(
      gsplat_test::render_views(target_cloud, poses, Vec3::Ones()));

  TrainConfig disabled = base;
  disabled.vgs.enabled = false;
  TrainConfig zero_gamma = base;
  zero_gamma.vgs.enabled = true;
  zero_gamma.vgs.gamma = 0.0;

  const TrainState a = run_training(disabled, field, provider);
  const TrainState b = run_training(zero_gamma, field, provider);
  REQUIRE(clouds_equal(a.cloud, b.cloud));
}

TEST_CASE("quaternions stay unit norm through training", "[trainer]") {
  TrainConfig cfg = small_config(15);
  const NoiseField field = small_field();
  const GaussianCloud target_cloud = gsplat_test::make_demo_cloud();
  const auto poses = gsplat_test::demo_target_poses(16, 16);
  const TargetViewDenoiser provider(
      gsplat_test::render_views(target_cloud, poses, Vec3::Ones()));
  const TrainState state = run_training(cfg, field, provider);
  for (const Gaussian3D& g : state.cloud.gaussians)
    REQUIRE(std::abs(g.rotation.norm() - 1.0) < 1e-9);
}

TEST_CASE("densify events keep every per-gaussian array in lock step",
          "[trainer]") {
  TrainConfig cfg = small_config(12);
  cfg.densify.start = 4;
  cfg.densify.interval = 4;
  cfg.densify.tau_grad = 1e-9;  // force clone/split activity
  const NoiseField field = small_field();
  const GaussianCloud target_cloud = gsplat_test::make_demo_cloud();
  const auto poses = gsplat_test::demo_target_poses(16, 16);
  const TargetViewDenoiser provider(
      gsplat_test::render_views(target_cloud, poses, Vec3::Ones()));
  const TrainState state = run_training(cfg, field, provider);
  state.check_consistent();
  REQUIRE(state.cloud.size() > 32);  // something actually densified
}

TEST_CASE("non-finite gradients abort the step and keep the cloud",
          "[trainer]") {
  TrainConfig cfg = small_config(1);
  const NoiseField field = small_field();
  const NanDenoiser provider;
  TrainState state = init_train_state(cfg);
  const GaussianCloud before = state.cloud;
  Rng rng(derive_seed(cfg.seed, kStreamTrain));
  train_step(state, cfg, field, provider, rng);
  REQUIRE(state.step == 1);
  REQUIRE(state.metrics.size() == 1);
  REQUIRE(state.metrics[0].aborted);
  REQUIRE(clouds_equal(state.cloud, before));
}

TEST_CASE("reconstruction error drops over a short run", "[trainer][slow]") {
  TrainConfig cfg = small_config(150);
  cfg.densify.start = 60;
  cfg.init.count = 96;
  cfg.camera.width = 32;
  cfg.camera.height = 32;
  cfg.sigma.total_steps = cfg.total_steps;
  cfg.densify.start = 60;
  cfg.eval_interval = 0;

  const NoiseField field = init_noise_cloud(1024, 11);
  const GaussianCloud target_cloud = gsplat_test::make_demo_cloud();
  const auto poses = gsplat_test::demo_target_poses(32, 32);
  const auto views =
      gsplat_test::render_views(target_cloud, poses, Vec3::Ones());
  const TargetViewDenoiser provider(views);

  RenderSettings eval_settings;
  eval_settings.background = Vec3::Ones();
  auto mean_err = [&](const GaussianCloud& cloud) {
    double acc = 0.0;
    for (const auto& v : views)
      acc += photometric_rmse(render(cloud, v.camera, eval_settings).color,
                              v.image);
    return acc / views.size();
  };

  const TrainState initial = init_train_state(cfg);
  const double err_before = mean_err(initial.cloud);
  const TrainState state = run_training(cfg, field, provider);
  const double err_after = mean_err(state.cloud);
  INFO("before " << err_before << " after " << err_after);
  REQUIRE(err_after < err_before * 0.8);
}
