// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "gsplat/gradcheck.hpp"
#include "gsplat/guide.hpp"
#include "support/test_util.hpp"

using namespace gsplat;
using Catch::Approx;

namespace {

// Denoiser returning a fixed image, whatever the input.
class ConstantDenoiser final : public ScoreProvider {
 public:
  explicit ConstantDenoiser(Image target) : target_(std::move(target)) {}
  Image denoise(const Image& /*x*/, double, const Camera&, Rng&) const override {
    return target_;
  }

 private:
  Image target_;
};

class NanDenoiser final : public ScoreProvider {
 public:
  Image denoise(const Image& x, double, const Camera&, Rng&) const override {
    return Image(x.width, x.height, std::numeric_limits<double>::quiet_NaN());
  }
};

Image random_image(std::uint64_t seed, int w, int h, double lo, double hi) {
  Rng rng(mix_seed(seed));
  Image img(w, h);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

}  // namespace

TEST_CASE("sigma schedule endpoints are exact, midpoint geometric",
          "[guide]") {
  SigmaSchedule sched;
  sched.sigma_max = 1.0;
  sched.sigma_min = 0.04;
  sched.total_steps = 1000;
  REQUIRE(sigma_at(sched, 0) == 1.0);
  REQUIRE(sigma_at(sched, 1000) == 0.04);
  REQUIRE(sigma_at(sched, 500) == Approx(std::sqrt(1.0 * 0.04)).epsilon(1e-12));
  REQUIRE_THROWS_AS(sigma_at(sched, -1), std::invalid_argument);
  REQUIRE_THROWS_AS(sigma_at(sched, 1001), std::invalid_argument);
  SigmaSchedule bad;
  bad.sigma_min = -1.0;
  REQUIRE_THROWS_AS(sigma_at(bad, 0), std::invalid_argument);
}

TEST_CASE("score of the identity denoiser is exactly zero", "[guide]") {
  const IdentityDenoiser identity;
  const Camera cam = make_camera(0, 0, 1.0, 60.0, 8, 8);
  Rng rng(1);
  const Image x = random_image(3, 8, 8, -1.0, 1.0);
  const Image score = score_from_denoiser(x, 1.0, identity, cam, rng);
  for (double v : score.data) REQUIRE(v == 0.0);
}

TEST_CASE("score evaluates (D - x) / sigma^2", "[guide]") {
  const Camera cam = make_camera(0, 0, 1.0, 60.0, 4, 4);
  Rng rng(2);

  SECTION("constant offset, hand value") {
    Image x(4, 4, 0.25);
    Image t(4, 4, 0.75);  // t - x = 0.5 everywhere
    const ConstantDenoiser provider(t);
    const Image score = score_from_denoiser(x, 0.5, provider, cam, rng);
    for (double v : score.data) REQUIRE(v == Approx(2.0).epsilon(1e-14));
  }
  SECTION("elementwise oracle on random images") {
    const Image x = random_image(10, 4, 4, -2.0, 2.0);
    const Image t = random_image(11, 4, 4, -2.0, 2.0);
    const double sigma = 0.37;
    const ConstantDenoiser provider(t);
    const Image score = score_from_denoiser(x, sigma, provider, cam, rng);
    for (size_t i = 0; i < x.data.size(); ++i)
      REQUIRE(score.data[i] ==
              Approx((t.data[i] - x.data[i]) / (sigma * sigma))
                  .epsilon(1e-12).margin(1e-12));
  }
  SECTION("sigma must be positive") {
    const IdentityDenoiser identity;
    const Image x(4, 4, 0.0);
    REQUIRE_THROWS_AS(score_from_denoiser(x, 0.0, identity, cam, rng),
                      std::invalid_argument);
  }
  SECTION("score scales as 1/sigma^2") {
    const Image x = random_image(12, 4, 4, -1.0, 1.0);
    const Image t = random_image(13, 4, 4, -1.0, 1.0);
    const ConstantDenoiser provider(t);
    const Image s1 = score_from_denoiser(x, 0.2, provider, cam, rng);
    const Image s2 = score_from_denoiser(x, 0.4, provider, cam, rng);
    for (size_t i = 0; i < x.data.size(); ++i)
      REQUIRE(s2.data[i] == Approx(s1.data[i] / 4.0).epsilon(1e-12).margin(1e-14));
  }
}

TEST_CASE("perturbing a render adds sigma-scaled noise", "[guide]") {
  SECTION("sigma = 0 leaves the image untouched") {
    const Image x = random_image(20, 6, 6, 0.0, 1.0);
    const Image n = random_image(21, 6, 6, -1.0, 1.0);
    const Image y = perturb_render(x, n, 0.0);
    REQUIRE(y.data == x.data);
  }
  SECTION("at x = 0 the output is exactly sigma * n") {
    const Image x(6, 6, 0.0);
    const Image n = random_image(22, 6, 6, -1.0, 1.0);
    const Image y = perturb_render(x, n, 2.0);
    for (size_t i = 0; i < n.data.size(); ++i)
      REQUIRE(y.data[i] == 2.0 * n.data[i]);
  }
  SECTION("shape mismatch is rejected") {
    const Image x(6, 6, 0.0);
    const Image n(4, 4, 0.0);
    REQUIRE_THROWS_AS(perturb_render(x, n, 1.0), std::invalid_argument);
  }
  SECTION("empirical variance scales with sigma squared") {
    const Image x(8, 8, 0.0);
    double sumsq = 0.0;
    int count = 0;
    for (int k = 0; k < 2000; ++k) {
      const Image n = iid_noise_image(8, 8, derive_seed(99, k));
      const Image y = perturb_render(x, n, 2.0);
      for (double v : y.data) {
        sumsq += v * v;
        ++count;
      }
    }
    REQUIRE(sumsq / count == Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("target view denoiser picks the nearest stored camera", "[guide]") {
  std::vector<TargetView> targets;
  for (double az : {0.0, 90.0, 180.0}) {
    TargetView v;
    v.camera = make_camera(az, 0.0, 1.0, 60.0, 4, 4);
    v.image = Image(4, 4, az);
    targets.push_back(v);
  }
  const TargetViewDenoiser provider(targets);
  REQUIRE(provider.nearest_index(make_camera(10, 5, 1.0, 60.0, 4, 4)) == 0);
  REQUIRE(provider.nearest_index(make_camera(100, 0, 1.0, 60.0, 4, 4)) == 1);
  REQUIRE(provider.nearest_index(make_camera(-170, 0, 1.0, 60.0, 4, 4)) == 2);

  SECTION("ties resolve to the lowest stored index") {
    std::vector<TargetView> dup = targets;
    dup.push_back(dup[0]);  // same pose as index 0
    const TargetViewDenoiser p2(dup);
    REQUIRE(p2.nearest_index(make_camera(0, 0, 1.0, 60.0, 4, 4)) == 0);
  }
  SECTION("resolution mismatch is rejected") {
    Rng rng(5);
    const Image x(8, 8, 0.0);
    REQUIRE_THROWS_AS(
        provider.denoise(x, 1.0, make_camera(0, 0, 1, 60, 8, 8), rng),
        std::invalid_argument);
  }
  SECTION("empty target set is rejected") {
    REQUIRE_THROWS_AS(TargetViewDenoiser(std::vector<TargetView>{}),
                      std::invalid_argument);
  }
}

TEST_CASE("distill step with the identity denoiser yields zero gradients",
          "[guide]") {
  const GaussianCloud cloud = make_random_scene(61, 6);
  const NoiseField field = init_noise_cloud(256, 9);
  const Camera cam = make_camera(20, -15, 1.0, 55.0, 16, 16);
  const IdentityDenoiser identity;
  RenderSettings settings;
  settings.tile_size = 8;
  Rng rng(77);
  const DistillResult result =
      distill_step(cloud, cam, field, identity, 0.8, 0.2, settings, rng);
  REQUIRE(result.report.score_norm == 0.0);
  for (size_t i = 0; i < cloud.size(); ++i) {
    REQUIRE(result.gradients.position[i] == Vec3::Zero());
    REQUIRE(result.gradients.color[i] == Vec3::Zero());
    REQUIRE(result.gradients.opacity_logit[i] == 0.0);
  }
}

TEST_CASE("distill step matches a hand-chained oracle on one gaussian",
          "[guide]") {
  GaussianCloud cloud;
  Gaussian3D g;
  g.position = Vec3(0.02, -0.01, 0.0);
  g.log_scale = Vec3::Constant(std::log(0.05));
  g.opacity_logit = logit(0.8);
  g.color = Vec3(0.3, 0.6, 0.9);
  cloud.gaussians.push_back(g);
  cloud.reset_accumulators();

  const Camera cam = make_camera(0, 0, 1.0, 60.0, 16, 16);
  const NoiseField field = init_noise_cloud(256, 71);
  RenderSettings settings;
  settings.tile_size = 8;
  const double sigma = 0.5, rho = 0.25;

  // Target: the same scene with a different color.
  GaussianCloud target_cloud = cloud;
  target_cloud.gaussians[0].color = Vec3(0.9, 0.2, 0.1);
  RenderSettings target_settings = settings;
  const Image target = render(target_cloud, cam, target_settings).color;
  const TargetViewDenoiser provider({TargetView{cam, target}});

  Rng rng(1234);
  Rng replay = rng;  // value copy: replays the same seed draws
  const DistillResult result =
      distill_step(cloud, cam, field, provider, sigma, rho, settings, rng);

  // Reconstruct the exact pipeline by hand.
  RenderSettings fwd_settings = settings;
  fwd_settings.retain_contributions = true;
  const RenderOutput fwd = render(cloud, cam, fwd_settings);
  const std::uint64_t color_seed = replay.next_u64();
  const std::uint64_t iid_seed = replay.next_u64();
  const Image noise = mix_noise(
      structured_noise(field, cam, settings, color_seed), iid_seed, rho);
  const Image y = perturb_render(fwd.color, noise, sigma);
  Image score(16, 16);
  for (size_t i = 0; i < score.data.size(); ++i)
    score.data[i] = (target.data[i] - y.data[i]) / (sigma * sigma);

  // Color gradient: chain rule by hand through the blending weights.
  Vec3 expected_color = Vec3::Zero();
  double dominant_weight = 0.0;
  size_t dominant_pix = 0;
  for (size_t pix = 0; pix < static_cast<size_t>(16 * 16); ++pix) {
    for (std::uint32_t k = 0; k < fwd.contrib_count[pix]; ++k) {
      const auto& c = fwd.contributions[fwd.contrib_offset[pix] + k];
      const Vec3 s(score.data[pix * 3], score.data[pix * 3 + 1],
                   score.data[pix * 3 + 2]);
      expected_color += c.weight * s;
      if (c.weight > dominant_weight) {
        dominant_weight = c.weight;
        dominant_pix = pix;
      }
    }
  }
  REQUIRE((result.gradients.color[0] - expected_color).norm() <
          1e-12 * std::max(1.0, expected_color.norm()));

  // At the gaussian's dominant pixel the per-pixel term is
  // alpha' * (target - y) / sigma^2.
  const Vec3 s(score.data[dominant_pix * 3], score.data[dominant_pix * 3 + 1],
               score.data[dominant_pix * 3 + 2]);
  const Vec3 per_pixel_term = dominant_weight * s;
  REQUIRE(per_pixel_term.norm() > 0.0);
  REQUIRE(result.report.sigma == sigma);
  REQUIRE(result.report.rho == rho);
  REQUIRE(result.report.score_norm ==
          Approx(std::sqrt(image_dot(score, score))).epsilon(1e-12));
}

TEST_CASE("distilled direction decreases the reconstruction error",
          "[guide]") {
  const GaussianCloud cloud = make_random_scene(83, 4);
  GaussianCloud target_cloud = make_random_scene(84, 4);
  const Camera cam = make_camera(35, 10, 1.0, 60.0, 24, 24);
  RenderSettings settings;
  settings.tile_size = 8;
  const Image target = render(target_cloud, cam, settings).color;
  const TargetViewDenoiser provider({TargetView{cam, target}});
  const NoiseField field = init_noise_cloud(256, 3);

  const double sigma = 0.05;
  Rng rng(555);
  const DistillResult result =
      distill_step(cloud, cam, field, provider, sigma, 0.1, settings, rng);

  auto loss = [&](const GaussianCloud& c) {
    const Image img = render(c, cam, settings).color;
    double acc = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) {
      const double d = img.data[i] - target.data[i];
      acc += d * d;
    }
    return acc;
  };

  // Unit direction over all parameters, stepped by 1e-3.
  double norm_sq = 0.0;
  for (size_t i = 0; i < cloud.size(); ++i) {
    norm_sq += result.gradients.position[i].squaredNorm() +
               result.gradients.log_scale[i].squaredNorm() +
               result.gradients.rotation[i].squaredNorm() +
               result.gradients.opacity_logit[i] *
                   result.gradients.opacity_logit[i] +
               result.gradients.color[i].squaredNorm();
  }
  const double step = 1e-3 / std::sqrt(norm_sq);
  GaussianCloud stepped = cloud;
  for (size_t i = 0; i < cloud.size(); ++i) {
    stepped.gaussians[i].position += step * result.gradients.position[i];
    stepped.gaussians[i].log_scale += step * result.gradients.log_scale[i];
    stepped.gaussians[i].rotation += step * result.gradients.rotation[i];
    stepped.gaussians[i].opacity_logit +=
        step * result.gradients.opacity_logit[i];
    stepped.gaussians[i].color += step * result.gradients.color[i];
  }
  REQUIRE(loss(stepped) < loss(cloud));
}

TEST_CASE("providers return finite images on a randomized sweep", "[guide]") {
  const IdentityDenoiser identity;
  std::vector<TargetView> targets;
  targets.push_back({make_camera(0, 0, 1.0, 60.0, 8, 8),
                     random_image(1, 8, 8, 0.0, 1.0)});
  const TargetViewDenoiser target_provider(targets);
  Rng rng(9);
  CameraConfig cam_cfg;
  cam_cfg.width = 8;
  cam_cfg.height = 8;
  for (int i = 0; i < 50; ++i) {
    const Camera cam = sample_camera(rng, cam_cfg);
    const Image x = random_image(derive_seed(100, i), 8, 8, -10.0, 10.0);
    for (const ScoreProvider* p :
         {static_cast<const ScoreProvider*>(&identity),
          static_cast<const ScoreProvider*>(&target_provider)}) {
      const Image d = p->denoise(x, 0.5, cam, rng);
      for (double v : d.data) REQUIRE(std::isfinite(v));
    }
  }
}

TEST_CASE("distill step propagates non-finite denoiser output", "[guide]") {
  const GaussianCloud cloud = make_random_scene(91, 3);
  const NoiseField field = init_noise_cloud(128, 4);
  const Camera cam = make_camera(0, 0, 1.0, 60.0, 8, 8);
  const NanDenoiser provider;
  RenderSettings settings;
  Rng rng(11);
  const DistillResult result =
      distill_step(cloud, cam, field, provider, 0.5, 0.0, settings, rng);
  REQUIRE_FALSE(result.gradients.all_finite());
}

TEST_CASE("small-sigma distillation matches the photometric-loss gradient",
          "[guide]") {
  // With a stored-view denoiser and the camera pinned to that view,
  // -sigma^2 * distill gradient -> d(1/2 ||x - t||^2)/d(theta) as sigma -> 0.
  const GaussianCloud cloud = make_random_scene(120, 5);
  const GaussianCloud target_cloud = make_random_scene(121, 5);
  const Camera cam = make_camera(-25, 20, 1.0, 58.0, 16, 16);
  RenderSettings settings;
  settings.tile_size = 8;
  settings.retain_contributions = true;
  const Image target = render(target_cloud, cam, settings).color;
  const TargetViewDenoiser provider({TargetView{cam, target}});
  const NoiseField field = init_noise_cloud(128, 6);

  const double sigma = 1e-8;
  Rng rng(808);
  const DistillResult distill =
      distill_step(cloud, cam, field, provider, sigma, 0.3, settings, rng);

  const RenderOutput fwd = render(cloud, cam, settings);
  Image residual(16, 16);
  for (size_t i = 0; i < residual.data.size(); ++i)
    residual.data[i] = fwd.color.data[i] - target.data[i];
  const CloudGradients loss_grad =
      render_backward(cloud, cam, settings, residual, fwd);

  double num = 0.0, den = 0.0;
  auto accumulate = [&](double a, double b) {
    const double scaled = -sigma * sigma * a;
    num += (scaled - b) * (scaled - b);
    den += b * b;
  };
  for (size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      accumulate(distill.gradients.position[i][k], loss_grad.position[i][k]);
      accumulate(distill.gradients.log_scale[i][k], loss_grad.log_scale[i][k]);
      accumulate(distill.gradients.color[i][k], loss_grad.color[i][k]);
    }
    for (int k = 0; k < 4; ++k)
      accumulate(distill.gradients.rotation[i][k], loss_grad.rotation[i][k]);
    accumulate(distill.gradients.opacity_logit[i], loss_grad.opacity_logit[i]);
  }
  REQUIRE(std::sqrt(num / den) < 1e-6);
}
