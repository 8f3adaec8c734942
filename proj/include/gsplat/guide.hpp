// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "gsplat/image.hpp"
#include "gsplat/noise.hpp"
#include "gsplat/raster.hpp"
#include "gsplat/raster_backward.hpp"
#include "gsplat/rng.hpp"
#include "gsplat/scene.hpp"

namespace gsplat {

// Noise-level schedule for the guidance loop, geometric from sigma_max down
// to sigma_min. Endpoints are returned exactly.
struct SigmaSchedule {
  double sigma_max = 1.0;
  double sigma_min = 0.02;
  std::int64_t total_steps = 2000;

  void validate() const {
    if (!(sigma_min > 0.0) || sigma_max < sigma_min)
      throw std::invalid_argument(
          "SigmaSchedule: need sigma_max >= sigma_min > 0");
    if (total_steps <= 0)
      throw std::invalid_argument("SigmaSchedule: total_steps must be > 0");
  }
};

inline double sigma_at(const SigmaSchedule& schedule, std::int64_t step) {
  schedule.validate();
  if (step < 0 || step > schedule.total_steps)
    throw std::invalid_argument("sigma_at: step out of range");
  if (step == 0) return schedule.sigma_max;
  if (step == schedule.total_steps) return schedule.sigma_min;
  const double t = static_cast<double>(step) /
                   static_cast<double>(schedule.total_steps);
  return schedule.sigma_max *
         std::pow(schedule.sigma_min / schedule.sigma_max, t);
}

// Denoiser contract: estimate the clean image from a noisy one at level
// sigma. Implementations must be safe for concurrent read-only use.
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual Image denoise(const Image& x, double sigma, const Camera& camera,
                        Rng& rng) const = 0;
};

// D(x; sigma) = x. Produces an exactly zero score; useful as a fixed-point
// oracle for the whole loop.
class IdentityDenoiser final : public ScoreProvider {
 public:
  Image denoise(const Image& x, double /*sigma*/, const Camera& /*camera*/,
                Rng& /*rng*/) const override {
    return x;
  }
};

struct TargetView {
  Camera camera;
  Image image;
};

// Reconstruction denoiser: returns the stored target image whose camera is
// closest on the unit sphere (great-circle distance over azimuth/elevation),
// ties broken by lowest stored index.
class TargetViewDenoiser final : public ScoreProvider {
 public:
  explicit TargetViewDenoiser(std::vector<TargetView> targets)
      : targets_(std::move(targets)) {
    if (targets_.empty())
      throw std::invalid_argument("TargetViewDenoiser: no target views");
  }

  const std::vector<TargetView>& targets() const { return targets_; }

  size_t nearest_index(const Camera& camera) const {
    const Vec3 dir =
        direction_from_angles(camera.azimuth_deg, camera.elevation_deg);
    size_t best = 0;
    double best_dot = -2.0;
    for (size_t i = 0; i < targets_.size(); ++i) {
      const Vec3 d = direction_from_angles(targets_[i].camera.azimuth_deg,
                                           targets_[i].camera.elevation_deg);
      const double dot = dir.dot(d);
      if (dot > best_dot) {
        best_dot = dot;
        best = i;
      }
    }
    return best;
  }

  Image denoise(const Image& x, double /*sigma*/, const Camera& camera,
                Rng& /*rng*/) const override {
    const Image& target = targets_[nearest_index(camera)].image;
    if (target.width != x.width || target.height != x.height)
      throw std::invalid_argument(
          "TargetViewDenoiser: target resolution mismatch");
    return target;
  }

 private:
  std::vector<TargetView> targets_;
};

// (D(x; sigma) - x) / sigma^2.
inline Image score_from_denoiser(const Image& x, double sigma,
                                 const ScoreProvider& provider,
                                 const Camera& camera, Rng& rng) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("score_from_denoiser: sigma must be > 0");
  const Image d = provider.denoise(x, sigma, camera, rng);
  if (d.width != x.width || d.height != x.height)
    throw std::invalid_argument("score_from_denoiser: provider shape mismatch");
  Image score(x.width, x.height);
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (size_t i = 0; i < x.data.size(); ++i)
    score.data[i] = (d.data[i] - x.data[i]) * inv_s2;
  return score;
}

// x + sigma * n, the denoiser input.
inline Image perturb_render(const Image& x, const Image& noise, double sigma) {
  if (noise.width != x.width || noise.height != x.height)
    throw std::invalid_argument("perturb_render: shape mismatch");
  Image out(x.width, x.height);
  for (size_t i = 0; i < x.data.size(); ++i)
    out.data[i] = x.data[i] + sigma * noise.data[i];
  return out;
}

struct GuidanceStepReport {
  double sigma = 0.0;
  double rho = 0.0;
  double score_norm = 0.0;
  Camera camera;
  double elapsed_seconds = 0.0;
};

struct DistillResult {
  CloudGradients gradients;  // ascent direction on the rendered log-density
  GuidanceStepReport report;
};

// One single-camera sample of the 3D score: render, perturb with the mixed
// noise, evaluate the 2D score at the perturbed input, and pull it back
// through the renderer. Consumes exactly two seeds from rng (structured
// color seed, iid seed) before handing rng to the provider, so the stream
// layout does not depend on rho. When color_seed_override is set the
// structured colors come from it instead of the per-call draw (the trainer's
// fixed-color policy); the rng consumption stays the same either way.
inline DistillResult distill_step(const GaussianCloud& cloud,
                                  const Camera& camera,
                                  const NoiseField& field,
                                  const ScoreProvider& provider, double sigma,
                                  double rho, const RenderSettings& settings,
                                  Rng& rng,
                                  const std::uint64_t* color_seed_override =
                                      nullptr) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("distill_step: sigma must be > 0");
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("distill_step: rho must be in [0, 1]");
  const auto t0 = std::chrono::steady_clock::now();

  RenderSettings fwd_settings = settings;
  fwd_settings.retain_contributions = true;
  const RenderOutput fwd = render(cloud, camera, fwd_settings);

  std::uint64_t color_seed = rng.next_u64();
  const std::uint64_t iid_seed = rng.next_u64();
  if (color_seed_override != nullptr) color_seed = *color_seed_override;
  Image noise;
  if (rho == 0.0) {
    // Mixing weight sqrt(rho) is exactly zero; skip the structured render.
    noise = iid_noise_image(camera.width, camera.height, iid_seed);
  } else {
    noise = mix_noise(structured_noise(field, camera, settings, color_seed),
                      iid_seed, rho);
  }

  const Image perturbed = perturb_render(fwd.color, noise, sigma);
  const Image score =
      score_from_denoiser(perturbed, sigma, provider, camera, rng);

  DistillResult result;
  result.gradients =
      render_backward(cloud, camera, fwd_settings, score, fwd);

  result.report.sigma = sigma;
  result.report.rho = rho;
  result.report.score_norm = std::sqrt(image_dot(score, score));
  result.report.camera = camera;
  result.report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

}  // namespace gsplat
