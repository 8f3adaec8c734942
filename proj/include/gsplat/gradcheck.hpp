// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gsplat/raster.hpp"
#include "gsplat/raster_backward.hpp"
#include "gsplat/rng.hpp"
#include "gsplat/scene.hpp"
#include "gsplat/vgs.hpp"

namespace gsplat {

// Random small scene for finite-difference checks. Parameters stay away
// from the alpha clamp and cutoff boundaries so central differences sample
// a smooth neighborhood.
inline GaussianCloud make_random_scene(std::uint64_t seed, int count,
                                       double extent = 0.3) {
  Rng rng(mix_seed(seed));
  GaussianCloud cloud;
  cloud.gaussians.resize(count);
  for (int i = 0; i < count; ++i) {
    Gaussian3D& g = cloud.gaussians[i];
    g.position = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                      rng.uniform(-extent, extent));
    g.log_scale = Vec3(rng.uniform(std::log(0.09), std::log(0.25)),
                       rng.uniform(std::log(0.09), std::log(0.25)),
                       rng.uniform(std::log(0.09), std::log(0.25)));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = q / q.norm();
    g.opacity_logit = logit(rng.uniform(0.2, 0.85));
    g.color = Vec3(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
                   rng.uniform(0.05, 0.95));
  }
  cloud.reset_accumulators();
  return cloud;
}

inline Image make_random_cotangent(std::uint64_t seed, int width, int height) {
  Rng rng(mix_seed(seed));
  Image img(width, height);
  for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
  return img;
}

inline double render_loss(const GaussianCloud& cloud, const Camera& camera,
                          const RenderSettings& settings,
                          const Image& cotangent) {
  RenderSettings s = settings;
  s.retain_contributions = false;
  return image_dot(cotangent, render(cloud, camera, s).color);
}

// Central finite differences of <cotangent, render(cloud)> in every stored
// parameter. Forward renders only; independent of the analytic backward.
inline CloudGradients finite_difference_gradients(
    const GaussianCloud& cloud, const Camera& camera,
    const RenderSettings& settings, const Image& cotangent, double h) {
  CloudGradients fd = CloudGradients::zeros(cloud.size());
  GaussianCloud work = cloud;
  auto probe = [&](double* slot) {
    const double saved = *slot;
    *slot = saved + h;
    const double plus = render_loss(work, camera, settings, cotangent);
    *slot = saved - h;
    const double minus = render_loss(work, camera, settings, cotangent);
    *slot = saved;
    return (plus - minus) / (2.0 * h);
  };
  for (size_t i = 0; i < cloud.size(); ++i) {
    Gaussian3D& g = work.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      fd.position[i][k] = probe(&g.position[k]);
      fd.log_scale[i][k] = probe(&g.log_scale[k]);
      fd.color[i][k] = probe(&g.color[k]);
    }
    for (int k = 0; k < 4; ++k) fd.rotation[i][k] = probe(&g.rotation[k]);
    fd.opacity_logit[i] = probe(&g.opacity_logit);
  }
  return fd;
}

// Settings for finite-difference runs: the extent cutoff is pushed out far
// enough that the falloff underflows to an exact zero before it is cut, and
// the alpha cutoff jump is below FD resolution, so the rendered function is
// smooth around every probe.
inline RenderSettings fd_safe_settings() {
  RenderSettings s;
  s.background = Vec3(0.2, 0.3, 0.4);
  s.tile_size = 8;
  s.retain_contributions = true;
  s.extent_sigma = 30.0;
  s.alpha_cutoff = 1e-12;
  return s;
}

inline double relative_error(double analytic, double reference) {
  const double denom =
      std::max({std::abs(analytic), std::abs(reference), 1e-6});
  return std::abs(analytic - reference) / denom;
}

struct GradCheckReport {
  double max_err_position = 0.0;
  double max_err_log_scale = 0.0;
  double max_err_rotation = 0.0;
  double max_err_opacity = 0.0;
  double max_err_color = 0.0;
  int scenes = 0;

  double max_err() const {
    return std::max({max_err_position, max_err_log_scale, max_err_rotation,
                     max_err_opacity, max_err_color});
  }

  bool passed(double tolerance) const { return max_err() < tolerance; }

  std::string to_string() const {
    std::ostringstream os;
    os << "gradcheck over " << scenes << " scenes\n"
       << "  position      max rel err " << max_err_position << "\n"
       << "  log_scale     max rel err " << max_err_log_scale << "\n"
       << "  rotation      max rel err " << max_err_rotation << "\n"
       << "  opacity_logit max rel err " << max_err_opacity << "\n"
       << "  color         max rel err " << max_err_color << "\n";
    return os.str();
  }
};

inline void accumulate_errors(GradCheckReport& report,
                              const CloudGradients& analytic,
                              const CloudGradients& fd) {
  for (size_t i = 0; i < analytic.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      report.max_err_position =
          std::max(report.max_err_position,
                   relative_error(analytic.position[i][k], fd.position[i][k]));
      report.max_err_log_scale = std::max(
          report.max_err_log_scale,
          relative_error(analytic.log_scale[i][k], fd.log_scale[i][k]));
      report.max_err_color = std::max(
          report.max_err_color,
          relative_error(analytic.color[i][k], fd.color[i][k]));
    }
    for (int k = 0; k < 4; ++k)
      report.max_err_rotation =
          std::max(report.max_err_rotation,
                   relative_error(analytic.rotation[i][k], fd.rotation[i][k]));
    report.max_err_opacity =
        std::max(report.max_err_opacity,
                 relative_error(analytic.opacity_logit[i], fd.opacity_logit[i]));
  }
}

struct GradCheckOptions {
  int scenes = 20;
  int gaussian_count = 8;
  int resolution = 16;
  double fd_step = 1e-4;
  std::uint64_t seed = 20240501;
};

// Analytic render_backward vs central finite differences on randomized
// small scenes, each from its own camera.
inline GradCheckReport gradcheck_rasterizer(const GradCheckOptions& opt) {
  GradCheckReport report;
  report.scenes = opt.scenes;
  for (int s = 0; s < opt.scenes; ++s) {
    const std::uint64_t scene_seed = derive_seed(opt.seed, s);
    const GaussianCloud cloud =
        make_random_scene(scene_seed, opt.gaussian_count);
    Rng cam_rng(derive_seed(scene_seed, 77));
    const Camera camera =
        make_camera(cam_rng.uniform(-180.0, 180.0), cam_rng.uniform(-45.0, 45.0),
                    1.0, cam_rng.uniform(40.0, 70.0), opt.resolution,
                    opt.resolution);
    const RenderSettings settings = fd_safe_settings();
    const Image cotangent = make_random_cotangent(derive_seed(scene_seed, 78),
                                                  opt.resolution, opt.resolution);

    const RenderOutput fwd = render(cloud, camera, settings);
    const CloudGradients analytic =
        render_backward(cloud, camera, settings, cotangent, fwd);
    const CloudGradients fd = finite_difference_gradients(
        cloud, camera, settings, cotangent, opt.fd_step);
    accumulate_errors(report, analytic, fd);
  }
  return report;
}

// Pass-through check: with frozen perturbation noise, the analytic gradient
// at theta' equals the finite difference of loss(theta + sigma*gamma*eps0)
// in theta.
inline GradCheckReport gradcheck_vgs_passthrough(const GradCheckOptions& opt,
                                                 double sigma = 0.5,
                                                 double gamma = 0.15) {
  GradCheckReport report;
  report.scenes = opt.scenes;
  VgsConfig vgs;
  vgs.gamma = gamma;
  for (int s = 0; s < opt.scenes; ++s) {
    const std::uint64_t scene_seed = derive_seed(opt.seed ^ 0xABCD, s);
    const GaussianCloud cloud =
        make_random_scene(scene_seed, opt.gaussian_count);
    Rng cam_rng(derive_seed(scene_seed, 77));
    const Camera camera =
        make_camera(cam_rng.uniform(-180.0, 180.0), cam_rng.uniform(-45.0, 45.0),
                    1.0, cam_rng.uniform(40.0, 70.0), opt.resolution,
                    opt.resolution);
    const RenderSettings settings = fd_safe_settings();
    const Image cotangent = make_random_cotangent(derive_seed(scene_seed, 78),
                                                  opt.resolution, opt.resolution);
    const std::uint64_t eps_seed = derive_seed(scene_seed, 79);

    // Analytic gradient at the perturbed parameters, passed through.
    const PerturbedCloud perturbed = perturb(cloud, sigma, vgs, eps_seed);
    const RenderOutput fwd = render(perturbed.cloud, camera, settings);
    const CloudGradients analytic = passthrough_gradients(
        render_backward(perturbed.cloud, camera, settings, cotangent, fwd),
        cloud.size());

    // Finite differences in the unperturbed parameters with eps frozen.
    CloudGradients fd = CloudGradients::zeros(cloud.size());
    GaussianCloud work = cloud;
    auto loss_at = [&]() {
      const PerturbedCloud p = perturb(work, sigma, vgs, eps_seed);
      return render_loss(p.cloud, camera, settings, cotangent);
    };
    auto probe = [&](double* slot) {
      const double saved = *slot;
      *slot = saved + opt.fd_step;
      const double plus = loss_at();
      *slot = saved - opt.fd_step;
      const double minus = loss_at();
      *slot = saved;
      return (plus - minus) / (2.0 * opt.fd_step);
    };
    for (size_t i = 0; i < cloud.size(); ++i) {
      Gaussian3D& g = work.gaussians[i];
      for (int k = 0; k < 3; ++k) {
        fd.position[i][k] = probe(&g.position[k]);
        fd.log_scale[i][k] = probe(&g.log_scale[k]);
        fd.color[i][k] = probe(&g.color[k]);
      }
      for (int k = 0; k < 4; ++k) fd.rotation[i][k] = probe(&g.rotation[k]);
      fd.opacity_logit[i] = probe(&g.opacity_logit);
    }
    accumulate_errors(report, analytic, fd);
  }
  return report;
}

}  // namespace gsplat
