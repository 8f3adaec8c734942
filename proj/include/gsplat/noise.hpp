// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "gsplat/raster.hpp"
#include "gsplat/rng.hpp"
#include "gsplat/scene.hpp"

namespace gsplat {

// Pixels whose closed-form variance falls below this are treated as
// uncovered and filled with i.i.d. draws instead of standardized splats.
inline constexpr double kVarianceFloor = 1e-4;

inline constexpr std::uint64_t kStreamNoiseFill = 11;

// A frozen random gaussian cloud used as the shared noise source. Geometry
// never changes after creation; colors change only through resample_colors.
struct NoiseField {
  GaussianCloud cloud;
  std::uint64_t color_seed = 0;

  size_t size() const { return cloud.size(); }
};

struct NoiseImage {
  Image data;
  std::vector<std::uint8_t> mask;  // 1 = covered (standardized splat value)
  double rho_used = 1.0;
};

inline std::vector<Vec3> noise_colors_from_seed(size_t count,
                                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, kStreamNoiseColor));
  std::vector<Vec3> colors(count);
  for (size_t i = 0; i < count; ++i)
    colors[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
  return colors;
}

// Positions sampled in spherical coordinates (radius U(-0.5, 0.5), azimuth
// U(-180, 180), elevation U(-45, 45)), standard-normal colors, fixed 0.6
// opacity, isotropic scale at twice the mean nearest-neighbor distance.
inline NoiseField init_noise_cloud(int count, std::uint64_t seed) {
  if (count < 1)
    throw std::invalid_argument("init_noise_cloud: count must be >= 1");

  Rng rng(derive_seed(seed, kStreamNoiseGeometry));
  std::vector<Vec3> positions(count);
  for (int i = 0; i < count; ++i) {
    const double radius = rng.uniform(-0.5, 0.5);
    const double az = rng.uniform(-180.0, 180.0);
    const double el = rng.uniform(-45.0, 45.0);
    positions[i] = radius * direction_from_angles(az, el);
  }

  double scale = 0.1;  // count == 1 fallback
  if (count > 1) {
    const auto knn = knn_distances(positions, 1);
    double mean = 0.0;
    for (const auto& d : knn) mean += d[0];
    mean /= static_cast<double>(count);
    scale = 2.0 * std::max(mean, 1e-9);
  }

  NoiseField field;
  field.color_seed = seed;
  field.cloud.gaussians.resize(count);
  const auto colors = noise_colors_from_seed(count, seed);
  for (int i = 0; i < count; ++i) {
    Gaussian3D& g = field.cloud.gaussians[i];
    g.position = positions[i];
    g.log_scale = Vec3::Constant(std::log(scale));
    g.rotation = Vec4(1, 0, 0, 0);
    g.opacity_logit = logit(0.6);
    g.color = colors[i];
  }
  field.cloud.reset_accumulators();
  return field;
}

inline void resample_colors(NoiseField& field, std::uint64_t seed) {
  const auto colors = noise_colors_from_seed(field.size(), seed);
  for (size_t i = 0; i < field.size(); ++i)
    field.cloud.gaussians[i].color = colors[i];
  field.color_seed = seed;
}

// Closed-form per-pixel variance of the splatted noise: the sum over the
// depth-sorted contributors of alpha'^2 times the squared transmittance in
// front of them. Depends on geometry and opacities only.
inline Map variance_map(const NoiseField& field, const Camera& camera,
                        const RenderSettings& settings) {
  RenderSettings s = settings;
  s.background = Vec3::Zero();
  s.retain_contributions = false;
  return render(field.cloud, camera, s).variance;
}

// Bit-level hash of the pose so fallback pixels are identical for identical
// cameras but independent across different ones.
inline std::uint64_t camera_pose_hash(const Camera& camera) {
  auto bits = [](double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof(u));
    return u;
  };
  std::uint64_t h = 0x5AFE5EEDu;
  h = mix_seed(h ^ bits(camera.azimuth_deg));
  h = mix_seed(h ^ bits(camera.elevation_deg));
  h = mix_seed(h ^ bits(camera.radius));
  h = mix_seed(h ^ bits(camera.fov_y_deg));
  h = mix_seed(h ^ (static_cast<std::uint64_t>(camera.width) << 32 |
                    static_cast<std::uint64_t>(camera.height)));
  return h;
}

// I.i.d. standard-normal fill for one pixel, derived from the seed and the
// pixel index so coverage pattern changes cannot shift other pixels.
inline Vec3 iid_fill_value(std::uint64_t seed, size_t pixel_index) {
  Rng rng(derive_seed(derive_seed(seed, kStreamNoiseFill), pixel_index));
  return Vec3(rng.normal(), rng.normal(), rng.normal());
}

// Render the noise cloud (colors drawn from color_seed, zero background) and
// standardize covered pixels to unit variance; uncovered pixels get i.i.d.
// draws and a false mask bit.
inline NoiseImage structured_noise(const NoiseField& field,
                                   const Camera& camera,
                                   const RenderSettings& settings,
                                   std::uint64_t color_seed) {
  GaussianCloud cloud = field.cloud;
  const auto colors = noise_colors_from_seed(cloud.size(), color_seed);
  for (size_t i = 0; i < cloud.size(); ++i)
    cloud.gaussians[i].color = colors[i];

  RenderSettings s = settings;
  s.background = Vec3::Zero();
  s.retain_contributions = false;
  const RenderOutput out = render(cloud, camera, s);

  NoiseImage result;
  result.data = Image(camera.width, camera.height);
  result.mask.assign(static_cast<size_t>(camera.width) * camera.height, 0);
  result.rho_used = 1.0;
  const std::uint64_t fill_seed = color_seed ^ camera_pose_hash(camera);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const size_t pix = static_cast<size_t>(y) * camera.width + x;
      const double var = out.variance.at(x, y);
      if (var >= kVarianceFloor) {
        const double inv_sd = 1.0 / std::sqrt(var);
        result.data.set(x, y, out.color.at(x, y) * inv_sd);
        result.mask[pix] = 1;
      } else {
        result.data.set(x, y, iid_fill_value(fill_seed, pix));
      }
    }
  }
  return result;
}

inline Image iid_noise_image(int width, int height, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kStreamIid));
  Image img(width, height);
  for (double& v : img.data) v = rng.normal();
  return img;
}

// Variance-preserving mixture sqrt(rho) * structured + sqrt(1-rho) * iid.
// rho = 0 reproduces the i.i.d. field exactly; rho = 1 the structured one.
inline Image mix_noise(const NoiseImage& structured, std::uint64_t iid_seed,
                       double rho) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("mix_noise: rho must be in [0, 1]");
  const Image iid =
      iid_noise_image(structured.data.width, structured.data.height, iid_seed);
  const double w_s = std::sqrt(rho);
  const double w_i = std::sqrt(1.0 - rho);
  Image out(structured.data.width, structured.data.height);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = w_s * structured.data.data[i] + w_i * iid.data[i];
  return out;
}

// Structured-noise share of the denoiser input, interpolated linearly from
// rho_start at step 0 to rho_end at the final step. Endpoints are exact.
inline double mix_schedule(std::int64_t step, std::int64_t total_steps,
                           double rho_start = 0.3, double rho_end = 0.05) {
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("mix_schedule: step out of range");
  if (total_steps <= 0) return rho_end;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return rho_start * (1.0 - t) + rho_end * t;
}

}  // namespace gsplat
