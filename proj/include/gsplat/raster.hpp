// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gsplat/image.hpp"
#include "gsplat/scene.hpp"

namespace gsplat {

// Anti-aliasing floor added to the projected covariance diagonal before
// inversion; keeps sub-pixel splats from going singular.
inline constexpr double kCovRegularization = 0.3;  // pixel^2
inline constexpr double kNearPlane = 0.01;
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kTransmittanceFloor = 1e-4;

struct Projected2D {
  Vec2 mean = Vec2::Zero();      // pixel coordinates
  Mat2 cov = Mat2::Identity();   // regularized projected covariance
  double depth = 0.0;            // view-space z
  double opacity = 0.0;          // activated
  Vec3 color = Vec3::Zero();
  std::int32_t source_index = -1;
  bool culled = false;
};

struct PixelContribution {
  std::int32_t source = -1;
  double alpha = 0.0;   // alpha' at this pixel
  double weight = 0.0;  // alpha' * transmittance before it
};

struct RenderOutput {
  Image color;
  Map alpha;          // accumulated opacity, 1 - final transmittance
  Map variance;       // sum of squared composited weights
  Map transmittance;  // final transmittance (exact, not recovered from alpha)
  // Flattened front-to-back contributor lists, present only when
  // RenderSettings::retain_contributions was set.
  bool has_contributions = false;
  std::vector<PixelContribution> contributions;
  std::vector<std::uint32_t> contrib_offset;
  std::vector<std::uint32_t> contrib_count;
};

// Sigma = R diag(s)^2 R^T. Expects activated values: s > 0 and q unit-norm
// (within 1e-6; renormalized internally for the arithmetic).
inline Mat3 quaternion_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Mat3 build_covariance(const Vec3& scale, const Vec4& quat) {
  if ((scale.array() <= 0.0).any())
    throw std::invalid_argument("build_covariance: scale must be positive");
  const double norm = quat.norm();
  if (std::abs(norm - 1.0) > 1e-6)
    throw std::invalid_argument("build_covariance: quaternion not unit-norm");
  const Mat3 r = quaternion_to_rotation(quat / norm);
  const Mat3 m = r * scale.asDiagonal();
  Mat3 cov = m * m.transpose();
  return 0.5 * (cov + cov.transpose());
}

// Sigma' = J W Sigma W^T J^T with W the view rotation block. No
// regularization here; project_gaussian adds the floor.
inline Mat2 project_covariance(const Mat3& cov3, const Mat3& view_rot,
                               const Mat23& jacobian) {
  const Mat23 b = jacobian * view_rot;
  Mat2 cov = b * cov3 * b.transpose();
  return 0.5 * (cov + cov.transpose());
}

inline Projected2D project_gaussian(const Mat3& cov3, const Vec3& position,
                                    const Camera& camera) {
  Projected2D out;
  const Vec3 t = camera.to_view(position);
  out.depth = t.z();
  if (t.z() <= kNearPlane) {
    out.culled = true;
    return out;
  }
  out.mean = camera.project_view(t);
  out.cov = project_covariance(cov3, camera.view_rotation,
                               camera.projection_jacobian(t));
  out.cov(0, 0) += kCovRegularization;
  out.cov(1, 1) += kCovRegularization;
  return out;
}

// alpha'(U) = alpha * exp(-1/2 d^T Sigma'^-1 d), clamped to [0, 0.99];
// zero outside the extent_sigma ellipse or below alpha_cutoff.
inline double pixel_alpha(const Projected2D& proj, const Vec2& pixel,
                          const RenderSettings& settings) {
  if (proj.culled)
    throw std::invalid_argument("pixel_alpha: gaussian is culled");
  const Vec2 d = proj.mean - pixel;
  const double a = proj.cov(0, 0), b = proj.cov(0, 1), c = proj.cov(1, 1);
  const double det = a * c - b * b;
  if (det <= 0.0)
    throw std::logic_error("pixel_alpha: singular projected covariance");
  const double inv_det = 1.0 / det;
  const double q = (c * d.x() * d.x() - 2.0 * b * d.x() * d.y() +
                    a * d.y() * d.y()) *
                   inv_det;
  if (q > settings.extent_sigma * settings.extent_sigma) return 0.0;
  double alpha = proj.opacity * std::exp(-0.5 * q);
  if (alpha < settings.alpha_cutoff) return 0.0;
  return std::min(alpha, kAlphaClamp);
}

// Front-to-back alpha blending over depth-sorted contributions, with early
// termination once the transmittance drops below the floor.
inline Vec3 composite(const std::vector<std::pair<double, Vec3>>& contributions,
                      const Vec3& background) {
  Vec3 color = Vec3::Zero();
  double t = 1.0;
  for (const auto& [alpha, c] : contributions) {
    color += (alpha * t) * c;
    t *= (1.0 - alpha);
    if (t < kTransmittanceFloor) break;
  }
  return color + t * background;
}

namespace detail {

struct TileWorkspace {
  std::vector<PixelContribution> contributions;
  std::vector<std::uint32_t> per_pixel_count;  // tile-local, row-major
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Largest eigenvalue of a symmetric 2x2.
inline double max_eigenvalue(const Mat2& m) {
  const double mid = 0.5 * (m(0, 0) + m(1, 1));
  const double half = 0.5 * (m(0, 0) - m(1, 1));
  return mid + std::sqrt(half * half + m(0, 1) * m(0, 1));
}

}  // namespace detail

inline std::vector<Projected2D> project_cloud(const GaussianCloud& cloud,
                                              const Camera& camera) {
  std::vector<Projected2D> projected(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian3D& g = cloud.gaussians[i];
    const Mat3 cov3 = build_covariance(g.activated_scale(), g.unit_rotation());
    Projected2D p = project_gaussian(cov3, g.position, camera);
    p.opacity = g.activated_opacity();
    p.color = g.color;
    p.source_index = static_cast<std::int32_t>(i);
    projected[i] = p;
  }
  return projected;
}

inline RenderOutput render(const GaussianCloud& cloud, const Camera& camera,
                           const RenderSettings& settings) {
  settings.validate();
  if (camera.width <= 0 || camera.height <= 0)
    throw std::invalid_argument("render: zero-resolution camera");

  const int w = camera.width, h = camera.height;
  RenderOutput out;
  out.color = Image(w, h);
  out.alpha = Map(w, h);
  out.variance = Map(w, h);
  out.transmittance = Map(w, h, 1.0);

  const std::vector<Projected2D> projected = project_cloud(cloud, camera);

  // Bin gaussians to tiles by the extent_sigma bounding rectangle of the
  // regularized footprint. Half a pixel of margin covers pixel centers.
  const int ts = settings.tile_size;
  const int tiles_x = (w + ts - 1) / ts;
  const int tiles_y = (h + ts - 1) / ts;
  const int tile_count = tiles_x * tiles_y;
  std::vector<std::vector<std::int32_t>> tile_bins(tile_count);
  for (const Projected2D& p : projected) {
    if (p.culled) continue;
    const double r =
        settings.extent_sigma * std::sqrt(detail::max_eigenvalue(p.cov)) + 0.5;
    const int x0 = std::max(0, static_cast<int>(std::floor(p.mean.x() - r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(p.mean.x() + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.mean.y() - r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(p.mean.y() + r)));
    if (x0 > x1 || y0 > y1 || p.mean.x() + r < 0 || p.mean.y() + r < 0 ||
        p.mean.x() - r > w || p.mean.y() - r > h)
      continue;
    for (int ty = y0 / ts; ty <= y1 / ts; ++ty)
      for (int tx = x0 / ts; tx <= x1 / ts; ++tx)
        tile_bins[ty * tiles_x + tx].push_back(p.source_index);
  }

  // Front-to-back order: ascending depth, ties broken by source index so the
  // result never depends on bin construction order.
  for (auto& bin : tile_bins) {
    std::sort(bin.begin(), bin.end(), [&](std::int32_t a, std::int32_t b) {
      if (projected[a].depth != projected[b].depth)
        return projected[a].depth < projected[b].depth;
      return a < b;
    });
  }

  std::vector<detail::TileWorkspace> workspaces(
      settings.retain_contributions ? tile_count : 0);

  auto process_tile = [&](int tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int px0 = tx * ts, py0 = ty * ts;
    const int px1 = std::min(px0 + ts, w), py1 = std::min(py0 + ts, h);
    detail::TileWorkspace* ws = nullptr;
    if (settings.retain_contributions) {
      ws = &workspaces[tile];
      ws->per_pixel_count.assign(
          static_cast<size_t>(px1 - px0) * (py1 - py0), 0);
    }
    const auto& bin = tile_bins[tile];
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const Vec2 pixel(px + 0.5, py + 0.5);
        Vec3 color = Vec3::Zero();
        double t = 1.0;
        double var = 0.0;
        std::uint32_t used = 0;
        for (std::int32_t idx : bin) {
          const Projected2D& p = projected[idx];
          const double a = pixel_alpha(p, pixel, settings);
          if (a <= 0.0) continue;
          const double weight = a * t;
          color += weight * p.color;
          var += weight * weight;
          if (ws) {
            ws->contributions.push_back({idx, a, weight});
            ++used;
          }
          t *= (1.0 - a);
          if (t < kTransmittanceFloor) break;
        }
        out.color.set(px, py, color + t * settings.background);
        out.alpha.at(px, py) = 1.0 - t;
        out.variance.at(px, py) = var;
        out.transmittance.at(px, py) = t;
        if (ws)
          ws->per_pixel_count[static_cast<size_t>(py - py0) * (px1 - px0) +
                              (px - px0)] = used;
      }
    }
  };

  const int threads = std::min(detail::resolve_threads(settings.threads),
                               std::max(1, tile_count));
  if (threads <= 1 || tile_count <= 1) {
    for (int tile = 0; tile < tile_count; ++tile) process_tile(tile);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int k = 0; k < threads; ++k) {
      pool.emplace_back([&, k]() {
        for (int tile = k; tile < tile_count; tile += threads)
          process_tile(tile);
      });
    }
    for (auto& th : pool) th.join();
  }

  if (settings.retain_contributions) {
    // Stitch per-tile lists into one flat array in tile order; the layout is
    // therefore independent of how many threads ran.
    out.has_contributions = true;
    size_t total = 0;
    for (const auto& ws : workspaces) total += ws.contributions.size();
    out.contributions.reserve(total);
    out.contrib_offset.assign(static_cast<size_t>(w) * h, 0);
    out.contrib_count.assign(static_cast<size_t>(w) * h, 0);
    for (int tile = 0; tile < tile_count; ++tile) {
      const int tx = tile % tiles_x, ty = tile / tiles_x;
      const int px0 = tx * ts, py0 = ty * ts;
      const int px1 = std::min(px0 + ts, w), py1 = std::min(py0 + ts, h);
      const auto& ws = workspaces[tile];
      size_t cursor = out.contributions.size();
      out.contributions.insert(out.contributions.end(),
                               ws.contributions.begin(),
                               ws.contributions.end());
      for (int py = py0; py < py1; ++py) {
        for (int px = px0; px < px1; ++px) {
          const std::uint32_t n =
              ws.per_pixel_count[static_cast<size_t>(py - py0) * (px1 - px0) +
                                 (px - px0)];
          out.contrib_offset[static_cast<size_t>(py) * w + px] =
              static_cast<std::uint32_t>(cursor);
          out.contrib_count[static_cast<size_t>(py) * w + px] = n;
          cursor += n;
        }
      }
    }
  }
  return out;
}

}  // namespace gsplat
