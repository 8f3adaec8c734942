// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "gsplat/rng.hpp"

namespace gsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One splat. Scale is stored as log-scale and opacity as a pre-sigmoid
// logit so unconstrained gradient steps keep the activated values legal;
// activation happens at read time. The rotation is stored as a raw
// quaternion in (w, x, y, z) order and normalized wherever it is consumed.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();

  Vec3 activated_scale() const { return log_scale.array().exp(); }
  double activated_opacity() const { return sigmoid(opacity_logit); }
  Vec4 unit_rotation() const { return rotation / rotation.norm(); }
};

struct GaussianCloud {
  std::vector<Gaussian3D> gaussians;
  std::int64_t step_counter = 0;
  // Positional-gradient magnitudes summed since the last densify event,
  // one slot per gaussian.
  std::vector<double> grad_accum;

  size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  void reset_accumulators() {
    grad_accum.assign(gaussians.size(), 0.0);
  }
};

struct RenderSettings {
  Vec3 background = Vec3::Zero();
  double alpha_cutoff = 1.0 / 255.0;  // contributions below this are dropped
  double extent_sigma = 3.0;          // per-gaussian footprint, in std devs
  int tile_size = 16;
  int threads = 0;  // 0 = hardware concurrency; never affects the pixels
  bool retain_contributions = false;  // keep per-pixel lists for backward

  void validate() const {
    if (!(alpha_cutoff > 0.0 && alpha_cutoff < 1.0))
      throw std::invalid_argument("RenderSettings: alpha_cutoff must be in (0,1)");
    if (!(extent_sigma > 0.0))
      throw std::invalid_argument("RenderSettings: extent_sigma must be > 0");
    if (tile_size <= 0)
      throw std::invalid_argument("RenderSettings: tile_size must be > 0");
  }
};

// Pinhole camera orbiting the origin. View space is x-right, y-down,
// z-forward, so depth is the view-space z and images come out upright.
struct Camera {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double radius = 1.0;
  double fov_y_deg = 60.0;
  int width = 0;
  int height = 0;

  Mat3 view_rotation = Mat3::Identity();
  Vec3 view_translation = Vec3::Zero();

  Mat4 view_matrix() const {
    Mat4 w = Mat4::Identity();
    w.topLeftCorner<3, 3>() = view_rotation;
    w.topRightCorner<3, 1>() = view_translation;
    return w;
  }

  Vec3 eye() const { return -view_rotation.transpose() * view_translation; }

  double focal_y() const {
    return 0.5 * height / std::tan(0.5 * fov_y_deg * M_PI / 180.0);
  }
  double focal_x() const { return focal_y(); }  // square pixels

  Vec3 to_view(const Vec3& p) const { return view_rotation * p + view_translation; }

  // Pixel coordinates of a view-space point; caller checks depth > 0.
  Vec2 project_view(const Vec3& t) const {
    const double inv_z = 1.0 / t.z();
    return Vec2(focal_x() * t.x() * inv_z + 0.5 * width,
                focal_y() * t.y() * inv_z + 0.5 * height);
  }

  // Jacobian of the pixel projection at view-space point t (first-order
  // approximation of the projective transform).
  Mat23 projection_jacobian(const Vec3& t) const {
    const double fx = focal_x();
    const double fy = focal_y();
    const double inv_z = 1.0 / t.z();
    const double inv_z2 = inv_z * inv_z;
    Mat23 j;
    j << fx * inv_z, 0.0, -fx * t.x() * inv_z2,
         0.0, fy * inv_z, -fy * t.y() * inv_z2;
    return j;
  }
};

inline double deg2rad(double d) { return d * M_PI / 180.0; }

// Unit direction from azimuth/elevation; azimuth 0 is the +z axis and
// elevation is measured toward +y.
inline Vec3 direction_from_angles(double azimuth_deg, double elevation_deg) {
  const double az = deg2rad(azimuth_deg);
  const double el = deg2rad(elevation_deg);
  return Vec3(std::cos(el) * std::sin(az), std::sin(el),
              std::cos(el) * std::cos(az));
}

inline Camera make_camera(double azimuth_deg, double elevation_deg,
                          double radius, double fov_y_deg, int width,
                          int height) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("make_camera: resolution must be positive");
  if (!(radius > 0.0))
    throw std::invalid_argument("make_camera: radius must be positive");
  Camera cam;
  cam.azimuth_deg = azimuth_deg;
  cam.elevation_deg = elevation_deg;
  cam.radius = radius;
  cam.fov_y_deg = fov_y_deg;
  cam.width = width;
  cam.height = height;

  const Vec3 eye = radius * direction_from_angles(azimuth_deg, elevation_deg);
  const Vec3 forward = (-eye).normalized();  // look at the origin
  Vec3 up(0, 1, 0);
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) {
    // Looking straight along +-y; pick a stable fallback.
    right = Vec3(1, 0, 0);
  }
  right.normalize();
  const Vec3 down = forward.cross(right);  // y-down view basis

  Mat3 rot;
  rot.row(0) = right.transpose();
  rot.row(1) = down.transpose();
  rot.row(2) = forward.transpose();
  cam.view_rotation = rot;
  cam.view_translation = -rot * eye;
  return cam;
}

struct CameraConfig {
  int width = 64;
  int height = 64;
  double radius_min = 1.0;
  double radius_max = 1.0;
  double fov_y_min = 40.0;
  double fov_y_max = 70.0;
  double azimuth_min = -180.0;
  double azimuth_max = 180.0;
  double elevation_min = -45.0;
  double elevation_max = 45.0;

  void validate() const {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("CameraConfig: resolution must be positive");
    if (radius_min > radius_max || fov_y_min > fov_y_max ||
        azimuth_min > azimuth_max || elevation_min > elevation_max)
      throw std::invalid_argument("CameraConfig: range min exceeds max");
    if (!(radius_min > 0.0))
      throw std::invalid_argument("CameraConfig: radius must be positive");
  }
};

// Draw order is fixed (azimuth, elevation, radius, fov) so a given rng
// state always yields the same camera.
inline Camera sample_camera(Rng& rng, const CameraConfig& cfg) {
  cfg.validate();
  const double az = rng.uniform(cfg.azimuth_min, cfg.azimuth_max);
  const double el = rng.uniform(cfg.elevation_min, cfg.elevation_max);
  const double r = rng.uniform(cfg.radius_min, cfg.radius_max);
  const double fov = rng.uniform(cfg.fov_y_min, cfg.fov_y_max);
  return make_camera(az, el, r, fov, cfg.width, cfg.height);
}

// --- nearest-neighbor scale heuristic ------------------------------------

// Distances to the k nearest neighbors of each point, via a uniform grid so
// large clouds stay tractable. Deterministic: candidates are compared by
// (distance, index).
inline std::vector<std::vector<double>> knn_distances(
    const std::vector<Vec3>& points, int k) {
  const size_t n = points.size();
  std::vector<std::vector<double>> result(n);
  if (n <= 1 || k <= 0) return result;

  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 span = (hi - lo).cwiseMax(1e-12);
  // Aim for a handful of points per cell.
  const double target = std::cbrt(static_cast<double>(n) / 4.0);
  const int cells = std::max(1, std::min(64, static_cast<int>(target)));
  const Vec3 cell_size = span / static_cast<double>(cells);

  auto cell_of = [&](const Vec3& p) {
    Eigen::Vector3i c;
    for (int d = 0; d < 3; ++d) {
      int idx = static_cast<int>((p[d] - lo[d]) / cell_size[d]);
      c[d] = std::clamp(idx, 0, cells - 1);
    }
    return c;
  };
  auto cell_key = [&](const Eigen::Vector3i& c) {
    return (static_cast<std::int64_t>(c.x()) * cells + c.y()) * cells + c.z();
  };

  std::unordered_map<std::int64_t, std::vector<int>> grid;
  for (size_t i = 0; i < n; ++i)
    grid[cell_key(cell_of(points[i]))].push_back(static_cast<int>(i));

  const int want = std::min<int>(k, static_cast<int>(n) - 1);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3i center = cell_of(points[i]);
    std::vector<double> best;  // squared distances, sorted ascending
    for (int ring = 0; ring < cells || best.size() < static_cast<size_t>(want);
         ++ring) {
      // Gather the cube shell at Chebyshev distance `ring`.
      for (int dx = -ring; dx <= ring; ++dx)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
              continue;
            Eigen::Vector3i c = center + Eigen::Vector3i(dx, dy, dz);
            if ((c.array() < 0).any() || (c.array() >= cells).any()) continue;
            auto it = grid.find(cell_key(c));
            if (it == grid.end()) continue;
            for (int j : it->second) {
              if (j == static_cast<int>(i)) continue;
              best.push_back((points[j] - points[i]).squaredNorm());
            }
          }
      std::sort(best.begin(), best.end());
      if (best.size() > static_cast<size_t>(want)) best.resize(want);
      // A full shell guarantees anything farther out cannot beat the
      // current k-th distance once that distance fits inside the ring.
      if (best.size() == static_cast<size_t>(want)) {
        const double safe = ring * cell_size.minCoeff();
        if (best.back() <= safe * safe || ring >= cells) break;
      }
      if (ring >= cells) break;
    }
    result[i].reserve(best.size());
    for (double d2 : best) result[i].push_back(std::sqrt(d2));
  }
  return result;
}

// Uniformly distributed positions inside a sphere, identity rotations,
// constant opacity/color; per-gaussian isotropic scale set to the mean
// distance to the 3 nearest neighbors.
inline GaussianCloud init_sphere_cloud(int count, double radius,
                                       double opacity, const Vec3& color,
                                       std::uint64_t seed) {
  if (count < 1)
    throw std::invalid_argument("init_sphere_cloud: count must be >= 1");
  if (!(radius > 0.0))
    throw std::invalid_argument("init_sphere_cloud: radius must be > 0");
  if (!(opacity > 0.0 && opacity < 1.0))
    throw std::invalid_argument("init_sphere_cloud: opacity must be in (0,1)");

  Rng rng(derive_seed(seed, kStreamCloudInit));
  std::vector<Vec3> positions;
  positions.reserve(count);
  while (static_cast<int>(positions.size()) < count) {
    // Rejection-sample the unit ball; keeps the distribution exactly uniform.
    Vec3 p(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
           rng.uniform(-1.0, 1.0));
    if (p.squaredNorm() <= 1.0) positions.push_back(radius * p);
  }

  const auto knn = knn_distances(positions, 3);
  GaussianCloud cloud;
  cloud.gaussians.resize(count);
  for (int i = 0; i < count; ++i) {
    Gaussian3D& g = cloud.gaussians[i];
    g.position = positions[i];
    double scale = radius;  // count == 1 fallback
    if (!knn[i].empty()) {
      double mean = 0.0;
      for (double d : knn[i]) mean += d;
      scale = mean / static_cast<double>(knn[i].size());
    }
    g.log_scale = Vec3::Constant(std::log(std::max(scale, 1e-9)));
    g.rotation = Vec4(1, 0, 0, 0);
    g.opacity_logit = logit(opacity);
    g.color = color;
  }
  cloud.reset_accumulators();
  return cloud;
}

}  // namespace gsplat
