// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gsplat/raster.hpp"

namespace gsplat {

// Parameter-space gradients, same shapes as the cloud. Gradients are taken
// with respect to the stored parameterization (log-scale, opacity logit,
// raw quaternion).
struct CloudGradients {
  std::vector<Vec3> position;
  std::vector<Vec3> log_scale;
  std::vector<Vec4> rotation;
  std::vector<double> opacity_logit;
  std::vector<Vec3> color;

  static CloudGradients zeros(size_t n) {
    CloudGradients g;
    g.position.assign(n, Vec3::Zero());
    g.log_scale.assign(n, Vec3::Zero());
    g.rotation.assign(n, Vec4::Zero());
    g.opacity_logit.assign(n, 0.0);
    g.color.assign(n, Vec3::Zero());
    return g;
  }

  size_t size() const { return position.size(); }

  bool all_finite() const {
    for (size_t i = 0; i < size(); ++i) {
      if (!position[i].allFinite() || !log_scale[i].allFinite() ||
          !rotation[i].allFinite() || !std::isfinite(opacity_logit[i]) ||
          !color[i].allFinite())
        return false;
    }
    return true;
  }

  void scale_by(double s) {
    for (size_t i = 0; i < size(); ++i) {
      position[i] *= s;
      log_scale[i] *= s;
      rotation[i] *= s;
      opacity_logit[i] *= s;
      color[i] *= s;
    }
  }
};

namespace detail {

// Accumulated pixel-space cotangents for one gaussian.
struct ScreenGrad {
  Vec2 d_mean = Vec2::Zero();
  Mat2 d_cov = Mat2::Zero();
  Vec3 d_color = Vec3::Zero();
  double d_opacity_logit = 0.0;
  bool touched = false;
};

// d(rotation matrix)/d(unit quaternion), contracted against a cotangent.
inline Vec4 rotation_backward(const Vec4& q, const Mat3& d_r) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 d_q;
  d_q[0] = 2.0 * (-z * (d_r(0, 1) - d_r(1, 0)) + y * (d_r(0, 2) - d_r(2, 0)) -
                  x * (d_r(1, 2) - d_r(2, 1)));
  d_q[1] = 2.0 * (y * (d_r(0, 1) + d_r(1, 0)) + z * (d_r(0, 2) + d_r(2, 0)) -
                  w * (d_r(1, 2) - d_r(2, 1)) -
                  2.0 * x * (d_r(1, 1) + d_r(2, 2)));
  d_q[2] = 2.0 * (x * (d_r(0, 1) + d_r(1, 0)) + w * (d_r(0, 2) - d_r(2, 0)) +
                  z * (d_r(1, 2) + d_r(2, 1)) -
                  2.0 * y * (d_r(0, 0) + d_r(2, 2)));
  d_q[3] = 2.0 * (-w * (d_r(0, 1) - d_r(1, 0)) + x * (d_r(0, 2) + d_r(2, 0)) +
                  y * (d_r(1, 2) + d_r(2, 1)) -
                  2.0 * z * (d_r(0, 0) + d_r(1, 1)));
  return d_q;
}

}  // namespace detail

// Vector-Jacobian product of the renderer: d<grad_image, C>/d(theta), chained
// analytically through the covariance build, projection, pixel opacity and
// compositing. Needs the forward output with retained contributor lists.
inline CloudGradients render_backward(const GaussianCloud& cloud,
                                      const Camera& camera,
                                      const RenderSettings& settings,
                                      const Image& grad_image,
                                      const RenderOutput& forward) {
  if (grad_image.width != camera.width || grad_image.height != camera.height)
    throw std::invalid_argument("render_backward: grad_image shape mismatch");
  if (!forward.has_contributions)
    throw std::invalid_argument(
        "render_backward: forward pass did not retain contributions");

  const size_t n = cloud.size();
  const int w = camera.width, h = camera.height;

  // Re-derive the per-gaussian projection state (cheap, deterministic).
  const std::vector<Projected2D> projected = project_cloud(cloud, camera);
  std::vector<Mat2> inv_cov(n);
  for (size_t i = 0; i < n; ++i) {
    if (projected[i].culled) continue;
    const Mat2& c = projected[i].cov;
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    Mat2 inv;
    inv << c(1, 1), -c(0, 1), -c(1, 0), c(0, 0);
    inv_cov[i] = inv / det;
  }

  // Pixel-space accumulation, tiled exactly like the forward pass so the
  // reduction order (tile 0, 1, ...) is independent of the thread count.
  const int ts = settings.tile_size;
  const int tiles_x = (w + ts - 1) / ts;
  const int tiles_y = (h + ts - 1) / ts;
  const int tile_count = tiles_x * tiles_y;

  struct TileGrad {
    std::vector<std::int32_t> sources;        // sorted unique gaussians
    std::vector<detail::ScreenGrad> grads;    // parallel to sources
  };
  std::vector<TileGrad> tile_grads(tile_count);

  auto process_tile = [&](int tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int px0 = tx * ts, py0 = ty * ts;
    const int px1 = std::min(px0 + ts, w), py1 = std::min(py0 + ts, h);
    TileGrad& tg = tile_grads[tile];

    // Collect the gaussians contributing anywhere in this tile.
    for (int py = py0; py < py1; ++py)
      for (int px = px0; px < px1; ++px) {
        const size_t pix = static_cast<size_t>(py) * w + px;
        const std::uint32_t off = forward.contrib_offset[pix];
        const std::uint32_t cnt = forward.contrib_count[pix];
        for (std::uint32_t k = 0; k < cnt; ++k)
          tg.sources.push_back(forward.contributions[off + k].source);
      }
    std::sort(tg.sources.begin(), tg.sources.end());
    tg.sources.erase(std::unique(tg.sources.begin(), tg.sources.end()),
                     tg.sources.end());
    tg.grads.assign(tg.sources.size(), detail::ScreenGrad{});
    auto slot = [&tg](std::int32_t src) {
      return static_cast<size_t>(
          std::lower_bound(tg.sources.begin(), tg.sources.end(), src) -
          tg.sources.begin());
    };

    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const size_t pix = static_cast<size_t>(py) * w + px;
        const std::uint32_t off = forward.contrib_offset[pix];
        const std::uint32_t cnt = forward.contrib_count[pix];
        if (cnt == 0) continue;
        const Vec3 g = grad_image.at(px, py);
        const Vec2 pixel(px + 0.5, py + 0.5);
        // Suffix sum S_i = sum_{k>i} w_k <g, c_k> + T_final <g, bg>.
        double suffix =
            forward.transmittance.at(px, py) * g.dot(settings.background);
        for (std::int64_t k = cnt - 1; k >= 0; --k) {
          const PixelContribution& c = forward.contributions[off + k];
          const Projected2D& p = projected[c.source];
          detail::ScreenGrad& acc = tg.grads[slot(c.source)];
          acc.touched = true;

          const double gc = g.dot(p.color);
          const double t_before = c.weight / c.alpha;
          const double d_alpha = t_before * gc - suffix / (1.0 - c.alpha);
          acc.d_color += c.weight * g;
          suffix += c.weight * gc;

          if (c.alpha >= kAlphaClamp) continue;  // clamped: no geometry flow
          // alpha' = opacity * exp(-Q/2)
          const double gexp = c.alpha / p.opacity;
          const double d_opacity = d_alpha * gexp;
          acc.d_opacity_logit +=
              d_opacity * p.opacity * (1.0 - p.opacity);
          const double d_q_form = -0.5 * d_alpha * c.alpha;
          const Vec2 d = p.mean - pixel;
          const Vec2 u = inv_cov[c.source] * d;
          acc.d_mean += (2.0 * d_q_form) * u;
          acc.d_cov += -d_q_form * (u * u.transpose());
        }
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

  // Fixed-order reduction across tiles.
  std::vector<detail::ScreenGrad> screen(n);
  for (const TileGrad& tg : tile_grads) {
    for (size_t k = 0; k < tg.sources.size(); ++k) {
      const detail::ScreenGrad& src = tg.grads[k];
      if (!src.touched) continue;
      detail::ScreenGrad& dst = screen[tg.sources[k]];
      dst.d_mean += src.d_mean;
      dst.d_cov += src.d_cov;
      dst.d_color += src.d_color;
      dst.d_opacity_logit += src.d_opacity_logit;
      dst.touched = true;
    }
  }

  // Chain the accumulated screen-space cotangents through the per-gaussian
  // geometry: cov2 = B Sigma B^T with B = J W_rot, mean = proj(t),
  // Sigma = M M^T with M = R(q_hat) diag(s).
  CloudGradients grads = CloudGradients::zeros(n);
  const Mat3& view_rot = camera.view_rotation;
  const double fx = camera.focal_x(), fy = camera.focal_y();

  for (size_t i = 0; i < n; ++i) {
    const detail::ScreenGrad& sg = screen[i];
    if (!sg.touched || projected[i].culled) continue;
    const Gaussian3D& gauss = cloud.gaussians[i];

    const Vec4 q_hat = gauss.unit_rotation();
    const Mat3 rot = quaternion_to_rotation(q_hat);
    const Vec3 s = gauss.activated_scale();
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 sigma3 = m * m.transpose();
    const Vec3 t = camera.to_view(gauss.position);
    const Mat23 jac = camera.projection_jacobian(t);
    const Mat23 b = jac * view_rot;

    // Covariance path.
    const Mat2 g2 = 0.5 * (sg.d_cov + sg.d_cov.transpose());
    const Mat23 d_b = 2.0 * g2 * b * sigma3;
    const Mat3 d_sigma3 = b.transpose() * g2 * b;
    const Mat23 d_jac = d_b * view_rot.transpose();
    const Mat3 d_m = 2.0 * d_sigma3 * m;
    const Mat3 rt_dm = rot.transpose() * d_m;
    Vec3 d_log_scale;
    for (int k = 0; k < 3; ++k) d_log_scale[k] = rt_dm(k, k) * s[k];
    const Mat3 d_rot = d_m * s.asDiagonal();
    const Vec4 d_q_hat = detail::rotation_backward(q_hat, d_rot);
    const double q_norm = gauss.rotation.norm();
    const Vec4 d_q =
        (d_q_hat - q_hat * q_hat.dot(d_q_hat)) / q_norm;

    // Mean path: d(mean)/dt is the projection jacobian itself.
    Vec3 d_t = jac.transpose() * sg.d_mean;

    // Jacobian entries depend on t as well.
    const double inv_z = 1.0 / t.z();
    const double inv_z2 = inv_z * inv_z;
    const double inv_z3 = inv_z2 * inv_z;
    d_t.x() += d_jac(0, 2) * (-fx * inv_z2);
    d_t.y() += d_jac(1, 2) * (-fy * inv_z2);
    d_t.z() += d_jac(0, 0) * (-fx * inv_z2) + d_jac(1, 1) * (-fy * inv_z2) +
               d_jac(0, 2) * (2.0 * fx * t.x() * inv_z3) +
               d_jac(1, 2) * (2.0 * fy * t.y() * inv_z3);

    grads.position[i] = view_rot.transpose() * d_t;
    grads.log_scale[i] = d_log_scale;
    grads.rotation[i] = d_q;
    grads.opacity_logit[i] = sg.d_opacity_logit;
    grads.color[i] = sg.d_color;
  }
  return grads;
}

}  // namespace gsplat
