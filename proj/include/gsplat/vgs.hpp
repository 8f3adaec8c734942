// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gsplat/raster_backward.hpp"
#include "gsplat/rng.hpp"
#include "gsplat/scene.hpp"

namespace gsplat {

// Variational splatting: jitter position and stored (log) scale with noise
// proportional to the current guidance level, and keep optimizing the
// unperturbed parameters underneath.
struct VgsConfig {
  bool enabled = true;
  double gamma = 0.15;

  void validate() const {
    if (!(gamma >= 0.0))
      throw std::invalid_argument("VgsConfig: gamma must be >= 0");
  }
};

// theta' - theta for one step; replayable from the seed.
struct PerturbationRecord {
  std::vector<Vec3> position_offset;
  std::vector<Vec3> log_scale_offset;
  double sigma = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

struct PerturbedCloud {
  GaussianCloud cloud;
  PerturbationRecord record;
};

// theta' = theta + sigma * gamma * eps, eps ~ N(0, I), applied to position
// and stored scale only. Scale offsets live in log space so activated scales
// stay positive. The input cloud is untouched.
inline PerturbedCloud perturb(const GaussianCloud& cloud, double sigma,
                              const VgsConfig& config, std::uint64_t seed) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("perturb: sigma must be >= 0");
  config.validate();

  PerturbedCloud out;
  out.cloud = cloud;
  out.record.sigma = sigma;
  out.record.gamma = config.gamma;
  out.record.seed = seed;
  out.record.position_offset.assign(cloud.size(), Vec3::Zero());
  out.record.log_scale_offset.assign(cloud.size(), Vec3::Zero());

  const double amplitude = config.enabled ? sigma * config.gamma : 0.0;
  Rng rng(derive_seed(seed, kStreamVgs));
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 eps_pos(rng.normal(), rng.normal(), rng.normal());
    const Vec3 eps_scale(rng.normal(), rng.normal(), rng.normal());
    const Vec3 dp = amplitude * eps_pos;
    const Vec3 ds = amplitude * eps_scale;
    out.record.position_offset[i] = dp;
    out.record.log_scale_offset[i] = ds;
    out.cloud.gaussians[i].position += dp;
    out.cloud.gaussians[i].log_scale += ds;
  }
  return out;
}

// d theta'/d theta = I: gradients computed at the perturbed parameters apply
// to the unperturbed ones (the distribution mean) unchanged.
inline CloudGradients passthrough_gradients(
    const CloudGradients& grads_at_perturbed, size_t cloud_size) {
  if (grads_at_perturbed.size() != cloud_size)
    throw std::invalid_argument("passthrough_gradients: shape mismatch");
  return grads_at_perturbed;
}

}  // namespace gsplat
