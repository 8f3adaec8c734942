// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gsplat/scene.hpp"
#include "gsplat/trainer.hpp"

namespace gsplat {

// Raised for anything the user got wrong (bad key, bad value, bad ranges);
// maps to exit code 1 at the CLI.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat dotted-key configuration. Every knob of every command lives here;
// unknown keys are rejected and the fully-resolved set is written next to
// each run's outputs.
struct RunConfig {
  std::uint64_t seed_master = 0;

  int scene_init_count = 4096;
  double scene_init_radius = 0.5;
  double scene_init_opacity = 0.1;
  double scene_init_color_r = 0.5;
  double scene_init_color_g = 0.5;
  double scene_init_color_b = 0.5;

  int camera_width = 64;
  int camera_height = 64;
  double camera_radius_min = 1.0;
  double camera_radius_max = 1.0;
  double camera_fov_y_min = 40.0;
  double camera_fov_y_max = 70.0;
  double camera_azimuth_min = -180.0;
  double camera_azimuth_max = 180.0;
  double camera_elevation_min = -45.0;
  double camera_elevation_max = 45.0;

  int raster_tile_size = 16;
  double raster_alpha_cutoff = 1.0 / 255.0;
  double raster_extent_sigma = 3.0;
  double raster_background_r = 0.0;
  double raster_background_g = 0.0;
  double raster_background_b = 0.0;
  int raster_threads = 0;

  int noise_count = 16384;
  std::uint64_t noise_seed = 0;  // 0 = derive from seed.master
  bool noise_enabled = true;
  bool noise_resample_per_step = true;
  double noise_rho_start = 0.3;
  double noise_rho_end = 0.05;

  std::string guide_provider = "identity";  // identity | targets
  double guide_sigma_max = 1.0;
  double guide_sigma_min = 0.02;
  std::string guide_targets_manifest;

  bool vgs_enabled = true;
  double vgs_gamma = 0.15;

  std::int64_t trainer_total_steps = 2000;
  std::int64_t trainer_densify_start = 300;
  std::int64_t trainer_densify_interval = 50;
  std::int64_t trainer_opacity_reset_interval = 400;
  double trainer_opacity_reset_value = 0.05;
  std::int64_t trainer_checkpoint_interval = 500;
  std::int64_t trainer_eval_interval = 10;
  std::string trainer_heldout_manifest;
  double trainer_white_bg_prob = 1.0;
  double trainer_tau_grad = 2e-4;
  double trainer_tau_prune = 0.005;
  double trainer_split_scale_fraction = 0.01;
  double trainer_scene_extent = 1.0;
  double trainer_lr_position = 1.6e-4;
  double trainer_lr_position_final_factor = 0.01;
  double trainer_lr_log_scale = 5e-3;
  double trainer_lr_rotation = 1e-3;
  double trainer_lr_opacity = 5e-2;
  double trainer_lr_color = 1.25e-2;

  std::string render_cloud;
  double render_azimuth = 0.0;
  double render_elevation = 30.0;
  double render_radius = 1.0;
  double render_fov_y = 60.0;

  int stats_samples = 10000;
  int stats_corr_samples = 1000;
  double stats_rho = 1.0;
  double stats_pose_a_azimuth = 0.0;
  double stats_pose_a_elevation = 30.0;
  double stats_pose_b_azimuth = 5.0;
  double stats_pose_b_elevation = 30.0;

  std::string eval_cloud;
  int eval_pose_count = 100;
  double eval_elevation = 30.0;
  double eval_radius = 1.0;
  double eval_fov_y = 60.0;

  int gradcheck_scenes = 20;
  int gradcheck_gaussian_count = 8;
  int gradcheck_resolution = 16;
  double gradcheck_fd_step = 1e-4;
  double gradcheck_tolerance = 1e-4;

  int generate_turntable_poses = 36;
  double generate_turntable_elevation = 30.0;
};

namespace detail {

using FieldRef = std::variant<int RunConfig::*, double RunConfig::*,
                              bool RunConfig::*, std::int64_t RunConfig::*,
                              std::uint64_t RunConfig::*,
                              std::string RunConfig::*>;

struct KeyEntry {
  const char* key;
  FieldRef field;
};

inline const std::vector<KeyEntry>& config_registry() {
  static const std::vector<KeyEntry> reg = {
      {"seed.master", &RunConfig::seed_master},
      {"scene.init_count", &RunConfig::scene_init_count},
      {"scene.init_radius", &RunConfig::scene_init_radius},
      {"scene.init_opacity", &RunConfig::scene_init_opacity},
      {"scene.init_color_r", &RunConfig::scene_init_color_r},
      {"scene.init_color_g", &RunConfig::scene_init_color_g},
      {"scene.init_color_b", &RunConfig::scene_init_color_b},
      {"camera.width", &RunConfig::camera_width},
      {"camera.height", &RunConfig::camera_height},
      {"camera.radius_min", &RunConfig::camera_radius_min},
      {"camera.radius_max", &RunConfig::camera_radius_max},
      {"camera.fov_y_min", &RunConfig::camera_fov_y_min},
      {"camera.fov_y_max", &RunConfig::camera_fov_y_max},
      {"camera.azimuth_min", &RunConfig::camera_azimuth_min},
      {"camera.azimuth_max", &RunConfig::camera_azimuth_max},
      {"camera.elevation_min", &RunConfig::camera_elevation_min},
      {"camera.elevation_max", &RunConfig::camera_elevation_max},
      {"raster.tile_size", &RunConfig::raster_tile_size},
      {"raster.alpha_cutoff", &RunConfig::raster_alpha_cutoff},
      {"raster.extent_sigma", &RunConfig::raster_extent_sigma},
      {"raster.background_r", &RunConfig::raster_background_r},
      {"raster.background_g", &RunConfig::raster_background_g},
      {"raster.background_b", &RunConfig::raster_background_b},
      {"raster.threads", &RunConfig::raster_threads},
      {"noise.count", &RunConfig::noise_count},
      {"noise.seed", &RunConfig::noise_seed},
      {"noise.enabled", &RunConfig::noise_enabled},
      {"noise.resample_per_step", &RunConfig::noise_resample_per_step},
      {"noise.rho_start", &RunConfig::noise_rho_start},
      {"noise.rho_end", &RunConfig::noise_rho_end},
      {"guide.provider", &RunConfig::guide_provider},
      {"guide.sigma_max", &RunConfig::guide_sigma_max},
      {"guide.sigma_min", &RunConfig::guide_sigma_min},
      {"guide.targets_manifest", &RunConfig::guide_targets_manifest},
      {"vgs.enabled", &RunConfig::vgs_enabled},
      {"vgs.gamma", &RunConfig::vgs_gamma},
      {"trainer.total_steps", &RunConfig::trainer_total_steps},
      {"trainer.densify_start", &RunConfig::trainer_densify_start},
      {"trainer.densify_interval", &RunConfig::trainer_densify_interval},
      {"trainer.opacity_reset_interval",
       &RunConfig::trainer_opacity_reset_interval},
      {"trainer.opacity_reset_value", &RunConfig::trainer_opacity_reset_value},
      {"trainer.checkpoint_interval", &RunConfig::trainer_checkpoint_interval},
      {"trainer.eval_interval", &RunConfig::trainer_eval_interval},
      {"trainer.heldout_manifest", &RunConfig::trainer_heldout_manifest},
      {"trainer.white_bg_prob", &RunConfig::trainer_white_bg_prob},
      {"trainer.tau_grad", &RunConfig::trainer_tau_grad},
      {"trainer.tau_prune", &RunConfig::trainer_tau_prune},
      {"trainer.split_scale_fraction",
       &RunConfig::trainer_split_scale_fraction},
      {"trainer.scene_extent", &RunConfig::trainer_scene_extent},
      {"trainer.lr_position", &RunConfig::trainer_lr_position},
      {"trainer.lr_position_final_factor",
       &RunConfig::trainer_lr_position_final_factor},
      {"trainer.lr_log_scale", &RunConfig::trainer_lr_log_scale},
      {"trainer.lr_rotation", &RunConfig::trainer_lr_rotation},
      {"trainer.lr_opacity", &RunConfig::trainer_lr_opacity},
      {"trainer.lr_color", &RunConfig::trainer_lr_color},
      {"render.cloud", &RunConfig::render_cloud},
      {"render.azimuth", &RunConfig::render_azimuth},
      {"render.elevation", &RunConfig::render_elevation},
      {"render.radius", &RunConfig::render_radius},
      {"render.fov_y", &RunConfig::render_fov_y},
      {"stats.samples", &RunConfig::stats_samples},
      {"stats.corr_samples", &RunConfig::stats_corr_samples},
      {"stats.rho", &RunConfig::stats_rho},
      {"stats.pose_a_azimuth", &RunConfig::stats_pose_a_azimuth},
      {"stats.pose_a_elevation", &RunConfig::stats_pose_a_elevation},
      {"stats.pose_b_azimuth", &RunConfig::stats_pose_b_azimuth},
      {"stats.pose_b_elevation", &RunConfig::stats_pose_b_elevation},
      {"eval.cloud", &RunConfig::eval_cloud},
      {"eval.pose_count", &RunConfig::eval_pose_count},
      {"eval.elevation", &RunConfig::eval_elevation},
      {"eval.radius", &RunConfig::eval_radius},
      {"eval.fov_y", &RunConfig::eval_fov_y},
      {"gradcheck.scenes", &RunConfig::gradcheck_scenes},
      {"gradcheck.gaussian_count", &RunConfig::gradcheck_gaussian_count},
      {"gradcheck.resolution", &RunConfig::gradcheck_resolution},
      {"gradcheck.fd_step", &RunConfig::gradcheck_fd_step},
      {"gradcheck.tolerance", &RunConfig::gradcheck_tolerance},
      {"generate.turntable_poses", &RunConfig::generate_turntable_poses},
      {"generate.turntable_elevation",
       &RunConfig::generate_turntable_elevation},
  };
  return reg;
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void apply_config_value(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  for (const auto& entry : detail::config_registry()) {
    if (key != entry.key) continue;
    try {
      std::visit(
          [&](auto member) {
            using T = std::remove_cvref_t<decltype(cfg.*member)>;
            if constexpr (std::is_same_v<T, bool>) {
              if (value == "true" || value == "1")
                cfg.*member = true;
              else if (value == "false" || value == "0")
                cfg.*member = false;
              else
                throw ConfigError("expected true/false");
            } else if constexpr (std::is_same_v<T, std::string>) {
              cfg.*member = value;
            } else if constexpr (std::is_same_v<T, double>) {
              size_t used = 0;
              cfg.*member = std::stod(value, &used);
              if (used != value.size()) throw ConfigError("trailing junk");
            } else {
              size_t used = 0;
              const long long v = std::stoll(value, &used);
              if (used != value.size()) throw ConfigError("trailing junk");
              cfg.*member = static_cast<T>(v);
            }
          },
          entry.field);
    } catch (const std::exception&) {
      throw ConfigError("config: bad value for key '" + key + "': '" + value +
                        "'");
    }
    return;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

inline void apply_config_line(RunConfig& cfg, const std::string& raw_line) {
  std::string line = raw_line;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = detail::trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: expected key=value, got '" + raw_line + "'");
  apply_config_value(cfg, detail::trim(line.substr(0, eq)),
                     detail::trim(line.substr(eq + 1)));
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  while (std::getline(in, line)) apply_config_line(cfg, line);
  return cfg;
}

// Serialized in registry order with round-trip-exact doubles; parsing this
// back reproduces the configuration bit for bit.
inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& entry : detail::config_registry()) {
    out << entry.key << "=";
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(cfg.*member)>;
          if constexpr (std::is_same_v<T, bool>)
            out << (cfg.*member ? "true" : "false");
          else if constexpr (std::is_same_v<T, double>)
            out << detail::format_double(cfg.*member);
          else
            out << cfg.*member;
        },
        entry.field);
    out << "\n";
  }
  return out.str();
}

// --- mapping to module configs -------------------------------------------

inline CameraConfig to_camera_config(const RunConfig& c) {
  CameraConfig cam;
  cam.width = c.camera_width;
  cam.height = c.camera_height;
  cam.radius_min = c.camera_radius_min;
  cam.radius_max = c.camera_radius_max;
  cam.fov_y_min = c.camera_fov_y_min;
  cam.fov_y_max = c.camera_fov_y_max;
  cam.azimuth_min = c.camera_azimuth_min;
  cam.azimuth_max = c.camera_azimuth_max;
  cam.elevation_min = c.camera_elevation_min;
  cam.elevation_max = c.camera_elevation_max;
  return cam;
}

inline RenderSettings to_render_settings(const RunConfig& c) {
  RenderSettings s;
  s.background =
      Vec3(c.raster_background_r, c.raster_background_g, c.raster_background_b);
  s.alpha_cutoff = c.raster_alpha_cutoff;
  s.extent_sigma = c.raster_extent_sigma;
  s.tile_size = c.raster_tile_size;
  s.threads = c.raster_threads;
  return s;
}

inline TrainConfig to_train_config(const RunConfig& c) {
  TrainConfig t;
  t.total_steps = c.trainer_total_steps;
  t.densify.start = c.trainer_densify_start;
  t.densify.interval = c.trainer_densify_interval;
  t.densify.tau_grad = c.trainer_tau_grad;
  t.densify.tau_prune = c.trainer_tau_prune;
  t.densify.split_scale_fraction = c.trainer_split_scale_fraction;
  t.densify.scene_extent = c.trainer_scene_extent;
  t.opacity_reset_interval = c.trainer_opacity_reset_interval;
  t.opacity_reset_value = c.trainer_opacity_reset_value;
  t.checkpoint_interval = c.trainer_checkpoint_interval;
  t.eval_interval = c.trainer_eval_interval;
  t.optimizer.lr_position = c.trainer_lr_position;
  t.optimizer.lr_position_final_factor = c.trainer_lr_position_final_factor;
  t.optimizer.lr_log_scale = c.trainer_lr_log_scale;
  t.optimizer.lr_rotation = c.trainer_lr_rotation;
  t.optimizer.lr_opacity = c.trainer_lr_opacity;
  t.optimizer.lr_color = c.trainer_lr_color;
  t.init.count = c.scene_init_count;
  t.init.radius = c.scene_init_radius;
  t.init.opacity = c.scene_init_opacity;
  t.init.color =
      Vec3(c.scene_init_color_r, c.scene_init_color_g, c.scene_init_color_b);
  t.camera = to_camera_config(c);
  t.raster = to_render_settings(c);
  t.white_bg_prob = c.trainer_white_bg_prob;
  t.sigma.sigma_max = c.guide_sigma_max;
  t.sigma.sigma_min = c.guide_sigma_min;
  t.sigma.total_steps = std::max<std::int64_t>(1, c.trainer_total_steps);
  t.rho_start = c.noise_rho_start;
  t.rho_end = c.noise_rho_end;
  t.structured_noise_enabled = c.noise_enabled;
  t.noise_resample_per_step = c.noise_resample_per_step;
  t.vgs.enabled = c.vgs_enabled;
  t.vgs.gamma = c.vgs_gamma;
  t.seed = c.seed_master;
  return t;
}

inline std::uint64_t effective_noise_seed(const RunConfig& c) {
  return c.noise_seed != 0 ? c.noise_seed
                           : derive_seed(c.seed_master, kStreamNoiseGeometry);
}

}  // namespace gsplat
