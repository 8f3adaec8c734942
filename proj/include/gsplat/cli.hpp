// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "gsplat/config.hpp"
#include "gsplat/gradcheck.hpp"
#include "gsplat/guide.hpp"
#include "gsplat/image.hpp"
#include "gsplat/noise.hpp"
#include "gsplat/ply.hpp"
#include "gsplat/trainer.hpp"

namespace gsplat {

namespace fs = std::filesystem;

inline void ensure_output_dir(const std::string& out_dir) {
  fs::create_directories(out_dir);
}

inline void write_resolved_config(const RunConfig& cfg,
                                  const std::string& out_dir) {
  std::ofstream out(fs::path(out_dir) / "resolved.cfg", std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write resolved config in " + out_dir);
  out << serialize_config(cfg);
}

// --- target-view manifest -------------------------------------------------
// One view per line: <image path> <azimuth> <elevation> <radius> <fov_y>,
// whitespace-separated, '#' comments, paths relative to the manifest.

inline std::vector<TargetView> load_target_views(const std::string& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest);
  const fs::path base = fs::path(manifest).parent_path();
  std::vector<TargetView> views;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string path;
    double az, el, radius, fov;
    if (!(ls >> path)) continue;  // blank line
    if (!(ls >> az >> el >> radius >> fov))
      throw std::runtime_error("manifest " + manifest + ":" +
                               std::to_string(line_no) + ": expected "
                               "'<image> <az> <el> <radius> <fov_y>'");
    TargetView view;
    view.image = read_ppm((base / path).string());
    view.camera = make_camera(az, el, radius, fov, view.image.width,
                              view.image.height);
    views.push_back(std::move(view));
  }
  if (views.empty())
    throw std::runtime_error("manifest " + manifest + ": no views");
  return views;
}

inline void write_target_manifest(const std::vector<TargetView>& views,
                                  const std::string& dir,
                                  const std::string& manifest_name) {
  ensure_output_dir(dir);
  std::ofstream out(fs::path(dir) / manifest_name, std::ios::binary);
  for (size_t i = 0; i < views.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu.ppm", i);
    write_ppm(views[i].image, (fs::path(dir) / name).string());
    const Camera& c = views[i].camera;
    out << name << " " << detail::format_double(c.azimuth_deg) << " "
        << detail::format_double(c.elevation_deg) << " "
        << detail::format_double(c.radius) << " "
        << detail::format_double(c.fov_y_deg) << "\n";
  }
}

// --- CSV helpers ----------------------------------------------------------

inline std::string csv_double(double v) { return detail::format_double(v); }

inline void write_metrics_csv(const std::vector<StepRecord>& metrics,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# gsplat-distill metrics csv v1\n";
  out << "step,sigma,rho,score_norm,gaussian_count,heldout_rmse,aborted\n";
  for (const StepRecord& r : metrics) {
    out << r.step << "," << csv_double(r.sigma) << "," << csv_double(r.rho)
        << "," << csv_double(r.score_norm) << "," << r.gaussian_count << ",";
    if (!std::isnan(r.heldout_rmse)) out << csv_double(r.heldout_rmse);
    out << "," << (r.aborted ? 1 : 0) << "\n";
  }
}

// --- shared run pieces ----------------------------------------------------

inline Vec3 guidance_background(const RunConfig& cfg) {
  return cfg.trainer_white_bg_prob >= 1.0
             ? Vec3::Ones()
             : Vec3(cfg.raster_background_r, cfg.raster_background_g,
                    cfg.raster_background_b);
}

struct GenerateRun {
  TrainState state;
  NoiseField field;
};

inline GenerateRun run_generate(const RunConfig& cfg,
                                const std::string& out_dir,
                                bool write_artifacts) {
  TrainConfig train = to_train_config(cfg);
  NoiseField field =
      init_noise_cloud(cfg.noise_count, effective_noise_seed(cfg));

  std::unique_ptr<ScoreProvider> provider;
  std::vector<TargetView> heldout;
  if (cfg.guide_provider == "identity") {
    provider = std::make_unique<IdentityDenoiser>();
  } else if (cfg.guide_provider == "targets") {
    if (cfg.guide_targets_manifest.empty())
      throw ConfigError(
          "guide.provider=targets requires guide.targets_manifest");
    provider = std::make_unique<TargetViewDenoiser>(
        load_target_views(cfg.guide_targets_manifest));
  } else {
    throw ConfigError("unknown guide.provider '" + cfg.guide_provider + "'");
  }
  if (!cfg.trainer_heldout_manifest.empty())
    heldout = load_target_views(cfg.trainer_heldout_manifest);

  TrainHooks hooks;
  RenderSettings eval_settings = to_render_settings(cfg);
  eval_settings.background = guidance_background(cfg);
  if (!heldout.empty()) {
    hooks.heldout_eval = [&heldout, eval_settings](const GaussianCloud& cloud) {
      double acc = 0.0;
      for (const TargetView& v : heldout)
        acc += photometric_rmse(render(cloud, v.camera, eval_settings).color,
                                v.image);
      return acc / static_cast<double>(heldout.size());
    };
  }
  if (write_artifacts) {
    hooks.on_checkpoint = [&out_dir](const TrainState& state) {
      char name[48];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.ply",
                    static_cast<long long>(state.step));
      save_cloud(state.cloud, (fs::path(out_dir) / name).string());
      std::snprintf(name, sizeof(name), "ckpt_%06lld_metrics.csv",
                    static_cast<long long>(state.step));
      write_metrics_csv(state.metrics, (fs::path(out_dir) / name).string());
    };
  }

  GenerateRun run{run_training(train, field, *provider, hooks),
                  std::move(field)};

  if (write_artifacts) {
    save_cloud(run.state.cloud, (fs::path(out_dir) / "final.ply").string());
    write_metrics_csv(run.state.metrics,
                      (fs::path(out_dir) / "metrics.csv").string());
    // Turntable sweep around the final cloud.
    const fs::path turn_dir = fs::path(out_dir) / "turntable";
    fs::create_directories(turn_dir);
    RenderSettings settings = to_render_settings(cfg);
    settings.background = guidance_background(cfg);
    const int poses = std::max(1, cfg.generate_turntable_poses);
    for (int i = 0; i < poses; ++i) {
      const double az = -180.0 + 360.0 * static_cast<double>(i) / poses;
      const Camera cam =
          make_camera(az, cfg.generate_turntable_elevation, cfg.eval_radius,
                      cfg.eval_fov_y, cfg.camera_width, cfg.camera_height);
      char name[32];
      std::snprintf(name, sizeof(name), "turn_%03d.ppm", i);
      write_ppm(render(run.state.cloud, cam, settings).color,
                (turn_dir / name).string());
    }
  }
  return run;
}

inline void cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  ensure_output_dir(out_dir);
  write_resolved_config(cfg, out_dir);
  run_generate(cfg, out_dir, true);
}

inline void cmd_render(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.render_cloud.empty())
    throw ConfigError("render requires render.cloud");
  ensure_output_dir(out_dir);
  write_resolved_config(cfg, out_dir);
  const GaussianCloud cloud = load_cloud(cfg.render_cloud);
  const Camera camera =
      make_camera(cfg.render_azimuth, cfg.render_elevation, cfg.render_radius,
                  cfg.render_fov_y, cfg.camera_width, cfg.camera_height);
  const RenderSettings settings = to_render_settings(cfg);
  write_ppm(render(cloud, camera, settings).color,
            (fs::path(out_dir) / "render.ppm").string());
}

// --- noise statistics -------------------------------------------------------

namespace detail {

// Per-pixel contributor view of one structured-noise pose: enough to replay
// C = sum w_i c_i and the standardization for any color seed without
// re-rendering.
struct NoisePose {
  Camera camera;
  RenderOutput fwd;  // with contributions retained

  Vec3 standardized(size_t pix, const std::vector<Vec3>& colors,
                    std::uint64_t fill_seed) const {
    const double var = fwd.variance.data[pix];
    if (var < kVarianceFloor) return iid_fill_value(fill_seed, pix);
    Vec3 c = Vec3::Zero();
    const std::uint32_t off = fwd.contrib_offset[pix];
    const std::uint32_t cnt = fwd.contrib_count[pix];
    for (std::uint32_t k = 0; k < cnt; ++k) {
      const PixelContribution& pc = fwd.contributions[off + k];
      c += pc.weight * colors[pc.source];
    }
    // Same arithmetic as structured_noise, bit for bit.
    return c * (1.0 / std::sqrt(var));
  }
};

inline NoisePose prepare_noise_pose(const NoiseField& field,
                                    const Camera& camera,
                                    const RenderSettings& settings) {
  RenderSettings s = settings;
  s.background = Vec3::Zero();
  s.retain_contributions = true;
  return NoisePose{camera, render(field.cloud, camera, s)};
}

inline std::uint64_t stats_reseed(std::uint64_t master, std::uint64_t k) {
  return derive_seed(derive_seed(master, 0xC0105EEDull), k);
}

}  // namespace detail

struct NoiseStatsSummary {
  int covered_pixels = 0;
  int covered_mean_ok = 0;      // |emp mean| <= 0.05
  int covered_var_ok = 0;       // emp var in [0.95, 1.05]
  int eligible_pixels = 0;      // Var(C) > 0.05
  int eligible_within_2pct = 0;
  double corr_structured = 0.0;  // mean per-pixel corr at stats.rho
  double corr_iid = 0.0;         // same statistic for pure iid fields
};

// Empirical mean/variance of the standardized structured noise over
// stats.samples color reseeds, the closed-form variance, and the cross-view
// correlation of the mixed noise for a pose pair. The reseed loop replays
// the retained contributor lists; a full re-render per seed would compute
// the identical values (asserted by the unit tests).
inline NoiseStatsSummary cmd_noise_stats(const RunConfig& cfg,
                                         const std::string& out_dir) {
  if (cfg.stats_samples < 2 || cfg.stats_corr_samples < 2)
    throw ConfigError("stats.samples and stats.corr_samples must be >= 2");
  ensure_output_dir(out_dir);
  write_resolved_config(cfg, out_dir);

  const NoiseField field =
      init_noise_cloud(cfg.noise_count, effective_noise_seed(cfg));
  const RenderSettings settings = to_render_settings(cfg);
  const Camera cam_a = make_camera(
      cfg.stats_pose_a_azimuth, cfg.stats_pose_a_elevation, cfg.eval_radius,
      cfg.eval_fov_y, cfg.camera_width, cfg.camera_height);
  const Camera cam_b = make_camera(
      cfg.stats_pose_b_azimuth, cfg.stats_pose_b_elevation, cfg.eval_radius,
      cfg.eval_fov_y, cfg.camera_width, cfg.camera_height);

  const detail::NoisePose pose_a =
      detail::prepare_noise_pose(field, cam_a, settings);
  const detail::NoisePose pose_b =
      detail::prepare_noise_pose(field, cam_b, settings);
  const size_t pixels = static_cast<size_t>(cfg.camera_width) *
                        cfg.camera_height;

  // --- per-pixel standardization statistics over color reseeds (pose A).
  // Fixed-size blocks keep the reduction order independent of thread count.
  const int n = cfg.stats_samples;
  const int block_size = 256;
  const int blocks = (n + block_size - 1) / block_size;
  std::vector<std::vector<double>> block_sum(blocks),
      block_sumsq(blocks);

  auto run_block = [&](int b) {
    std::vector<double>& sum = block_sum[b];
    std::vector<double>& sumsq = block_sumsq[b];
    sum.assign(pixels, 0.0);
    sumsq.assign(pixels, 0.0);
    const int k0 = b * block_size;
    const int k1 = std::min(n, k0 + block_size);
    for (int k = k0; k < k1; ++k) {
      const std::uint64_t seed = detail::stats_reseed(cfg.seed_master, k);
      const auto colors = noise_colors_from_seed(field.size(), seed);
      const std::uint64_t fill_seed = seed ^ camera_pose_hash(cam_a);
      for (size_t pix = 0; pix < pixels; ++pix) {
        const Vec3 z = pose_a.standardized(pix, colors, fill_seed);
        sum[pix] += z.sum();
        sumsq[pix] += z.squaredNorm();
      }
    }
  };

  {
    const int threads =
        std::min(detail::resolve_threads(cfg.raster_threads), blocks);
    if (threads <= 1) {
      for (int b = 0; b < blocks; ++b) run_block(b);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t]() {
          for (int b = t; b < blocks; b += threads) run_block(b);
        });
      for (auto& th : pool) th.join();
    }
  }

  std::vector<double> emp_mean(pixels, 0.0), emp_var(pixels, 0.0);
  {
    const double count = 3.0 * n;  // channels pooled
    for (size_t pix = 0; pix < pixels; ++pix) {
      double s = 0.0, s2 = 0.0;
      for (int b = 0; b < blocks; ++b) {
        s += block_sum[b][pix];
        s2 += block_sumsq[b][pix];
      }
      const double mean = s / count;
      emp_mean[pix] = mean;
      emp_var[pix] = s2 / count - mean * mean;
    }
  }

  NoiseStatsSummary summary;
  {
    std::ofstream out(fs::path(out_dir) / "noise_stats.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write noise_stats.csv");
    out << "# gsplat-distill noise-stats csv v1\n";
    out << "x,y,covered,var_closed,emp_mean,emp_var\n";
    for (int y = 0; y < cfg.camera_height; ++y) {
      for (int x = 0; x < cfg.camera_width; ++x) {
        const size_t pix = static_cast<size_t>(y) * cfg.camera_width + x;
        const double var = pose_a.fwd.variance.data[pix];
        const bool covered = var >= kVarianceFloor;
        out << x << "," << y << "," << (covered ? 1 : 0) << ","
            << csv_double(var) << "," << csv_double(emp_mean[pix]) << ","
            << csv_double(emp_var[pix]) << "\n";
        if (covered) {
          ++summary.covered_pixels;
          if (std::abs(emp_mean[pix]) <= 0.05) ++summary.covered_mean_ok;
          if (emp_var[pix] >= 0.95 && emp_var[pix] <= 1.05)
            ++summary.covered_var_ok;
        }
        if (var > 0.05) {
          ++summary.eligible_pixels;
          if (std::abs(emp_var[pix] - 1.0) <= 0.02)
            ++summary.eligible_within_2pct;
        }
      }
    }
  }

  // --- cross-view correlation of the mixed noise for the pose pair.
  auto mean_pixel_correlation = [&](bool structured) {
    const int m = cfg.stats_corr_samples;
    std::vector<double> sa(pixels, 0.0), sb(pixels, 0.0), saa(pixels, 0.0),
        sbb(pixels, 0.0), sab(pixels, 0.0);
    for (int k = 0; k < m; ++k) {
      const std::uint64_t seed =
          detail::stats_reseed(cfg.seed_master ^ 0xAB1E, k);
      Image na(cfg.camera_width, cfg.camera_height),
          nb(cfg.camera_width, cfg.camera_height);
      if (structured) {
        const auto colors = noise_colors_from_seed(field.size(), seed);
        const std::uint64_t fill_a = seed ^ camera_pose_hash(cam_a);
        const std::uint64_t fill_b = seed ^ camera_pose_hash(cam_b);
        const double ws = std::sqrt(cfg.stats_rho);
        const double wi = std::sqrt(1.0 - cfg.stats_rho);
        const Image iid_a =
            iid_noise_image(cfg.camera_width, cfg.camera_height,
                            derive_seed(seed, 1001));
        const Image iid_b =
            iid_noise_image(cfg.camera_width, cfg.camera_height,
                            derive_seed(seed, 1002));
        for (size_t pix = 0; pix < pixels; ++pix) {
          const Vec3 za = pose_a.standardized(pix, colors, fill_a);
          const Vec3 zb = pose_b.standardized(pix, colors, fill_b);
          for (int ch = 0; ch < 3; ++ch) {
            na.data[pix * 3 + ch] = ws * za[ch] + wi * iid_a.data[pix * 3 + ch];
            nb.data[pix * 3 + ch] = ws * zb[ch] + wi * iid_b.data[pix * 3 + ch];
          }
        }
      } else {
        na = iid_noise_image(cfg.camera_width, cfg.camera_height,
                             derive_seed(seed, 2001));
        nb = iid_noise_image(cfg.camera_width, cfg.camera_height,
                             derive_seed(seed, 2002));
      }
      for (size_t pix = 0; pix < pixels; ++pix) {
        for (int ch = 0; ch < 3; ++ch) {
          const double a = na.data[pix * 3 + ch];
          const double b = nb.data[pix * 3 + ch];
          sa[pix] += a;
          sb[pix] += b;
          saa[pix] += a * a;
          sbb[pix] += b * b;
          sab[pix] += a * b;
        }
      }
    }
    const double count = 3.0 * m;
    double corr_sum = 0.0;
    size_t used = 0;
    for (size_t pix = 0; pix < pixels; ++pix) {
      const double ma = sa[pix] / count, mb = sb[pix] / count;
      const double va = saa[pix] / count - ma * ma;
      const double vb = sbb[pix] / count - mb * mb;
      const double cov = sab[pix] / count - ma * mb;
      if (va <= 0.0 || vb <= 0.0) continue;
      corr_sum += cov / std::sqrt(va * vb);
      ++used;
    }
    return used > 0 ? corr_sum / static_cast<double>(used) : 0.0;
  };

  summary.corr_structured = mean_pixel_correlation(true);
  summary.corr_iid = mean_pixel_correlation(false);

  {
    std::ofstream out(fs::path(out_dir) / "noise_corr.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write noise_corr.csv");
    out << "# gsplat-distill noise-corr csv v1\n";
    out << "rho,corr_samples,mean_pixel_corr,iid_baseline_corr\n";
    out << csv_double(cfg.stats_rho) << "," << cfg.stats_corr_samples << ","
        << csv_double(summary.corr_structured) << ","
        << csv_double(summary.corr_iid) << "\n";
  }
  return summary;
}

// --- gradient check ---------------------------------------------------------

inline bool cmd_gradcheck(const RunConfig& cfg, const std::string& out_dir,
                          std::ostream& log = std::cout) {
  ensure_output_dir(out_dir);
  write_resolved_config(cfg, out_dir);
  GradCheckOptions opt;
  opt.scenes = cfg.gradcheck_scenes;
  opt.gaussian_count = cfg.gradcheck_gaussian_count;
  opt.resolution = cfg.gradcheck_resolution;
  opt.fd_step = cfg.gradcheck_fd_step;
  opt.seed = derive_seed(cfg.seed_master, 0x6AD);

  const GradCheckReport raster_report = gradcheck_rasterizer(opt);
  const GradCheckReport vgs_report =
      gradcheck_vgs_passthrough(opt, cfg.guide_sigma_max, cfg.vgs_gamma);

  const bool ok = raster_report.passed(cfg.gradcheck_tolerance) &&
                  vgs_report.passed(cfg.gradcheck_tolerance);

  std::ostringstream text;
  text << "rasterizer finite-difference suite\n"
       << raster_report.to_string() << "variational pass-through suite\n"
       << vgs_report.to_string() << "tolerance " << cfg.gradcheck_tolerance
       << " -> " << (ok ? "PASS" : "FAIL") << "\n";
  log << text.str();
  std::ofstream out(fs::path(out_dir) / "gradcheck.txt", std::ios::binary);
  out << text.str();
  return ok;
}

// --- cross-view consistency -------------------------------------------------

struct ConsistencyReport {
  std::vector<double> pair_errors;  // adjacent pairs, wraparound
  double mean_error = 0.0;
  double error_variance = 0.0;
  int pose_count = 0;
  double elevation_deg = 0.0;
  double radius = 0.0;
};

inline ConsistencyReport eval_consistency(const GaussianCloud& cloud,
                                          const RunConfig& cfg) {
  if (cfg.eval_pose_count < 2)
    throw ConfigError("eval.pose_count must be >= 2");
  const RenderSettings settings = to_render_settings(cfg);
  ConsistencyReport report;
  report.pose_count = cfg.eval_pose_count;
  report.elevation_deg = cfg.eval_elevation;
  report.radius = cfg.eval_radius;

  std::vector<Image> renders(cfg.eval_pose_count);
  for (int i = 0; i < cfg.eval_pose_count; ++i) {
    const double az =
        -180.0 + 360.0 * static_cast<double>(i) / cfg.eval_pose_count;
    const Camera cam =
        make_camera(az, cfg.eval_elevation, cfg.eval_radius, cfg.eval_fov_y,
                    cfg.camera_width, cfg.camera_height);
    renders[i] = render(cloud, cam, settings).color;
  }
  report.pair_errors.resize(cfg.eval_pose_count);
  double sum = 0.0;
  for (int i = 0; i < cfg.eval_pose_count; ++i) {
    const double err =
        photometric_rmse(renders[i], renders[(i + 1) % cfg.eval_pose_count]);
    report.pair_errors[i] = err;
    sum += err;
  }
  report.mean_error = sum / report.pair_errors.size();
  double var = 0.0;
  for (double e : report.pair_errors) {
    const double d = e - report.mean_error;
    var += d * d;
  }
  report.error_variance = var / report.pair_errors.size();
  return report;
}

inline ConsistencyReport cmd_eval_consistency(const RunConfig& cfg,
                                              const std::string& out_dir) {
  if (cfg.eval_cloud.empty())
    throw ConfigError("eval-consistency requires eval.cloud");
  ensure_output_dir(out_dir);
  write_resolved_config(cfg, out_dir);
  const GaussianCloud cloud = load_cloud(cfg.eval_cloud);
  const ConsistencyReport report = eval_consistency(cloud, cfg);

  std::ofstream out(fs::path(out_dir) / "consistency.csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write consistency.csv");
  out << "# gsplat-distill consistency csv v1\n";
  out << "pair,azimuth_a,azimuth_b,rmse\n";
  for (size_t i = 0; i < report.pair_errors.size(); ++i) {
    const double az_a =
        -180.0 + 360.0 * static_cast<double>(i) / report.pose_count;
    const double az_b =
        -180.0 +
        360.0 * static_cast<double>((i + 1) % report.pose_count) /
            report.pose_count;
    out << i << "," << csv_double(az_a) << "," << csv_double(az_b) << ","
        << csv_double(report.pair_errors[i]) << "\n";
  }
  std::ofstream summary(fs::path(out_dir) / "consistency_summary.csv",
                        std::ios::binary);
  summary << "# gsplat-distill consistency-summary csv v1\n";
  summary << "pose_count,elevation,radius,mean_rmse,rmse_variance\n";
  summary << report.pose_count << "," << csv_double(report.elevation_deg)
          << "," << csv_double(report.radius) << ","
          << csv_double(report.mean_error) << ","
          << csv_double(report.error_variance) << "\n";
  return report;
}

// --- ablation matrix ---------------------------------------------------------

struct AblationCell {
  std::string name;
  bool structured_noise = true;
  bool vgs = true;
  double final_heldout_rmse = 0.0;
  double consistency_variance = 0.0;
  std::int64_t steps = 0;
};

// 2x2 {structured noise on/off} x {vgs on/off} with shared seeds, one row
// per cell.
inline std::vector<AblationCell> cmd_ablate(const RunConfig& cfg,
                                            const std::string& out_dir) {
  if (cfg.guide_provider != "targets")
    throw ConfigError("ablate requires guide.provider=targets");
  if (cfg.guide_targets_manifest.empty())
    throw ConfigError("ablate requires guide.targets_manifest");
  ensure_output_dir(out_dir);
  write_resolved_config(cfg, out_dir);

  const std::vector<std::tuple<std::string, bool, bool>> cells = {
      {"full", true, true},
      {"no_structured_noise", false, true},
      {"no_vgs", true, false},
      {"neither", false, false},
  };

  std::vector<AblationCell> rows;
  for (const auto& [name, noise_on, vgs_on] : cells) {
    RunConfig cell_cfg = cfg;
    cell_cfg.noise_enabled = noise_on;
    cell_cfg.vgs_enabled = vgs_on;
    const GenerateRun run = run_generate(cell_cfg, out_dir, false);

    AblationCell row;
    row.name = name;
    row.structured_noise = noise_on;
    row.vgs = vgs_on;
    row.steps = run.state.step;
    // Final photometric error against the held-out views (or the targets
    // when no held-out manifest is configured).
    const std::string eval_manifest = !cfg.trainer_heldout_manifest.empty()
                                          ? cfg.trainer_heldout_manifest
                                          : cfg.guide_targets_manifest;
    const auto views = load_target_views(eval_manifest);
    RenderSettings eval_settings = to_render_settings(cfg);
    eval_settings.background = guidance_background(cfg);
    double acc = 0.0;
    for (const TargetView& v : views)
      acc += photometric_rmse(
          render(run.state.cloud, v.camera, eval_settings).color, v.image);
    row.final_heldout_rmse = acc / static_cast<double>(views.size());
    row.consistency_variance =
        eval_consistency(run.state.cloud, cfg).error_variance;
    rows.push_back(row);

    save_cloud(run.state.cloud,
               (fs::path(out_dir) / ("cell_" + name + ".ply")).string());
    write_metrics_csv(
        run.state.metrics,
        (fs::path(out_dir) / ("cell_" + name + "_metrics.csv")).string());
  }

  std::ofstream out(fs::path(out_dir) / "ablation.csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write ablation.csv");
  out << "# gsplat-distill ablation csv v1\n";
  out << "cell,structured_noise,vgs,final_heldout_rmse,consistency_variance,"
         "steps\n";
  for (const AblationCell& r : rows) {
    out << r.name << "," << (r.structured_noise ? 1 : 0) << ","
        << (r.vgs ? 1 : 0) << "," << csv_double(r.final_heldout_rmse) << ","
        << csv_double(r.consistency_variance) << "," << r.steps << "\n";
  }
  return rows;
}

}  // namespace gsplat
