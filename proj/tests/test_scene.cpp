// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "gsplat/scene.hpp"

using namespace gsplat;
using Catch::Approx;

TEST_CASE("sphere init respects radius, opacity and color", "[scene]") {
  const GaussianCloud cloud =
      init_sphere_cloud(4096, 0.5, 0.1, Vec3(0.5, 0.5, 0.5), 7);
  REQUIRE(cloud.size() == 4096);
  for (const Gaussian3D& g : cloud.gaussians) {
    REQUIRE(g.position.norm() <= 0.5 + 1e-12);
    REQUIRE(g.activated_opacity() == Approx(0.1).epsilon(1e-12));
    REQUIRE(g.color == Vec3(0.5, 0.5, 0.5));
    REQUIRE(g.rotation == Vec4(1, 0, 0, 0));
    REQUIRE(g.activated_scale().minCoeff() > 0.0);
  }
  REQUIRE(cloud.grad_accum.size() == cloud.size());
}

TEST_CASE("sphere init single gaussian", "[scene]") {
  const GaussianCloud cloud = init_sphere_cloud(1, 0.5, 0.1, Vec3(0.5, 0.5, 0.5), 3);
  REQUIRE(cloud.size() == 1);
  REQUIRE(cloud.gaussians[0].position.norm() <= 0.5);
  REQUIRE(cloud.gaussians[0].activated_opacity() == Approx(0.1));
}

TEST_CASE("sphere init is deterministic", "[scene]") {
  const GaussianCloud a = init_sphere_cloud(512, 0.5, 0.1, Vec3(0.5, 0.5, 0.5), 11);
  const GaussianCloud b = init_sphere_cloud(512, 0.5, 0.1, Vec3(0.5, 0.5, 0.5), 11);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.gaussians[i].position == b.gaussians[i].position);
    REQUIRE(a.gaussians[i].log_scale == b.gaussians[i].log_scale);
  }
}

TEST_CASE("sphere init argument validation", "[scene]") {
  REQUIRE_THROWS_AS(init_sphere_cloud(0, 0.5, 0.1, Vec3::Zero(), 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(init_sphere_cloud(10, -1.0, 0.1, Vec3::Zero(), 1),
                    std::invalid_argument);
}

TEST_CASE("sphere init position mean shrinks at scale", "[scene][slow]") {
  const GaussianCloud cloud =
      init_sphere_cloud(100000, 0.5, 0.1, Vec3(0.5, 0.5, 0.5), 123);
  Vec3 mean = Vec3::Zero();
  for (const Gaussian3D& g : cloud.gaussians) mean += g.position;
  mean /= static_cast<double>(cloud.size());
  REQUIRE(mean.norm() < 0.02);
}

TEST_CASE("knn distances on a hand case", "[scene]") {
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
  const auto knn = knn_distances(pts, 2);
  REQUIRE(knn[0].size() == 2);
  REQUIRE(knn[0][0] == Approx(1.0));
  REQUIRE(knn[0][1] == Approx(3.0));
  REQUIRE(knn[1][0] == Approx(1.0));
  REQUIRE(knn[1][1] == Approx(2.0));
  REQUIRE(knn[2][0] == Approx(2.0));
  REQUIRE(knn[2][1] == Approx(3.0));
}

TEST_CASE("camera sampling obeys the configured ranges", "[scene]") {
  CameraConfig cfg;
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const Camera cam = sample_camera(rng, cfg);
    REQUIRE(cam.radius == 1.0);
    REQUIRE(cam.fov_y_deg >= 40.0);
    REQUIRE(cam.fov_y_deg <= 70.0);
    REQUIRE(cam.elevation_deg >= -45.0);
    REQUIRE(cam.elevation_deg <= 45.0);
    REQUIRE(cam.azimuth_deg >= -180.0);
    REQUIRE(cam.azimuth_deg <= 180.0);
  }
}

TEST_CASE("camera sampling is deterministic per draw index", "[scene]") {
  CameraConfig cfg;
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) {
    const Camera ca = sample_camera(a, cfg);
    const Camera cb = sample_camera(b, cfg);
    REQUIRE(ca.azimuth_deg == cb.azimuth_deg);
    REQUIRE(ca.elevation_deg == cb.elevation_deg);
    REQUIRE(ca.fov_y_deg == cb.fov_y_deg);
    REQUIRE(ca.view_rotation == cb.view_rotation);
    REQUIRE(ca.view_translation == cb.view_translation);
  }
}

TEST_CASE("camera config validation", "[scene]") {
  CameraConfig cfg;
  cfg.fov_y_min = 80.0;  // > max
  Rng rng(1);
  REQUIRE_THROWS_AS(sample_camera(rng, cfg), std::invalid_argument);
}

TEST_CASE("view transform is rigid and maps eye/look direction", "[scene]") {
  Rng rng(314);
  CameraConfig cfg;
  for (int i = 0; i < 100; ++i) {
    const Camera cam = sample_camera(rng, cfg);
    const Mat3& r = cam.view_rotation;
    REQUIRE((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
    REQUIRE(r.determinant() == Approx(1.0).epsilon(1e-12));
    // Camera center maps to the view-space origin.
    REQUIRE(cam.to_view(cam.eye()).norm() < 1e-9);
    // The look direction maps to the forward (+z) axis.
    const Vec3 forward = (-cam.eye()).normalized();
    const Vec3 mapped = r * forward;
    REQUIRE((mapped - Vec3(0, 0, 1)).norm() < 1e-9);
  }
}

TEST_CASE("make_camera validates resolution", "[scene]") {
  REQUIRE_THROWS_AS(make_camera(0, 0, 1.0, 60.0, 0, 64), std::invalid_argument);
  REQUIRE_THROWS_AS(make_camera(0, 0, 1.0, 60.0, 64, -1),
                    std::invalid_argument);
}
