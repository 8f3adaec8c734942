// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsplat/scene.hpp"

namespace gsplat {

// Binary little-endian PLY, one vertex element with exactly these float32
// properties in this order. The comment line pins the format version.
inline const char* const kPlyVersionComment = "gsplat-distill-v1";

namespace detail {
inline const std::vector<std::string>& ply_properties() {
  static const std::vector<std::string> props = {
      "x",          "y",           "z",           "log_scale_0",
      "log_scale_1", "log_scale_2", "rot_0",       "rot_1",
      "rot_2",      "rot_3",       "opacity_logit", "r",
      "g",          "b"};
  return props;
}
}  // namespace detail

inline void save_cloud(const GaussianCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_cloud: cannot open " + path);
  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "comment " << kPlyVersionComment << "\n"
      << "element vertex " << cloud.size() << "\n";
  for (const std::string& p : detail::ply_properties())
    out << "property float " << p << "\n";
  out << "end_header\n";

  std::vector<float> row(14);
  for (const Gaussian3D& g : cloud.gaussians) {
    row[0] = static_cast<float>(g.position.x());
    row[1] = static_cast<float>(g.position.y());
    row[2] = static_cast<float>(g.position.z());
    row[3] = static_cast<float>(g.log_scale.x());
    row[4] = static_cast<float>(g.log_scale.y());
    row[5] = static_cast<float>(g.log_scale.z());
    row[6] = static_cast<float>(g.rotation[0]);
    row[7] = static_cast<float>(g.rotation[1]);
    row[8] = static_cast<float>(g.rotation[2]);
    row[9] = static_cast<float>(g.rotation[3]);
    row[10] = static_cast<float>(g.opacity_logit);
    row[11] = static_cast<float>(g.color.x());
    row[12] = static_cast<float>(g.color.y());
    row[13] = static_cast<float>(g.color.z());
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_cloud: write failed for " + path);
}

inline GaussianCloud load_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cloud: cannot open " + path);

  auto parse_fail = [&path](const std::string& what) {
    throw std::runtime_error("load_cloud: " + path + ": " + what);
  };

  std::string line;
  if (!std::getline(in, line) || line != "ply") parse_fail("missing 'ply' magic");
  if (!std::getline(in, line) || line != "format binary_little_endian 1.0")
    parse_fail("unsupported format line '" + line + "'");

  std::int64_t vertex_count = -1;
  size_t prop_index = 0;
  const auto& props = detail::ply_properties();
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment") continue;
    if (tok == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex" || vertex_count < 0)
        parse_fail("unsupported element '" + line + "'");
      continue;
    }
    if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (vertex_count < 0) parse_fail("property before element vertex");
      if (prop_index >= props.size())
        parse_fail("unexpected extra property '" + name + "'");
      if (type != "float" || name != props[prop_index])
        parse_fail("expected 'property float " + props[prop_index] +
                   "', got '" + line + "'");
      ++prop_index;
      continue;
    }
    parse_fail("unrecognized header line '" + line + "'");
  }
  if (vertex_count < 0) parse_fail("missing element vertex");
  if (prop_index != props.size())
    parse_fail("missing required property '" + props[prop_index] + "'");

  GaussianCloud cloud;
  cloud.gaussians.resize(static_cast<size_t>(vertex_count));
  std::vector<float> row(14);
  for (std::int64_t i = 0; i < vertex_count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float)))
      parse_fail("truncated vertex data at element " + std::to_string(i));
    Gaussian3D& g = cloud.gaussians[static_cast<size_t>(i)];
    g.position = Vec3(row[0], row[1], row[2]);
    g.log_scale = Vec3(row[3], row[4], row[5]);
    g.rotation = Vec4(row[6], row[7], row[8], row[9]);
    g.opacity_logit = row[10];
    g.color = Vec3(row[11], row[12], row[13]);
  }
  cloud.reset_accumulators();
  return cloud;
}

}  // namespace gsplat
