// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsplat {

using Vec3 = Eigen::Vector3d;

// Dense RGB image, linear color, row-major, channel-minor.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width * height * 3

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  double* pixel(int x, int y) {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const double* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  Vec3 at(int x, int y) const {
    const double* p = pixel(x, y);
    return Vec3(p[0], p[1], p[2]);
  }
  void set(int x, int y, const Vec3& c) {
    double* p = pixel(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  size_t sample_count() const { return data.size(); }
};

// Single-channel map (alpha, variance, ...), same layout minus channels.
struct Map {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Map() = default;
  Map(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

inline double image_dot(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("image_dot: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

// Root-mean-square difference over all samples, the photometric error used
// throughout the evaluation paths.
inline double photometric_rmse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("photometric_rmse: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.data.size()));
}

// --- PPM I/O ------------------------------------------------------------
// P6, 8-bit. Linear values are encoded with the 2.2 power law and quantized
// with round-half-away-from-zero after clamping to [0, 1]; that rule is what
// makes outputs bit-exact across platforms.

inline std::uint8_t quantize_channel(double linear) {
  double v = linear < 0.0 ? 0.0 : (linear > 1.0 ? 1.0 : linear);
  v = std::pow(v, 1.0 / 2.2);
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

inline double dequantize_channel(std::uint8_t byte) {
  return std::pow(static_cast<double>(byte) / 255.0, 2.2);
}

inline void write_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    const double* src = img.pixel(0, y);
    for (int i = 0; i < img.width * 3; ++i) row[i] = quantize_channel(src[i]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6")
    throw std::runtime_error("read_ppm: " + path + ": not a P6 file");
  auto next_token = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
      if (c == '#')
        while (c != EOF && c != '\n') c = in.get();
      c = in.get();
    }
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (tok.empty())
      throw std::runtime_error("read_ppm: " + path + ": truncated header");
    return tok;
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: " + path + ": unsupported header");
  Image img(w, h);
  std::vector<std::uint8_t> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("read_ppm: " + path + ": truncated pixel data");
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = dequantize_channel(raw[i]);
  return img;
}

}  // namespace gsplat
