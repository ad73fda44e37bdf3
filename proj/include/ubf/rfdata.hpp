/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The UBF Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace ubf {

// Linear-array acquisition geometry. Lengths in metres, frequencies in Hz.
//
// Element i sits at lateral position (i - (E-1)/2) * pitch; scanline l at
// (l - L/2) * line_spacing(), so scanline L/2 is on the array axis. Depth
// sample n maps to z = axial_min + n * c / (2 fs).
struct ProbeConfig {
  int num_elements = 192;
  int num_tx = 128;
  int num_scanlines = 96;
  int num_rx = 64;
  double pitch = 2.0e-4;
  double sampling_freq = 4.0e7;
  double center_freq = 8.5e6;
  double sound_speed = 1540.0;
  double axial_min = 0.020;
  double axial_max = 0.080;
  double focal_depth = 0.030;
  // 0 selects num_elements * pitch / num_scanlines.
  double scanline_spacing = 0.0;

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  double line_spacing() const;
  double scanline_x(int l) const;
  double element_x(int i) const;
  double wavelength() const { return sound_speed / center_freq; }
  double sample_depth(double n) const;
  // Depth samples needed to cover [axial_min, axial_max] two-way.
  int depth_count() const;

  // Reduced geometry (128 elements, 32 scanlines on the element pitch,
  // 25-35 mm window) used by the tests and the desk-scale experiments.
  static ProbeConfig desk();

  bool operator==(const ProbeConfig&) const = default;
};

// Dense row-major 3-D tensor indexed (scanline, depth, channel).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0)
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}

  std::size_t dim0() const { return d0_; }
  std::size_t dim1() const { return d1_; }
  std::size_t dim2() const { return d2_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * d1_ + j) * d2_ + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[(i * d1_ + j) * d2_ + k]; }

  std::span<double> row(std::size_t i, std::size_t j) { return {data_.data() + (i * d1_ + j) * d2_, d2_}; }
  std::span<const double> row(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

// Dense row-major matrix. Image rasters use rows = scanlines, cols = depths.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Active receive channels, either one row broadcast over all depths (fixed
// scheme) or one row per depth (variable scheme).
class ChannelMask {
 public:
  ChannelMask() = default;

  static ChannelMask all_active(std::size_t channels);
  static ChannelMask fixed(std::vector<std::uint8_t> row);
  static ChannelMask variable(std::size_t depths, std::size_t channels, std::vector<std::uint8_t> rows);

  bool is_fixed() const { return fixed_; }
  std::size_t channels() const { return channels_; }
  // Stored rows: 1 for a fixed mask.
  std::size_t rows() const { return channels_ == 0 ? 0 : bits_.size() / channels_; }

  std::span<const std::uint8_t> row(std::size_t depth) const;
  bool active(std::size_t depth, std::size_t channel) const { return row(depth)[channel] != 0; }
  std::size_t keep_count(std::size_t depth) const;

  // Throws DimensionError unless the mask can cover `depths` x `channels`.
  void check_compatible(std::size_t depths, std::size_t channels) const;

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const ChannelMask&) const = default;

 private:
  bool fixed_ = true;
  std::size_t channels_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Raw and delayed cubes carry E element channels; aperture cubes carry C.
enum class CubeKind : std::uint8_t { kRaw = 0, kDelayed = 1, kAperture = 2, kMask = 3, kIq = 4 };

struct RfCube {
  CubeKind kind = CubeKind::kRaw;
  ProbeConfig probe;
  Tensor3 data;  // [L x N x channels]
  // Attached by apply_mask so beamformers can count active channels.
  std::optional<ChannelMask> mask;

  std::size_t scanlines() const { return data.dim0(); }
  std::size_t depths() const { return data.dim1(); }
  std::size_t channels() const { return data.dim2(); }

  // Throws DimensionError/NumericalError if dims disagree with the kind or
  // an entry is not finite.
  void validate() const;
};

// Analytic (I, Q) image over the scanline x depth grid.
struct IqImage {
  Matrix i_part;
  Matrix q_part;
  double dynamic_range_db = 60.0;

  Matrix envelope() const;
  Matrix bmode_db() const;
};

Matrix envelope(const IqImage& img);

// 20 log10(env / max env) clamped to [-dynamic_range_db, 0]. An all-zero
// envelope maps to -dynamic_range_db everywhere.
Matrix log_compress(const Matrix& env, double dynamic_range_db);

// 8-bit grey raster, row-major, height rows of width pixels.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

// Linear [-dr, 0] dB -> [0, 255]. Image x = scanline, y = depth.
GrayImage to_display(const Matrix& bmode_db, double dynamic_range_db);
// Inverse layout of to_display: returns [width x height] matrix of grey levels.
Matrix display_levels(const GrayImage& img);

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

// "UBF1" container: magic, u32 version, kind byte, (L, N, channels) as u32,
// twelve ProbeConfig scalars as f64, then the payload in (l, n, channel)
// order -- f32 for signal kinds, u8 for masks. All little-endian.
inline constexpr std::uint32_t kCubeFormatVersion = 1;
inline constexpr std::size_t kCubeHeaderBytes = 4 + 4 + 1 + 3 * 4 + 12 * 8;

void write_cube(const RfCube& cube, const std::filesystem::path& path);
RfCube read_cube(const std::filesystem::path& path);

// Masks use kind=Mask with dims (1, rows, channels); a single stored row
// reads back as a fixed mask.
void write_mask(const ChannelMask& mask, const std::filesystem::path& path);
ChannelMask read_mask(const std::filesystem::path& path);

// IQ images use kind=Iq with dims (L, N, 2).
void write_iq(const IqImage& img, const ProbeConfig& probe, const std::filesystem::path& path);
IqImage read_iq(const std::filesystem::path& path);

}  // namespace ubf
