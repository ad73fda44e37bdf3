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

#include "ubf/rfdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "ubf/errors.hpp"
#include "ubf/simd.hpp"

namespace ubf {

// ---------------------------------------------------------------------------
// ProbeConfig

void ProbeConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("probe: " + msg); };
  if (num_elements <= 0 || num_scanlines <= 0 || num_rx <= 0 || num_tx <= 0) fail("counts must be positive");
  if (num_rx > num_elements) fail("num_rx exceeds num_elements");
  if (num_tx > num_elements) fail("num_tx exceeds num_elements");
  if (!(pitch > 0.0)) fail("pitch must be positive");
  if (!(center_freq > 0.0)) fail("center frequency must be positive");
  if (!(sampling_freq > 2.0 * center_freq)) fail("sampling frequency must exceed twice the center frequency");
  if (!(sound_speed > 0.0)) fail("sound speed must be positive");
  if (!(axial_min >= 0.0 && axial_min < axial_max)) fail("axial range must satisfy 0 <= min < max");
  if (scanline_spacing < 0.0) fail("scanline spacing must be non-negative");
  const bool inside_window = axial_min < focal_depth && focal_depth <= axial_max;
  const bool default_band = focal_depth >= 0.010 && focal_depth <= 0.040;
  if (!inside_window && !default_band) fail("focal depth outside the axial window and the 10-40 mm band");
}

double ProbeConfig::line_spacing() const {
  return scanline_spacing > 0.0 ? scanline_spacing : num_elements * pitch / num_scanlines;
}

double ProbeConfig::scanline_x(int l) const { return (l - num_scanlines / 2) * line_spacing(); }

double ProbeConfig::element_x(int i) const { return (i - 0.5 * (num_elements - 1)) * pitch; }

double ProbeConfig::sample_depth(double n) const { return axial_min + n * sound_speed / (2.0 * sampling_freq); }

int ProbeConfig::depth_count() const {
  const double samples = 2.0 * (axial_max - axial_min) / sound_speed * sampling_freq;
  return std::max(1, static_cast<int>(std::ceil(samples - 1e-9)));
}

ProbeConfig ProbeConfig::desk() {
  ProbeConfig p;
  p.num_elements = 128;
  p.num_tx = 64;
  p.num_scanlines = 32;
  p.num_rx = 64;
  p.scanline_spacing = p.pitch;
  p.axial_min = 0.025;
  p.axial_max = 0.035;
  p.focal_depth = 0.030;
  return p;
}

// ---------------------------------------------------------------------------
// ChannelMask

ChannelMask ChannelMask::all_active(std::size_t channels) {
  return fixed(std::vector<std::uint8_t>(channels, 1));
}

ChannelMask ChannelMask::fixed(std::vector<std::uint8_t> row) {
  ChannelMask m;
  m.fixed_ = true;
  m.channels_ = row.size();
  for (auto& b : row) b = b ? 1 : 0;
  m.bits_ = std::move(row);
  return m;
}

ChannelMask ChannelMask::variable(std::size_t depths, std::size_t channels, std::vector<std::uint8_t> rows) {
  if (rows.size() != depths * channels) throw DimensionError("variable mask: bit count != depths * channels");
  ChannelMask m;
  m.fixed_ = false;
  m.channels_ = channels;
  for (auto& b : rows) b = b ? 1 : 0;
  m.bits_ = std::move(rows);
  return m;
}

std::span<const std::uint8_t> ChannelMask::row(std::size_t depth) const {
  const std::size_t r = fixed_ ? 0 : depth;
  return {bits_.data() + r * channels_, channels_};
}

std::size_t ChannelMask::keep_count(std::size_t depth) const {
  auto r = row(depth);
  return static_cast<std::size_t>(std::count(r.begin(), r.end(), std::uint8_t{1}));
}

void ChannelMask::check_compatible(std::size_t depths, std::size_t channels) const {
  if (channels_ != channels) {
    throw DimensionError("mask has " + std::to_string(channels_) + " channels, cube has " + std::to_string(channels));
  }
  if (!fixed_ && rows() != depths) {
    throw DimensionError("mask has " + std::to_string(rows()) + " depth rows, cube has " + std::to_string(depths));
  }
}

// ---------------------------------------------------------------------------
// RfCube

void RfCube::validate() const {
  const std::size_t expect_l = static_cast<std::size_t>(probe.num_scanlines);
  if (data.dim0() != expect_l) throw DimensionError("cube scanline count does not match probe");
  std::size_t expect_c = 0;
  switch (kind) {
    case CubeKind::kRaw:
    case CubeKind::kDelayed:
      expect_c = static_cast<std::size_t>(probe.num_elements);
      break;
    case CubeKind::kAperture:
      expect_c = static_cast<std::size_t>(probe.num_rx);
      break;
    default:
      throw DimensionError("cube kind is not an RF kind");
  }
  if (data.dim2() != expect_c) throw DimensionError("cube channel count does not match its kind");
  for (double v : data.values()) {
    if (!std::isfinite(v)) throw NumericalError("cube contains a non-finite entry");
  }
  if (mask) mask->check_compatible(depths(), channels());
}

// ---------------------------------------------------------------------------
// Envelope and display

Matrix envelope(const IqImage& img) {
  if (img.i_part.rows() != img.q_part.rows() || img.i_part.cols() != img.q_part.cols()) {
    throw DimensionError("envelope: I and Q shapes differ");
  }
  Matrix env(img.i_part.rows(), img.i_part.cols());
  simd::magnitude(img.i_part.values(), img.q_part.values(), env.values());
  return env;
}

Matrix IqImage::envelope() const { return ubf::envelope(*this); }

Matrix IqImage::bmode_db() const { return log_compress(ubf::envelope(*this), dynamic_range_db); }

Matrix log_compress(const Matrix& env, double dynamic_range_db) {
  if (!(dynamic_range_db > 0.0)) throw ConfigError("log_compress: dynamic range must be positive");
  Matrix out(env.rows(), env.cols(), -dynamic_range_db);
  double peak = 0.0;
  for (double v : env.values()) peak = std::max(peak, v);
  if (peak <= 0.0) return out;
  auto& dst = out.values();
  const auto& src = env.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] <= 0.0) continue;
    dst[i] = std::clamp(20.0 * std::log10(src[i] / peak), -dynamic_range_db, 0.0);
  }
  return out;
}

GrayImage to_display(const Matrix& bmode_db, double dynamic_range_db) {
  GrayImage img;
  img.width = bmode_db.rows();
  img.height = bmode_db.cols();
  img.pixels.resize(img.width * img.height);
  for (std::size_t l = 0; l < img.width; ++l) {
    for (std::size_t n = 0; n < img.height; ++n) {
      const double db = std::clamp(bmode_db(l, n), -dynamic_range_db, 0.0);
      const double level = std::round((db + dynamic_range_db) / dynamic_range_db * 255.0);
      img.pixels[n * img.width + l] = static_cast<std::uint8_t>(level);
    }
  }
  return img;
}

Matrix display_levels(const GrayImage& img) {
  Matrix m(img.width, img.height);
  for (std::size_t x = 0; x < img.width; ++x) {
    for (std::size_t y = 0; y < img.height; ++y) m(x, y) = img.at(x, y);
  }
  return m;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  if (pgm_token(in) != "P5") throw FormatError("not a binary PGM (P5): " + path.string());
  GrayImage img;
  try {
    img.width = std::stoul(pgm_token(in));
    img.height = std::stoul(pgm_token(in));
    if (std::stoul(pgm_token(in)) != 255) throw FormatError("only 8-bit PGM is supported");
  } catch (const std::logic_error&) {
    throw FormatError("malformed PGM header: " + path.string());
  }
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) throw SizeError("truncated PGM: " + path.string());
  return img;
}

// ---------------------------------------------------------------------------
// UBF1 container

namespace {

constexpr std::string_view kCubeMagic = "UBF1";

void put_probe(detail::ByteWriter& w, const ProbeConfig& p) {
  for (double v : {double(p.num_elements), double(p.num_tx), double(p.num_scanlines), double(p.num_rx), p.pitch,
                   p.sampling_freq, p.center_freq, p.sound_speed, p.axial_min, p.axial_max, p.focal_depth,
                   p.scanline_spacing}) {
    w.f64(v);
  }
}

ProbeConfig get_probe(detail::ByteReader& r) {
  ProbeConfig p;
  p.num_elements = static_cast<int>(r.f64());
  p.num_tx = static_cast<int>(r.f64());
  p.num_scanlines = static_cast<int>(r.f64());
  p.num_rx = static_cast<int>(r.f64());
  p.pitch = r.f64();
  p.sampling_freq = r.f64();
  p.center_freq = r.f64();
  p.sound_speed = r.f64();
  p.axial_min = r.f64();
  p.axial_max = r.f64();
  p.focal_depth = r.f64();
  p.scanline_spacing = r.f64();
  return p;
}

void put_header(detail::ByteWriter& w, CubeKind kind, std::size_t d0, std::size_t d1, std::size_t d2,
                const ProbeConfig& probe) {
  constexpr std::size_t kMax = std::numeric_limits<std::uint32_t>::max();
  if (d0 > kMax || d1 > kMax || d2 > kMax) throw SizeError("cube dimension does not fit in u32");
  w.bytes(kCubeMagic);
  w.u32(kCubeFormatVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(static_cast<std::uint32_t>(d0));
  w.u32(static_cast<std::uint32_t>(d1));
  w.u32(static_cast<std::uint32_t>(d2));
  put_probe(w, probe);
}

struct Header {
  CubeKind kind;
  std::size_t d0, d1, d2;
  ProbeConfig probe;
};

Header get_header(detail::ByteReader& r) {
  if (r.size() < kCubeHeaderBytes) throw FormatError("file shorter than the UBF1 header");
  if (r.bytes(4) != kCubeMagic) throw FormatError("bad magic, expected UBF1");
  const std::uint32_t version = r.u32();
  if (version != kCubeFormatVersion) throw FormatError("unsupported UBF1 version " + std::to_string(version));
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(CubeKind::kIq)) throw FormatError("unknown cube kind " + std::to_string(kind));
  Header h{static_cast<CubeKind>(kind), r.u32(), r.u32(), r.u32(), {}};
  h.probe = get_probe(r);
  return h;
}

// Entry count with overflow and file-length checks.
std::size_t payload_count(const Header& h, std::size_t bytes_per_entry, std::size_t remaining) {
  std::uint64_t count = 0;
  if (__builtin_mul_overflow(static_cast<std::uint64_t>(h.d0), static_cast<std::uint64_t>(h.d1), &count) ||
      __builtin_mul_overflow(count, static_cast<std::uint64_t>(h.d2), &count)) {
    throw SizeError("cube dimensions overflow");
  }
  std::uint64_t bytes = 0;
  if (__builtin_mul_overflow(count, static_cast<std::uint64_t>(bytes_per_entry), &bytes)) {
    throw SizeError("cube payload size overflows");
  }
  if (bytes != remaining) {
    throw SizeError("payload is " + std::to_string(remaining) + " bytes, header implies " + std::to_string(bytes));
  }
  return static_cast<std::size_t>(count);
}

}  // namespace

void write_cube(const RfCube& cube, const std::filesystem::path& path) {
  if (cube.kind == CubeKind::kMask || cube.kind == CubeKind::kIq) {
    throw ConfigError("write_cube: use write_mask/write_iq for this kind");
  }
  detail::ByteWriter w;
  put_header(w, cube.kind, cube.data.dim0(), cube.data.dim1(), cube.data.dim2(), cube.probe);
  for (double v : cube.data.values()) w.f32(static_cast<float>(v));
  w.save(path);
}

RfCube read_cube(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  const Header h = get_header(r);
  if (h.kind == CubeKind::kMask || h.kind == CubeKind::kIq) throw FormatError("file does not hold an RF cube");
  const std::size_t count = payload_count(h, 4, r.remaining());
  RfCube cube;
  cube.kind = h.kind;
  cube.probe = h.probe;
  cube.data = Tensor3(h.d0, h.d1, h.d2);
  auto& values = cube.data.values();
  for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(r.f32());
  return cube;
}

void write_mask(const ChannelMask& mask, const std::filesystem::path& path) {
  detail::ByteWriter w;
  put_header(w, CubeKind::kMask, 1, mask.rows(), mask.channels(), ProbeConfig{});
  for (std::uint8_t b : mask.bits()) w.u8(b);
  w.save(path);
}

ChannelMask read_mask(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  const Header h = get_header(r);
  if (h.kind != CubeKind::kMask) throw FormatError("file does not hold a channel mask");
  if (h.d0 != 1) throw FormatError("mask file must have a unit leading dimension");
  const std::size_t count = payload_count(h, 1, r.remaining());
  std::vector<std::uint8_t> bits(count);
  for (auto& b : bits) b = r.u8();
  if (h.d1 == 1) return ChannelMask::fixed(std::move(bits));
  return ChannelMask::variable(h.d1, h.d2, std::move(bits));
}

void write_iq(const IqImage& img, const ProbeConfig& probe, const std::filesystem::path& path) {
  detail::ByteWriter w;
  put_header(w, CubeKind::kIq, img.i_part.rows(), img.i_part.cols(), 2, probe);
  for (std::size_t l = 0; l < img.i_part.rows(); ++l) {
    for (std::size_t n = 0; n < img.i_part.cols(); ++n) {
      w.f32(static_cast<float>(img.i_part(l, n)));
      w.f32(static_cast<float>(img.q_part(l, n)));
    }
  }
  w.save(path);
}

IqImage read_iq(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  const Header h = get_header(r);
  if (h.kind != CubeKind::kIq || h.d2 != 2) throw FormatError("file does not hold an IQ image");
  payload_count(h, 4, r.remaining());
  IqImage img;
  img.i_part = Matrix(h.d0, h.d1);
  img.q_part = Matrix(h.d0, h.d1);
  for (std::size_t l = 0; l < h.d0; ++l) {
    for (std::size_t n = 0; n < h.d1; ++n) {
      img.i_part(l, n) = r.f32();
      img.q_part(l, n) = r.f32();
    }
  }
  return img;
}

}  // namespace ubf
