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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "test_util.hpp"
#include "ubf/errors.hpp"
#include "ubf/rfdata.hpp"

using namespace ubf;
using ubf::testing::random_cube;
using ubf::testing::TempDir;

namespace {

IqImage iq_from(std::vector<double> i, std::vector<double> q, std::size_t rows, std::size_t cols) {
  IqImage img;
  img.i_part = Matrix(rows, cols);
  img.q_part = Matrix(rows, cols);
  img.i_part.values() = std::move(i);
  img.q_part.values() = std::move(q);
  return img;
}

void flip_byte(const std::filesystem::path& path, std::size_t offset, char value) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(static_cast<std::streamoff>(offset));
  f.put(value);
}

}  // namespace

TEST(ProbeConfig, DefaultsValidate) {
  EXPECT_NO_THROW(ProbeConfig{}.validate());
  EXPECT_NO_THROW(ProbeConfig::desk().validate());
}

TEST(ProbeConfig, RejectsBadGeometry) {
  ProbeConfig p;
  p.num_rx = p.num_elements + 1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ProbeConfig{};
  p.sampling_freq = 2.0 * p.center_freq;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ProbeConfig{};
  p.pitch = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ProbeConfig{};
  p.axial_min = p.axial_max;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ProbeConfig, DepthSampleMapping) {
  const ProbeConfig p;
  EXPECT_DOUBLE_EQ(p.sample_depth(0), p.axial_min);
  EXPECT_NEAR(p.sample_depth(1) - p.sample_depth(0), p.sound_speed / (2.0 * p.sampling_freq), 1e-15);
  EXPECT_EQ(p.depth_count(), static_cast<int>(std::ceil(2.0 * 0.060 / 1540.0 * 4.0e7)));
}

TEST(Envelope, PythagoreanTriple) {
  const auto env = iq_from({3.0}, {4.0}, 1, 1).envelope();
  EXPECT_DOUBLE_EQ(env(0, 0), 5.0);
}

TEST(Envelope, ZeroInputGivesZero) {
  const auto env = iq_from({0.0}, {0.0}, 1, 1).envelope();
  EXPECT_EQ(env(0, 0), 0.0);
}

TEST(Envelope, MatchesScalarLoop) {
  Rng rng(4);
  std::vector<double> i(16), q(16);
  for (auto& v : i) v = rng.normal();
  for (auto& v : q) v = rng.normal();
  const auto env = envelope(iq_from(i, q, 4, 4));
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_NEAR(env.values()[k], std::sqrt(i[k] * i[k] + q[k] * q[k]), 1e-15);
    EXPECT_GE(env.values()[k], 0.0);
  }
}

TEST(LogCompress, DecadeIsTwentyDb) {
  Matrix env(1, 2);
  env(0, 0) = 1.0;
  env(0, 1) = 0.1;
  const auto db = log_compress(env, 60.0);
  EXPECT_NEAR(db(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(db(0, 1), -20.0, 1e-12);
}

TEST(LogCompress, ClampsAtDynamicRange) {
  Matrix env(1, 2);
  env(0, 0) = 1.0;
  env(0, 1) = 1e-9;
  const auto db = log_compress(env, 60.0);
  EXPECT_EQ(db(0, 1), -60.0);
}

TEST(LogCompress, ScaleInvariant) {
  Rng rng(8);
  Matrix env(5, 7);
  for (auto& v : env.values()) v = std::abs(rng.normal());
  Matrix scaled = env;
  for (auto& v : scaled.values()) v *= 7.3;
  const auto a = log_compress(env, 60.0), b = log_compress(scaled, 60.0);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.values()[k], b.values()[k], 1e-12);
}

TEST(LogCompress, AllZeroMapsToFloor) {
  const auto db = log_compress(Matrix(3, 3, 0.0), 40.0);
  for (double v : db.values()) EXPECT_EQ(v, -40.0);
}

TEST(CubeIo, RoundTripIsBitwise) {
  TempDir dir("cube_rt");
  for (auto kind : {CubeKind::kRaw, CubeKind::kDelayed, CubeKind::kAperture}) {
    RfCube cube = random_cube(kind, 2, 3, 4, 11);
    // Values representable in f32 survive exactly.
    for (auto& v : cube.data.values()) v = static_cast<float>(v);
    write_cube(cube, dir / "c.ubf");
    const RfCube back = read_cube(dir / "c.ubf");
    EXPECT_EQ(back.kind, cube.kind);
    EXPECT_EQ(back.probe, cube.probe);
    EXPECT_EQ(back.data, cube.data);
  }
}

TEST(CubeIo, BadMagicIsFormatError) {
  TempDir dir("cube_magic");
  write_cube(random_cube(CubeKind::kRaw, 2, 3, 4, 1), dir / "c.ubf");
  for (std::size_t k = 0; k < 4; ++k) flip_byte(dir / "c.ubf", k, 'X');
  EXPECT_THROW(read_cube(dir / "c.ubf"), FormatError);
}

TEST(CubeIo, BadVersionIsFormatError) {
  TempDir dir("cube_version");
  write_cube(random_cube(CubeKind::kRaw, 2, 3, 4, 1), dir / "c.ubf");
  flip_byte(dir / "c.ubf", 4, 9);
  EXPECT_THROW(read_cube(dir / "c.ubf"), FormatError);
}

TEST(CubeIo, TruncatedPayloadIsSizeError) {
  TempDir dir("cube_trunc");
  write_cube(random_cube(CubeKind::kRaw, 2, 3, 4, 1), dir / "c.ubf");
  std::filesystem::resize_file(dir / "c.ubf", std::filesystem::file_size(dir / "c.ubf") - 4);
  EXPECT_THROW(read_cube(dir / "c.ubf"), SizeError);
}

TEST(CubeIo, HugeDimensionsAreSizeError) {
  TempDir dir("cube_huge");
  write_cube(random_cube(CubeKind::kRaw, 2, 3, 4, 1), dir / "c.ubf");
  // Dims start after magic, version and kind.
  for (std::size_t k = 9; k < 21; ++k) flip_byte(dir / "c.ubf", k, static_cast<char>(0xFF));
  EXPECT_THROW(read_cube(dir / "c.ubf"), SizeError);
}

TEST(CubeIo, MissingFileIsIoError) { EXPECT_THROW(read_cube("/nonexistent/dir/c.ubf"), IoError); }

TEST(CubeIo, FullSizedPayloadLength) {
  TempDir dir("cube_size");
  RfCube cube;
  cube.kind = CubeKind::kAperture;
  cube.data = Tensor3(96, 1280, 64);
  write_cube(cube, dir / "c.ubf");
  EXPECT_EQ(std::filesystem::file_size(dir / "c.ubf"), kCubeHeaderBytes + 96u * 1280u * 64u * 4u);
}

TEST(CubeIo, NonFiniteCubeIsRejected) {
  const ProbeConfig p = ubf::testing::tiny_probe();
  RfCube cube = random_cube(CubeKind::kRaw, static_cast<std::size_t>(p.num_scanlines),
                            static_cast<std::size_t>(p.depth_count()), static_cast<std::size_t>(p.num_elements), 1);
  EXPECT_NO_THROW(cube.validate());
  cube.data(0, 0, 0) = std::nan("");
  EXPECT_THROW(cube.validate(), NumericalError);
}

TEST(MaskIo, FixedAndVariableRoundTrip) {
  TempDir dir("mask_rt");
  const ChannelMask fixed = ChannelMask::fixed({1, 0, 1, 1});
  write_mask(fixed, dir / "f.ubf");
  EXPECT_EQ(read_mask(dir / "f.ubf"), fixed);
  const ChannelMask variable = ChannelMask::variable(2, 3, {1, 0, 1, 0, 1, 1});
  write_mask(variable, dir / "v.ubf");
  const ChannelMask back = read_mask(dir / "v.ubf");
  EXPECT_EQ(back, variable);
  EXPECT_EQ(back.keep_count(0), 2u);
  EXPECT_FALSE(back.is_fixed());
}

TEST(IqIo, RoundTrip) {
  TempDir dir("iq_rt");
  IqImage img = iq_from({1.5, -2.0, 0.25, 4.0}, {0.5, 0.0, -1.0, 8.0}, 2, 2);
  write_iq(img, ProbeConfig{}, dir / "iq.ubf");
  const IqImage back = read_iq(dir / "iq.ubf");
  EXPECT_EQ(back.i_part, img.i_part);
  EXPECT_EQ(back.q_part, img.q_part);
}

TEST(Pgm, DisplayMappingAndRoundTrip) {
  TempDir dir("pgm");
  Matrix db(2, 3);
  db(0, 0) = 0.0;
  db(1, 0) = -60.0;
  db(0, 1) = -30.0;
  db(1, 1) = -90.0;
  db(0, 2) = -15.0;
  db(1, 2) = -45.0;
  const GrayImage img = to_display(db, 60.0);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 3u);
  EXPECT_EQ(img.at(0, 0), 255);
  EXPECT_EQ(img.at(1, 0), 0);
  EXPECT_EQ(img.at(1, 1), 0);
  EXPECT_NEAR(img.at(0, 1), 127.5, 0.5);
  write_pgm(dir / "a.pgm", img);
  EXPECT_EQ(read_pgm(dir / "a.pgm"), img);
  const Matrix levels = display_levels(img);
  EXPECT_EQ(levels(0, 0), 255.0);
}

TEST(Pgm, RejectsOtherFormats) {
  TempDir dir("pgm_bad");
  std::ofstream(dir / "a.pgm") << "P2\n1 1\n255\n0\n";
  EXPECT_THROW(read_pgm(dir / "a.pgm"), FormatError);
}

TEST(ChannelMask, CountsAndCompatibility) {
  const ChannelMask m = ChannelMask::variable(2, 4, {1, 1, 0, 0, 0, 1, 1, 1});
  EXPECT_EQ(m.keep_count(0), 2u);
  EXPECT_EQ(m.keep_count(1), 3u);
  EXPECT_NO_THROW(m.check_compatible(2, 4));
  EXPECT_THROW(m.check_compatible(3, 4), DimensionError);
  EXPECT_THROW(m.check_compatible(2, 5), DimensionError);
  const ChannelMask all = ChannelMask::all_active(5);
  EXPECT_NO_THROW(all.check_compatible(100, 5));
  EXPECT_EQ(all.keep_count(17), 5u);
}
