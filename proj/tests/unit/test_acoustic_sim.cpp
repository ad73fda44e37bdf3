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

#include "test_util.hpp"
#include "ubf/acoustic_sim.hpp"
#include "ubf/errors.hpp"

using namespace ubf;
using ubf::testing::tiny_probe;

namespace {

Phantom one_point(double x, double z, double amp = 1.0) {
  Phantom ph;
  ph.scatterers.push_back({x, z, amp});
  return ph;
}

}  // namespace

TEST(Pulse, ShapeAndValidation) {
  const PulseModel p;
  EXPECT_NEAR(p(0.0), 1.0, 1e-12);
  EXPECT_LT(std::abs(p(p.half_support() * 1.01)), 1e-3);
  PulseModel bad;
  bad.fractional_bandwidth = 2.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.fractional_bandwidth = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Pulse, MinusSixDbBandwidth) {
  // Gaussian envelope with sigma_t has spectrum exp(-2 pi^2 sigma_t^2 df^2); -6 dB at half the bandwidth.
  const PulseModel p;
  const double half_bw = 0.5 * p.fractional_bandwidth * p.center_freq;
  const double s = p.envelope_sigma();
  const double gain = std::exp(-2.0 * M_PI * M_PI * s * s * half_bw * half_bw);
  EXPECT_NEAR(20.0 * std::log10(gain), -6.0, 0.05);
}

TEST(Simulate, EmptyPhantomNoNoiseIsZero) {
  const RfCube cube = simulate_rf({}, tiny_probe(), {}, 0.0, 1);
  EXPECT_EQ(cube.kind, CubeKind::kRaw);
  EXPECT_EQ(cube.channels(), 32u);
  EXPECT_EQ(cube.depths(), static_cast<std::size_t>(tiny_probe().depth_count()));
  for (double v : cube.data.values()) EXPECT_EQ(v, 0.0);
}

TEST(Simulate, PeakSampleFollowsGeometricDelay) {
  const ProbeConfig p = tiny_probe();
  const int l0 = p.num_scanlines / 2;
  const double z0 = 0.012;
  const RfCube cube = simulate_rf(one_point(p.scanline_x(l0), z0), p, {}, 0.0, 1);
  for (int i = 0; i < p.num_elements; ++i) {
    const double xi = p.element_x(i) - p.scanline_x(l0);
    const double expected = p.sampling_freq * (z0 + std::sqrt(z0 * z0 + xi * xi)) / p.sound_speed -
                            2.0 * p.axial_min / p.sound_speed * p.sampling_freq;
    std::size_t best = 0;
    for (std::size_t n = 0; n < cube.depths(); ++n) {
      if (cube.data(static_cast<std::size_t>(l0), n, static_cast<std::size_t>(i)) >
          cube.data(static_cast<std::size_t>(l0), best, static_cast<std::size_t>(i))) {
        best = n;
      }
    }
    EXPECT_NEAR(static_cast<double>(best), std::round(expected), 1.0) << "element " << i;
  }
}

TEST(Simulate, NoiseStatistics) {
  const ProbeConfig p = tiny_probe();
  const Phantom ph = one_point(0.0, 0.012);
  const RfCube clean = simulate_rf(ph, p, {}, 0.0, 1);
  const RfCube a = simulate_rf(ph, p, {}, 0.05, 1);
  const RfCube b = simulate_rf(ph, p, {}, 0.05, 2);
  EXPECT_NE(a.data, b.data);
  double sq = 0.0, mean = 0.0;
  const auto n = static_cast<double>(a.data.size());
  for (std::size_t k = 0; k < a.data.size(); ++k) mean += a.data.values()[k] - clean.data.values()[k];
  mean /= n;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    const double d = a.data.values()[k] - clean.data.values()[k] - mean;
    sq += d * d;
  }
  EXPECT_NEAR(std::sqrt(sq / n), 0.05, 0.05 * 0.05);
}

TEST(Simulate, LinearInScatterers) {
  const ProbeConfig p = tiny_probe();
  const Phantom a = one_point(0.0003, 0.0115, 0.7);
  const Phantom b = one_point(-0.0005, 0.0128, -1.3);
  Phantom both = a;
  both.scatterers.push_back(b.scatterers.front());
  const RfCube ca = simulate_rf(a, p, {}, 0.0, 1), cb = simulate_rf(b, p, {}, 0.0, 1);
  const RfCube cab = simulate_rf(both, p, {}, 0.0, 1);
  for (std::size_t k = 0; k < cab.data.size(); ++k) {
    EXPECT_NEAR(cab.data.values()[k], ca.data.values()[k] + cb.data.values()[k], 1e-12);
  }
}

TEST(Simulate, AmplitudeScaling) {
  const ProbeConfig p = tiny_probe();
  const RfCube c1 = simulate_rf(one_point(0.0002, 0.012, 1.0), p, {}, 0.0, 1);
  const RfCube c3 = simulate_rf(one_point(0.0002, 0.012, 2.5), p, {}, 0.0, 1);
  for (std::size_t k = 0; k < c1.data.size(); ++k) EXPECT_NEAR(c3.data.values()[k], 2.5 * c1.data.values()[k], 1e-12);
}

TEST(Simulate, Deterministic) {
  const ProbeConfig p = tiny_probe();
  const Phantom ph = standard_phantom(PhantomKind::kSpeckle, p, 3);
  EXPECT_EQ(simulate_rf(ph, p, {}, 0.01, 9).data, simulate_rf(ph, p, {}, 0.01, 9).data);
}

TEST(Simulate, RejectsOutOfFieldScatterer) {
  const ProbeConfig p = tiny_probe();
  EXPECT_THROW(simulate_rf(one_point(0.0, 0.030), p, {}, 0.0, 1), ConfigError);
  EXPECT_THROW(simulate_rf(one_point(1.0, 0.012), p, {}, 0.0, 1), ConfigError);
  EXPECT_THROW(simulate_rf({}, p, {}, -1.0, 1), ConfigError);
}

TEST(Phantom, ScattererInsideAnechoicIsInvalid) {
  Phantom ph = one_point(0.0, 0.012);
  ph.anechoic.push_back({0.0, 0.012, 0.001});
  EXPECT_THROW(ph.validate(tiny_probe()), ConfigError);
}

TEST(StandardPhantom, PointTargetsOnFullProbe) {
  const ProbeConfig p;
  const Phantom ph = standard_phantom(PhantomKind::kPointTargets, p);
  ASSERT_EQ(ph.scatterers.size(), 5u);
  const double depths[] = {0.020, 0.030, 0.040, 0.050, 0.060};
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(ph.scatterers[k].z, depths[k], 1e-12);
    EXPECT_NEAR(ph.scatterers[k].x, p.scanline_x(p.num_scanlines / 2), 1e-15);
  }
}

TEST(StandardPhantom, CystGridOnFullProbe) {
  const ProbeConfig p;
  const Phantom ph = standard_phantom(PhantomKind::kCystGrid, p, 1);
  ASSERT_EQ(ph.anechoic.size(), 1u);
  EXPECT_NEAR(ph.anechoic[0].z, 0.040, 1e-12);
  EXPECT_NEAR(2.0 * ph.anechoic[0].radius, 0.015, 1e-12);
}

TEST(StandardPhantom, SpeckleWithAnechoic) {
  const ProbeConfig p;
  const PulseModel pulse;
  const Phantom ph = standard_phantom(PhantomKind::kSpeckleWithAnechoic, p, 2, pulse);
  ASSERT_EQ(ph.anechoic.size(), 1u);
  const Disc& d = ph.anechoic[0];
  EXPECT_NEAR(d.z, 0.048, 1e-12);
  EXPECT_NEAR(2.0 * d.radius, 0.006, 1e-12);
  for (const auto& s : ph.scatterers) EXPECT_FALSE(d.contains(s.x, s.z));
  // Fully developed speckle: at least ten scatterers per resolution cell.
  const double area = 2.0 * field_half_width(p) * (p.axial_max - p.axial_min) - M_PI * d.radius * d.radius;
  EXPECT_GE(static_cast<double>(ph.scatterers.size()) * resolution_cell_area(p, pulse) / area, 10.0 * 0.95);
}

TEST(StandardPhantom, DeskGeometryFits) {
  const ProbeConfig p = ProbeConfig::desk();
  for (auto kind : {PhantomKind::kCystGrid, PhantomKind::kPointTargets, PhantomKind::kSpeckleWithAnechoic,
                    PhantomKind::kSpeckle, PhantomKind::kTwoPoint}) {
    EXPECT_NO_THROW(standard_phantom(kind, p, 1).validate(p)) << phantom_kind_name(kind);
  }
  const Phantom cyst = standard_phantom(PhantomKind::kCystGrid, p, 1);
  EXPECT_NEAR(cyst.anechoic[0].z, 0.030, 1e-12);
}

TEST(StandardPhantom, NamesRoundTrip) {
  for (auto kind : {PhantomKind::kCystGrid, PhantomKind::kPointTargets, PhantomKind::kSpeckleWithAnechoic,
                    PhantomKind::kSpeckle, PhantomKind::kTwoPoint}) {
    EXPECT_EQ(parse_phantom_kind(phantom_kind_name(kind)), kind);
  }
  EXPECT_THROW(parse_phantom_kind("moon"), ConfigError);
}

TEST(StandardPhantom, SeedControlsSpeckle) {
  const ProbeConfig p = tiny_probe();
  const Phantom a = standard_phantom(PhantomKind::kSpeckle, p, 1);
  const Phantom b = standard_phantom(PhantomKind::kSpeckle, p, 1);
  const Phantom c = standard_phantom(PhantomKind::kSpeckle, p, 2);
  ASSERT_EQ(a.scatterers.size(), b.scatterers.size());
  for (std::size_t k = 0; k < a.scatterers.size(); ++k) EXPECT_EQ(a.scatterers[k].x, b.scatterers[k].x);
  EXPECT_NE(a.scatterers.front().x, c.scatterers.front().x);
}
