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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ubf/rfdata.hpp"

namespace ubf {

struct Scatterer {
  double x = 0.0;  // lateral, m
  double z = 0.0;  // axial, m
  double amplitude = 1.0;
};

struct Disc {
  double x = 0.0;
  double z = 0.0;
  double radius = 0.0;
  bool contains(double px, double pz) const { return (px - x) * (px - x) + (pz - z) * (pz - z) < radius * radius; }
};

struct Rect {
  double x0 = 0.0, x1 = 0.0, z0 = 0.0, z1 = 0.0;
  bool contains(double px, double pz) const { return px >= x0 && px <= x1 && pz >= z0 && pz <= z1; }
};

// Speckle-filled region: `density` scatterers per resolution cell with
// Gaussian amplitudes of standard deviation `mean_amplitude`.
struct SpeckleRegion {
  std::string label = "background";
  Rect rect;
  double density = 10.0;
  double mean_amplitude = 1.0;
};

struct Phantom {
  std::vector<Scatterer> scatterers;
  std::vector<SpeckleRegion> regions;
  std::vector<Disc> anechoic;

  // Throws ConfigError if a scatterer leaves the field of view or sits inside
  // an anechoic disc.
  void validate(const ProbeConfig& probe) const;
};

// Gaussian-enveloped cosine at center_freq. The -6 dB bandwidth equals
// fractional_bandwidth * center_freq.
struct PulseModel {
  double center_freq = 8.5e6;
  double fractional_bandwidth = 0.6;

  void validate() const;
  double envelope_sigma() const;  // s
  double half_support() const;    // s, 4 sigma
  double operator()(double t) const;
};

// Lateral/axial extent of one resolution cell (m^2) for the probe's receive
// aperture at the focal depth.
double resolution_cell_area(const ProbeConfig& probe, const PulseModel& pulse);

// Single-scattering synthetic acquisition: per scanline, every scatterer's echo
// is deposited on each element of the full row at its two-way travel time
// (virtual-source transmit focus, spherical receive path), weighted by a
// Gaussian transmit beam and 1/r spreading, then white Gaussian noise is added
// from a per-scanline stream derived from (seed, l).
RfCube simulate_rf(const Phantom& phantom, const ProbeConfig& probe, const PulseModel& pulse, double noise_std,
                   std::uint64_t seed);

enum class PhantomKind { kCystGrid, kPointTargets, kSpeckleWithAnechoic, kSpeckle, kTwoPoint };

PhantomKind parse_phantom_kind(std::string_view name);
std::string_view phantom_kind_name(PhantomKind kind);

// Named scenarios, laid out relative to the probe's imaging window. Scatterer
// placement is seeded; geometry is fixed:
//   point_targets         -- five unit points on the axis at axial_min + k span / 6
//   cyst_grid             -- speckle, 15 mm disc at 40 mm depth
//   speckle_with_anechoic -- speckle, 6 mm disc at 48 mm depth
//   speckle               -- speckle only over the whole field of view
//   two_point             -- two points 1 mm apart laterally at the focus
// A disc that does not fit the window moves to mid-depth with a radius of
// 0.4 (cyst_grid) or 0.25 (speckle_with_anechoic) of the smaller half extent.
Phantom standard_phantom(PhantomKind kind, const ProbeConfig& probe, std::uint64_t seed = 1,
                         const PulseModel& pulse = {});

// Adds speckle scatterers to `region` of `phantom`, skipping anechoic discs.
void fill_speckle(Phantom& phantom, const SpeckleRegion& region, const ProbeConfig& probe, const PulseModel& pulse,
                  std::uint64_t seed);

// Lateral half-width of the imaged field (m).
double field_half_width(const ProbeConfig& probe);

}  // namespace ubf
