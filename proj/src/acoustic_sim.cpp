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

#include "ubf/acoustic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ubf/errors.hpp"
#include "ubf/random.hpp"

namespace ubf {

namespace {

constexpr double kSpreadingReference = 0.01;  // 1/r normalised to 1 cm
constexpr int kPulseOversampling = 32;
constexpr double kTxWeightFloor = 1e-4;

// Pulse tabulated on a fine grid; sub-sample delays are served by linear
// interpolation between table entries.
class PulseTable {
 public:
  PulseTable(const PulseModel& pulse, double fs) : step_(1.0 / (fs * kPulseOversampling)) {
    half_ = pulse.half_support();
    const int count = static_cast<int>(std::ceil(2.0 * half_ / step_)) + 2;
    values_.resize(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) values_[static_cast<std::size_t>(k)] = pulse(-half_ + k * step_);
  }

  double half_support() const { return half_; }

  double operator()(double t) const {
    const double pos = (t + half_) / step_;
    if (pos < 0.0) return 0.0;
    const auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= values_.size()) return 0.0;
    const double frac = pos - static_cast<double>(k);
    return values_[k] + frac * (values_[k + 1] - values_[k]);
  }

 private:
  double step_;
  double half_ = 0.0;
  std::vector<double> values_;
};

// Lateral standard deviation of the Gaussian transmit beam at depth z.
double tx_beam_sigma(const ProbeConfig& probe, double z) {
  const double aperture = probe.num_tx * probe.pitch;
  const double focal = probe.focal_depth;
  const double diffraction = probe.wavelength() * focal / aperture;
  const double geometric = aperture * std::abs(z - focal) / focal;
  return 0.5 * std::hypot(diffraction, geometric);
}

}  // namespace

// ---------------------------------------------------------------------------

void PulseModel::validate() const {
  if (!(center_freq > 0.0)) throw ConfigError("pulse: center frequency must be positive");
  if (!(fractional_bandwidth > 0.0 && fractional_bandwidth < 2.0)) {
    throw ConfigError("pulse: fractional bandwidth must lie in (0, 2)");
  }
}

double PulseModel::envelope_sigma() const {
  const double bandwidth = fractional_bandwidth * center_freq;
  return std::sqrt(2.0 * std::numbers::ln2) / (std::numbers::pi * bandwidth);
}

double PulseModel::half_support() const { return 4.0 * envelope_sigma(); }

double PulseModel::operator()(double t) const {
  const double s = envelope_sigma();
  if (std::abs(t) > half_support()) return 0.0;
  return std::exp(-0.5 * t * t / (s * s)) * std::cos(2.0 * std::numbers::pi * center_freq * t);
}

double resolution_cell_area(const ProbeConfig& probe, const PulseModel& pulse) {
  const double lateral = probe.wavelength() * probe.focal_depth / (probe.num_rx * probe.pitch);
  const double axial = probe.sound_speed / (2.0 * pulse.fractional_bandwidth * pulse.center_freq);
  return lateral * axial;
}

double field_half_width(const ProbeConfig& probe) { return 0.5 * probe.num_scanlines * probe.line_spacing(); }

void Phantom::validate(const ProbeConfig& probe) const {
  const double half = field_half_width(probe) + 1e-12;
  for (const auto& s : scatterers) {
    if (!std::isfinite(s.x) || !std::isfinite(s.z) || !std::isfinite(s.amplitude)) {
      throw ConfigError("phantom: non-finite scatterer");
    }
    if (std::abs(s.x) > half || s.z < probe.axial_min || s.z > probe.axial_max) {
      throw ConfigError("phantom: scatterer at (" + std::to_string(s.x) + ", " + std::to_string(s.z) +
                        ") m lies outside the field of view");
    }
    for (const auto& d : anechoic) {
      if (d.contains(s.x, s.z)) throw ConfigError("phantom: scatterer inside an anechoic disc");
    }
  }
}

// ---------------------------------------------------------------------------

RfCube simulate_rf(const Phantom& phantom, const ProbeConfig& probe, const PulseModel& pulse, double noise_std,
                   std::uint64_t seed) {
  probe.validate();
  pulse.validate();
  phantom.validate(probe);
  if (!(noise_std >= 0.0)) throw ConfigError("simulate_rf: noise_std must be non-negative");

  const auto L = static_cast<std::size_t>(probe.num_scanlines);
  const auto E = static_cast<std::size_t>(probe.num_elements);
  const auto N = static_cast<std::size_t>(probe.depth_count());
  const double fs = probe.sampling_freq;
  const double c = probe.sound_speed;
  const double t_start = 2.0 * probe.axial_min / c;
  const double focal = probe.focal_depth;

  const PulseTable table(pulse, fs);
  const double half_support = table.half_support();

  std::vector<double> element_x(E);
  for (std::size_t i = 0; i < E; ++i) element_x[i] = probe.element_x(static_cast<int>(i));

  RfCube cube;
  cube.kind = CubeKind::kRaw;
  cube.probe = probe;
  cube.data = Tensor3(L, N, E);

  // element-major scratch so each echo is deposited contiguously
  std::vector<double> trace(E * N);

  for (std::size_t l = 0; l < L; ++l) {
    std::fill(trace.begin(), trace.end(), 0.0);
    const double line_x = probe.scanline_x(static_cast<int>(l));

    for (const auto& s : phantom.scatterers) {
      if (s.amplitude == 0.0) continue;
      const double dx = s.x - line_x;
      const double sigma = tx_beam_sigma(probe, s.z);
      const double tx_weight = std::exp(-0.5 * dx * dx / (sigma * sigma));
      if (tx_weight < kTxWeightFloor) continue;
      // virtual source at the focus: on-axis arrival equals z / c on both sides
      const double to_focus = std::hypot(dx, s.z - focal);
      const double t_tx = (focal + (s.z >= focal ? to_focus : -to_focus)) / c;

      for (std::size_t i = 0; i < E; ++i) {
        const double r_rx = std::hypot(s.x - element_x[i], s.z);
        const double t_arrival = t_tx + r_rx / c - t_start;
        const double amp = s.amplitude * tx_weight * kSpreadingReference / r_rx;
        const double first = std::ceil((t_arrival - half_support) * fs);
        const double last = std::floor((t_arrival + half_support) * fs);
        const auto k0 = static_cast<std::ptrdiff_t>(std::max(first, 0.0));
        const auto k1 = static_cast<std::ptrdiff_t>(std::min(last, static_cast<double>(N) - 1.0));
        double* out = trace.data() + i * N;
        for (std::ptrdiff_t k = k0; k <= k1; ++k) {
          out[k] += amp * table(static_cast<double>(k) / fs - t_arrival);
        }
      }
    }

    Rng rng(derive_seed(seed, {0x5117u, l}));
    for (std::size_t n = 0; n < N; ++n) {
      auto row = cube.data.row(l, n);
      for (std::size_t i = 0; i < E; ++i) row[i] = trace[i * N + n];
      if (noise_std > 0.0) {
        for (std::size_t i = 0; i < E; ++i) row[i] += noise_std * rng.normal();
      }
    }
  }
  return cube;
}

// ---------------------------------------------------------------------------

PhantomKind parse_phantom_kind(std::string_view name) {
  if (name == "cyst_grid") return PhantomKind::kCystGrid;
  if (name == "point_targets") return PhantomKind::kPointTargets;
  if (name == "speckle_with_anechoic") return PhantomKind::kSpeckleWithAnechoic;
  if (name == "speckle") return PhantomKind::kSpeckle;
  if (name == "two_point") return PhantomKind::kTwoPoint;
  throw ConfigError("unknown phantom kind '" + std::string(name) + "'");
}

std::string_view phantom_kind_name(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::kCystGrid:
      return "cyst_grid";
    case PhantomKind::kPointTargets:
      return "point_targets";
    case PhantomKind::kSpeckleWithAnechoic:
      return "speckle_with_anechoic";
    case PhantomKind::kSpeckle:
      return "speckle";
    case PhantomKind::kTwoPoint:
      return "two_point";
  }
  return "unknown";
}

void fill_speckle(Phantom& phantom, const SpeckleRegion& region, const ProbeConfig& probe, const PulseModel& pulse,
                  std::uint64_t seed) {
  const double half = field_half_width(probe);
  Rect r = region.rect;
  r.x0 = std::max(r.x0, -half);
  r.x1 = std::min(r.x1, half);
  r.z0 = std::max(r.z0, probe.axial_min);
  r.z1 = std::min(r.z1, probe.axial_max);
  if (r.x1 <= r.x0 || r.z1 <= r.z0) throw ConfigError("speckle region does not intersect the field of view");
  if (!(region.density > 0.0)) throw ConfigError("speckle density must be positive");

  const double area = (r.x1 - r.x0) * (r.z1 - r.z0);
  const auto count = static_cast<std::size_t>(std::ceil(region.density * area / resolution_cell_area(probe, pulse)));
  Rng rng(derive_seed(seed, {0x59ec1e}));
  phantom.scatterers.reserve(phantom.scatterers.size() + count);
  for (std::size_t k = 0; k < count; ++k) {
    const double x = rng.uniform(r.x0, r.x1);
    const double z = rng.uniform(r.z0, r.z1);
    const double a = region.mean_amplitude * rng.normal();
    const bool hidden = std::any_of(phantom.anechoic.begin(), phantom.anechoic.end(),
                                    [&](const Disc& d) { return d.contains(x, z); });
    if (!hidden) phantom.scatterers.push_back({x, z, a});
  }
  phantom.regions.push_back(region);
}

Phantom standard_phantom(PhantomKind kind, const ProbeConfig& probe, std::uint64_t seed, const PulseModel& pulse) {
  probe.validate();
  Phantom ph;
  const double half = field_half_width(probe);
  const SpeckleRegion everywhere{"background", Rect{-half, half, probe.axial_min, probe.axial_max}, 10.0, 1.0};

  const double span = probe.axial_max - probe.axial_min;
  const double mid = 0.5 * (probe.axial_min + probe.axial_max);
  const double room = std::min(half, 0.5 * span);
  // Reference disc when it fits the window, else a disc scaled to the window.
  auto disc = [&](Disc reference, double scaled_radius) {
    const bool fits = reference.z - reference.radius >= probe.axial_min &&
                      reference.z + reference.radius <= probe.axial_max && reference.radius <= half;
    return fits ? reference : Disc{0.0, mid, scaled_radius};
  };
  switch (kind) {
    case PhantomKind::kPointTargets:
      for (int k = 0; k < 5; ++k) {
        ph.scatterers.push_back({probe.scanline_x(probe.num_scanlines / 2), probe.axial_min + k * span / 6.0, 1.0});
      }
      break;
    case PhantomKind::kTwoPoint:
      ph.scatterers.push_back({0.0, probe.focal_depth, 1.0});
      ph.scatterers.push_back({1.0e-3, probe.focal_depth, 1.0});
      break;
    case PhantomKind::kCystGrid:
      ph.anechoic.push_back(disc({0.0, 0.040, 0.0075}, 0.4 * room));
      fill_speckle(ph, everywhere, probe, pulse, seed);
      break;
    case PhantomKind::kSpeckleWithAnechoic:
      ph.anechoic.push_back(disc({0.0, 0.048, 0.003}, 0.25 * room));
      fill_speckle(ph, everywhere, probe, pulse, seed);
      break;
    case PhantomKind::kSpeckle:
      fill_speckle(ph, everywhere, probe, pulse, seed);
      break;
  }
  for (const auto& d : ph.anechoic) {
    if (d.z - d.radius < probe.axial_min || d.z + d.radius > probe.axial_max || std::abs(d.x) + d.radius > half) {
      throw ConfigError("phantom '" + std::string(phantom_kind_name(kind)) + "' does not fit the probe field of view");
    }
  }
  ph.validate(probe);
  return ph;
}

}  // namespace ubf
