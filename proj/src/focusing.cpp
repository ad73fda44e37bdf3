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

#include "ubf/focusing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ubf/errors.hpp"

namespace ubf {

namespace {

// Reads channel `ch` of scanline `l` at fractional depth position `pos`.
double read_delayed(const Tensor3& x, std::size_t l, std::size_t ch, double pos, Interpolation interp) {
  const auto N = static_cast<std::ptrdiff_t>(x.dim1());
  auto at = [&](std::ptrdiff_t k) { return (k < 0 || k >= N) ? 0.0 : x(l, static_cast<std::size_t>(k), ch); };
  if (interp == Interpolation::kNearest) return at(static_cast<std::ptrdiff_t>(std::floor(pos + 0.5)));
  const double base = std::floor(pos);
  const double frac = pos - base;
  const auto k = static_cast<std::ptrdiff_t>(base);
  if (frac == 0.0) return at(k);
  return (1.0 - frac) * at(k) + frac * at(k + 1);
}

}  // namespace

Interpolation parse_interpolation(std::string_view name) {
  if (name == "linear") return Interpolation::kLinear;
  if (name == "nearest") return Interpolation::kNearest;
  throw ConfigError("unknown interpolation mode '" + std::string(name) + "'");
}

double receive_delay(const ProbeConfig& probe, int scanline, double depth_sample, int element) {
  const double z = probe.sample_depth(depth_sample);
  const double dx = probe.element_x(element) - probe.scanline_x(scanline);
  const double fs = probe.sampling_freq;
  const double c = probe.sound_speed;
  // sqrt(z^2 + dx^2) - z written to stay accurate when dx << z
  const double extra_path = dx * dx / (std::hypot(z, dx) + z);
  return extra_path == 0.0 ? 0.0 : fs * extra_path / c;
}

DelayTable compute_delays(const ProbeConfig& probe) {
  probe.validate();
  const auto L = static_cast<std::size_t>(probe.num_scanlines);
  const auto N = static_cast<std::size_t>(probe.depth_count());
  const auto E = static_cast<std::size_t>(probe.num_elements);
  DelayTable table{probe, Tensor3(L, N, E)};
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t n = 0; n < N; ++n) {
      auto row = table.tau.row(l, n);
      for (std::size_t i = 0; i < E; ++i) {
        row[i] = receive_delay(probe, static_cast<int>(l), static_cast<double>(n), static_cast<int>(i));
      }
    }
  }
  return table;
}

RfCube apply_delays(const RfCube& raw, const DelayTable& table, Interpolation interp) {
  if (raw.kind != CubeKind::kRaw) throw ConfigError("apply_delays expects a raw cube");
  if (raw.data.dim0() != table.tau.dim0() || raw.data.dim1() != table.tau.dim1() ||
      raw.data.dim2() != table.tau.dim2()) {
    throw DimensionError("apply_delays: delay table and cube dimensions differ");
  }
  RfCube out;
  out.kind = CubeKind::kDelayed;
  out.probe = raw.probe;
  out.data = Tensor3(raw.scanlines(), raw.depths(), raw.channels());
  for (std::size_t l = 0; l < raw.scanlines(); ++l) {
    for (std::size_t n = 0; n < raw.depths(); ++n) {
      auto dst = out.data.row(l, n);
      auto tau = table.tau.row(l, n);
      for (std::size_t i = 0; i < raw.channels(); ++i) {
        dst[i] = read_delayed(raw.data, l, i, static_cast<double>(n) + tau[i], interp);
      }
    }
  }
  return out;
}

int ApertureSpec::offset(std::size_t l, int num_elements) const {
  return std::clamp(starts.at(l), 0, std::max(0, num_elements - aperture_size));
}

void ApertureSpec::validate(int num_elements) const {
  if (aperture_size <= 0 || aperture_size > num_elements) {
    throw ConfigError("aperture size must lie in [1, num_elements]");
  }
  for (std::size_t l = 0; l < starts.size(); ++l) {
    const int d = offset(l, num_elements);
    if (d < 0 || d > num_elements - aperture_size) throw ConfigError("aperture offset out of range");
  }
}

ApertureSpec ApertureSpec::centered(const ProbeConfig& probe) {
  probe.validate();
  ApertureSpec spec;
  spec.aperture_size = probe.num_rx;
  spec.starts.resize(static_cast<std::size_t>(probe.num_scanlines), 0);
  if (probe.num_rx == probe.num_elements) return spec;
  for (int l = 0; l < probe.num_scanlines; ++l) {
    const double center = probe.scanline_x(l) / probe.pitch + 0.5 * (probe.num_elements - 1);
    spec.starts[static_cast<std::size_t>(l)] =
        static_cast<int>(std::lround(center - 0.5 * (probe.num_rx - 1)));
  }
  return spec;
}

RfCube extract_aperture(const RfCube& delayed, const ApertureSpec& spec) {
  if (delayed.kind != CubeKind::kDelayed) throw ConfigError("extract_aperture expects a delayed cube");
  const int E = static_cast<int>(delayed.channels());
  spec.validate(E);
  if (spec.starts.size() != delayed.scanlines()) throw DimensionError("aperture spec scanline count mismatch");
  const auto C = static_cast<std::size_t>(spec.aperture_size);

  RfCube out;
  out.kind = CubeKind::kAperture;
  out.probe = delayed.probe;
  out.probe.num_rx = spec.aperture_size;
  out.data = Tensor3(delayed.scanlines(), delayed.depths(), C);
  for (std::size_t l = 0; l < delayed.scanlines(); ++l) {
    const int start = spec.starts[l];
    for (std::size_t n = 0; n < delayed.depths(); ++n) {
      auto src = delayed.data.row(l, n);
      auto dst = out.data.row(l, n);
      for (std::size_t j = 0; j < C; ++j) {
        const int e = start + static_cast<int>(j);
        dst[j] = (e >= 0 && e < E) ? src[static_cast<std::size_t>(e)] : 0.0;
      }
    }
  }
  return out;
}

RfCube focus(const RfCube& raw, Interpolation interp) {
  if (raw.kind != CubeKind::kRaw) throw ConfigError("focus expects a raw cube");
  raw.probe.validate();
  if (raw.scanlines() != static_cast<std::size_t>(raw.probe.num_scanlines) ||
      raw.channels() != static_cast<std::size_t>(raw.probe.num_elements)) {
    throw DimensionError("focus: cube dimensions do not match the probe");
  }
  const ApertureSpec spec = ApertureSpec::centered(raw.probe);
  const int E = raw.probe.num_elements;
  const auto C = static_cast<std::size_t>(spec.aperture_size);

  RfCube out;
  out.kind = CubeKind::kAperture;
  out.probe = raw.probe;
  out.data = Tensor3(raw.scanlines(), raw.depths(), C);
  for (std::size_t l = 0; l < raw.scanlines(); ++l) {
    const int start = spec.starts[l];
    for (std::size_t n = 0; n < raw.depths(); ++n) {
      auto dst = out.data.row(l, n);
      for (std::size_t j = 0; j < C; ++j) {
        const int e = start + static_cast<int>(j);
        if (e < 0 || e >= E) continue;
        const double tau = receive_delay(raw.probe, static_cast<int>(l), static_cast<double>(n), e);
        dst[j] = read_delayed(raw.data, l, static_cast<std::size_t>(e), static_cast<double>(n) + tau, interp);
      }
    }
  }
  return out;
}

}  // namespace ubf
