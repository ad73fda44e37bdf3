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

#include <string_view>
#include <vector>

#include "ubf/rfdata.hpp"

namespace ubf {

enum class Interpolation { kLinear, kNearest };

Interpolation parse_interpolation(std::string_view name);

// Extra receive delay, in samples, of element i relative to the on-axis
// element for a reflector on scanline l at depth sample n:
//   tau = fs * (z_n + sqrt(z_n^2 + dx^2)) / c - 2 fs z_n / c.
struct DelayTable {
  ProbeConfig probe;
  Tensor3 tau;  // [L x N x E]
};

DelayTable compute_delays(const ProbeConfig& probe);

// Delay of one (scanline, depth, element) triple without materialising a table.
double receive_delay(const ProbeConfig& probe, int scanline, double depth_sample, int element);

// Dynamic receive focusing: y[l,n,i] = x[l, n + tau[l,n,i], i], where late
// echoes on outer elements are pulled forward onto the on-axis arrival time.
// Fractional positions are interpolated; reads outside [0, N) give 0.
RfCube apply_delays(const RfCube& raw, const DelayTable& table, Interpolation interp = Interpolation::kLinear);

// Receive aperture per scanline. `starts` holds the (possibly negative) first
// element of the window centred on each scanline; channels falling outside the
// element row read as zero.
struct ApertureSpec {
  std::vector<int> starts;
  int aperture_size = 0;

  // Offset d_l, clamped into [0, E - C].
  int offset(std::size_t l, int num_elements) const;

  void validate(int num_elements) const;

  // Window of num_rx elements centred on each scanline. When num_rx equals the
  // element count the whole row is used for every scanline.
  static ApertureSpec centered(const ProbeConfig& probe);
};

// z[l,n,j] = y[l,n,j + start_l], zero outside the element row.
RfCube extract_aperture(const RfCube& delayed, const ApertureSpec& spec);

// apply_delays followed by extract_aperture, computing delays only for the
// elements inside each scanline's window. Equal to the two-step path.
RfCube focus(const RfCube& raw, Interpolation interp = Interpolation::kLinear);

}  // namespace ubf
