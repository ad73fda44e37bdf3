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

#include <vector>

#include "ubf/beamformers.hpp"
#include "ubf/rfdata.hpp"

namespace ubf {

// Type-III FIR Hilbert transformer: odd length, antisymmetric, zero centre tap.
struct HilbertKernel {
  std::vector<double> taps;

  std::size_t length() const { return taps.size(); }
};

// Hamming-windowed ideal response 2 / (pi m) at odd offsets m, 0 at even ones.
// Length must be odd and at least 7.
HilbertKernel hilbert_fir(int length = 63);

// I = u, Q = kernel * u along depth (zero-padded, same length).
IqImage to_analytic(const BeamformedLines& u, const HilbertKernel& kernel, double dynamic_range_db = 60.0);

}  // namespace ubf
