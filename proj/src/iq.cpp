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

#include "ubf/iq.hpp"

#include <cmath>
#include <numbers>

#include "ubf/errors.hpp"
#include "ubf/simd.hpp"

namespace ubf {

HilbertKernel hilbert_fir(int length) {
  if (length < 7 || length % 2 == 0) throw ConfigError("hilbert_fir: length must be odd and >= 7");
  HilbertKernel k;
  k.taps.assign(static_cast<std::size_t>(length), 0.0);
  const int h = (length - 1) / 2;
  for (int m = -h; m <= h; ++m) {
    if (m % 2 == 0) continue;
    const int idx = m + h;
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * idx / (length - 1));
    k.taps[static_cast<std::size_t>(idx)] = window * 2.0 / (std::numbers::pi * m);
  }
  return k;
}

IqImage to_analytic(const BeamformedLines& u, const HilbertKernel& kernel, double dynamic_range_db) {
  if (kernel.taps.size() % 2 == 0) throw ConfigError("to_analytic: kernel length must be odd");
  IqImage img;
  img.dynamic_range_db = dynamic_range_db;
  img.i_part = u.u;
  img.q_part = Matrix(u.u.rows(), u.u.cols());
  for (std::size_t l = 0; l < u.u.rows(); ++l) simd::convolve_same(u.u.row(l), kernel.taps, img.q_part.row(l));
  return img;
}

}  // namespace ubf
