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
#include <vector>

#include "ubf/rfdata.hpp"

namespace ubf {

// Background and anechoic-structure pixel masks over an image grid.
struct RoiPair {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> background;
  std::vector<std::uint8_t> anechoic;

  // Disjoint, non-empty, sized rows x cols.
  void validate(const Matrix& img) const;
};

struct MetricsConfig {
  int gcnr_bins = 256;
  int ssim_radius = 50;
  double k1 = 0.01;
  double k2 = 0.03;
  double r_max = 255.0;

  void validate() const;
};

// |mu_B - mu_aS| of the dB image.
double contrast_ratio(const Matrix& img, const RoiPair& roi);

// |mu_B - mu_aS| / sqrt(var_B + var_aS) with population variances. Returns
// +inf when both variances vanish but the means differ; throws NumericalError
// when everything vanishes.
double cnr(const Matrix& img, const RoiPair& roi);

// 1 - sum_b min(p_B[b], p_aS[b]) over a histogram spanning both ROIs.
double gcnr(const Matrix& img, const RoiPair& roi, const MetricsConfig& cfg = {});

// 10 log10(R_max^2 / MSE); +inf for identical images.
double psnr(const Matrix& ref, const Matrix& test, const MetricsConfig& cfg = {});

// Mean of the local SSIM map over square uniform windows of the configured
// radius, clipped at the image border.
double ssim(const Matrix& ref, const Matrix& test, const MetricsConfig& cfg = {});

struct MetricReport {
  double cr = 0.0;
  double cnr = 0.0;
  double gcnr = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

// Contrast metrics on the dB images, fidelity metrics on their 8-bit display
// mappings.
MetricReport evaluate_all(const Matrix& ref_db, const Matrix& test_db, const RoiPair& roi, double dynamic_range_db,
                          const MetricsConfig& cfg = {});

}  // namespace ubf
