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

#include "ubf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ubf/errors.hpp"

namespace ubf {

namespace {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
};

Moments moments(const Matrix& img, const std::vector<std::uint8_t>& mask) {
  Moments m;
  const auto& v = img.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      sum += v[i];
      ++m.count;
    }
  }
  if (m.count == 0) throw ConfigError("ROI is empty");
  m.mean = sum / static_cast<double>(m.count);
  double sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) sq += (v[i] - m.mean) * (v[i] - m.mean);
  }
  m.variance = sq / static_cast<double>(m.count);
  return m;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError(std::string(who) + ": image sizes differ");
}

// Summed-area table with a zero border: t(r+1, c+1) = sum over [0..r] x [0..c].
Matrix integral(const Matrix& img, auto&& value) {
  Matrix t(img.rows() + 1, img.cols() + 1);
  for (std::size_t r = 0; r < img.rows(); ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < img.cols(); ++c) {
      row_sum += value(r, c);
      t(r + 1, c + 1) = t(r, c + 1) + row_sum;
    }
  }
  return t;
}

double box_sum(const Matrix& t, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  return t(r1, c1) - t(r0, c1) - t(r1, c0) + t(r0, c0);
}

}  // namespace

void RoiPair::validate(const Matrix& img) const {
  if (rows != img.rows() || cols != img.cols() || background.size() != rows * cols || anechoic.size() != rows * cols) {
    throw DimensionError("ROI masks do not match the image size");
  }
  bool any_b = false, any_a = false;
  for (std::size_t i = 0; i < background.size(); ++i) {
    if (background[i] && anechoic[i]) throw ConfigError("ROIs overlap");
    any_b = any_b || background[i];
    any_a = any_a || anechoic[i];
  }
  if (!any_b || !any_a) throw ConfigError("ROI is empty");
}

void MetricsConfig::validate() const {
  if (gcnr_bins < 2) throw ConfigError("gcnr_bins must be >= 2");
  if (ssim_radius < 1) throw ConfigError("ssim_radius must be >= 1");
  if (!(r_max > 0.0)) throw ConfigError("r_max must be positive");
}

double contrast_ratio(const Matrix& img, const RoiPair& roi) {
  roi.validate(img);
  return std::abs(moments(img, roi.background).mean - moments(img, roi.anechoic).mean);
}

double cnr(const Matrix& img, const RoiPair& roi) {
  roi.validate(img);
  const Moments b = moments(img, roi.background);
  const Moments a = moments(img, roi.anechoic);
  const double diff = std::abs(b.mean - a.mean);
  const double spread = std::sqrt(b.variance + a.variance);
  if (spread == 0.0) {
    if (diff == 0.0) throw NumericalError("CNR undefined: equal means and zero variance");
    return std::numeric_limits<double>::infinity();
  }
  return diff / spread;
}

double gcnr(const Matrix& img, const RoiPair& roi, const MetricsConfig& cfg) {
  roi.validate(img);
  cfg.validate();
  const auto& v = img.values();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (roi.background[i] || roi.anechoic[i]) {
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  }
  const auto bins = static_cast<std::size_t>(cfg.gcnr_bins);
  std::vector<double> hb(bins, 0.0), ha(bins, 0.0);
  double nb = 0.0, na = 0.0;
  const double width = hi - lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!roi.background[i] && !roi.anechoic[i]) continue;
    std::size_t bin = 0;
    if (width > 0.0) {
      bin = std::min(bins - 1, static_cast<std::size_t>((v[i] - lo) / width * static_cast<double>(bins)));
    }
    if (roi.background[i]) {
      hb[bin] += 1.0;
      nb += 1.0;
    } else {
      ha[bin] += 1.0;
      na += 1.0;
    }
  }
  double overlap = 0.0;
  for (std::size_t b = 0; b < bins; ++b) overlap += std::min(hb[b] / nb, ha[b] / na);
  return std::clamp(1.0 - overlap, 0.0, 1.0);
}

double psnr(const Matrix& ref, const Matrix& test, const MetricsConfig& cfg) {
  check_same_shape(ref, test, "psnr");
  cfg.validate();
  if (ref.size() == 0) throw DimensionError("psnr: empty image");
  double sse = 0.0;
  const auto& a = ref.values();
  const auto& b = test.values();
  for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(cfg.r_max * cfg.r_max / mse);
}

double ssim(const Matrix& ref, const Matrix& test, const MetricsConfig& cfg) {
  check_same_shape(ref, test, "ssim");
  cfg.validate();
  if (ref.size() == 0) throw DimensionError("ssim: empty image");
  const double c1 = (cfg.k1 * cfg.r_max) * (cfg.k1 * cfg.r_max);
  const double c2 = (cfg.k2 * cfg.r_max) * (cfg.k2 * cfg.r_max);
  const Matrix sx = integral(ref, [&](std::size_t r, std::size_t c) { return ref(r, c); });
  const Matrix sy = integral(test, [&](std::size_t r, std::size_t c) { return test(r, c); });
  const Matrix sxx = integral(ref, [&](std::size_t r, std::size_t c) { return ref(r, c) * ref(r, c); });
  const Matrix syy = integral(test, [&](std::size_t r, std::size_t c) { return test(r, c) * test(r, c); });
  const Matrix sxy = integral(ref, [&](std::size_t r, std::size_t c) { return ref(r, c) * test(r, c); });

  const auto radius = static_cast<std::size_t>(cfg.ssim_radius);
  double total = 0.0;
  for (std::size_t r = 0; r < ref.rows(); ++r) {
    const std::size_t r0 = r > radius ? r - radius : 0;
    const std::size_t r1 = std::min(ref.rows(), r + radius + 1);
    for (std::size_t c = 0; c < ref.cols(); ++c) {
      const std::size_t c0 = c > radius ? c - radius : 0;
      const std::size_t c1w = std::min(ref.cols(), c + radius + 1);
      const double n = static_cast<double>((r1 - r0) * (c1w - c0));
      const double mx = box_sum(sx, r0, r1, c0, c1w) / n;
      const double my = box_sum(sy, r0, r1, c0, c1w) / n;
      const double vx = std::max(0.0, box_sum(sxx, r0, r1, c0, c1w) / n - mx * mx);
      const double vy = std::max(0.0, box_sum(syy, r0, r1, c0, c1w) / n - my * my);
      const double cxy = box_sum(sxy, r0, r1, c0, c1w) / n - mx * my;
      total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(ref.size());
}

MetricReport evaluate_all(const Matrix& ref_db, const Matrix& test_db, const RoiPair& roi, double dynamic_range_db,
                          const MetricsConfig& cfg) {
  MetricReport rep;
  rep.cr = contrast_ratio(test_db, roi);
  rep.cnr = cnr(test_db, roi);
  rep.gcnr = gcnr(test_db, roi, cfg);
  const Matrix ref8 = display_levels(to_display(ref_db, dynamic_range_db));
  const Matrix test8 = display_levels(to_display(test_db, dynamic_range_db));
  rep.psnr = psnr(ref8, test8, cfg);
  rep.ssim = ssim(ref8, test8, cfg);
  return rep;
}

}  // namespace ubf
