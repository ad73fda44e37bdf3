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

#include "ubf/beamformers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "ubf/errors.hpp"
#include "ubf/linalg.hpp"
#include "ubf/simd.hpp"

namespace ubf {

namespace {

void require_aperture(const RfCube& z, const char* who) {
  if (z.kind != CubeKind::kAperture) throw ConfigError(std::string(who) + " expects an aperture cube");
}

}  // namespace

void MvConfig::validate() const {
  if (subaperture < 1) throw ConfigError("MV subaperture K must be >= 1");
  if (!(diagonal_loading >= 0.0)) throw ConfigError("MV diagonal loading must be >= 0");
}

void DeconvKernel::validate() const {
  if (taps.empty() || taps.size() % 2 == 0) throw ConfigError("deconvolution kernel must have odd length");
  for (double t : taps) {
    if (!std::isfinite(t)) throw ConfigError("deconvolution kernel has a non-finite tap");
  }
}

ChannelMask effective_mask(const RfCube& z, const ChannelMask* mask) {
  if (mask != nullptr) {
    mask->check_compatible(z.depths(), z.channels());
    return *mask;
  }
  if (z.mask) {
    z.mask->check_compatible(z.depths(), z.channels());
    return *z.mask;
  }
  return ChannelMask::all_active(z.channels());
}

BeamformedLines das(const RfCube& z, const ChannelMask* mask) {
  require_aperture(z, "das");
  const ChannelMask m = effective_mask(z, mask);
  BeamformedLines out{Matrix(z.scanlines(), z.depths())};
  for (std::size_t n = 0; n < z.depths(); ++n) {
    const std::size_t active = m.keep_count(n);
    if (active == 0) throw ConfigError("das: no active channel at depth " + std::to_string(n));
    const auto row = m.row(n);
    const double inv = 1.0 / static_cast<double>(active);
    for (std::size_t l = 0; l < z.scanlines(); ++l) out.u(l, n) = inv * simd::masked_sum(z.data.row(l, n), row);
  }
  return out;
}

std::vector<double> mv_weights(const Matrix& covariance, double loading) {
  const std::size_t k = covariance.rows();
  if (k == 0 || covariance.cols() != k) throw DimensionError("mv_weights: covariance must be square and non-empty");
  if (!(loading >= 0.0)) throw ConfigError("mv_weights: loading must be >= 0");
  double trace = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    trace += covariance(i, i);
    for (std::size_t j = 0; j < k; ++j) scale = std::max(scale, std::abs(covariance(i, j)));
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(covariance(i, j) - covariance(j, i)) > 1e-12 * std::max(scale, 1e-300)) {
        throw ConfigError("mv_weights: covariance is not symmetric");
      }
    }
  }
  Matrix loaded = covariance;
  const double extra = loading * trace / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) loaded(i, i) += extra;
  if (!cholesky_factor(loaded)) throw NumericalError("mv_weights: loaded covariance is singular");
  const std::vector<double> ones(k, 1.0);
  std::vector<double> w = cholesky_solve(loaded, ones);
  double total = 0.0;
  for (double v : w) total += v;
  if (!(std::abs(total) > 0.0) || !std::isfinite(total)) throw NumericalError("mv_weights: 1^T R^-1 1 vanished");
  for (double& v : w) v /= total;
  return w;
}

BeamformedLines mvbf(const RfCube& z, const MvConfig& cfg, const ChannelMask* mask) {
  require_aperture(z, "mvbf");
  cfg.validate();
  const ChannelMask m = effective_mask(z, mask);
  const auto K = static_cast<std::size_t>(cfg.subaperture);

  BeamformedLines out{Matrix(z.scanlines(), z.depths())};
  std::vector<double> active;
  std::vector<double> window_mean;
  Matrix cov(K, K);
  active.reserve(z.channels());

  for (std::size_t n = 0; n < z.depths(); ++n) {
    const auto row_mask = m.row(n);
    const std::size_t J = m.keep_count(n);
    if (J < K) {
      throw ConfigError("mvbf: only " + std::to_string(J) + " active channels at depth " + std::to_string(n) +
                        " but K = " + std::to_string(K) + "; lower the subaperture size");
    }
    const std::size_t windows = J - K + 1;
    const double inv_windows = 1.0 / static_cast<double>(windows);

    for (std::size_t l = 0; l < z.scanlines(); ++l) {
      const auto src = z.data.row(l, n);
      active.clear();
      for (std::size_t c = 0; c < src.size(); ++c) {
        if (row_mask[c]) active.push_back(src[c]);
      }
      const std::span<const double> a(active);

      // R_ij = (1/P) sum_p a[p+i] a[p+j]
      double trace = 0.0;
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          const double r = inv_windows * simd::dot(a.subspan(i, windows), a.subspan(j, windows));
          cov(i, j) = r;
          cov(j, i) = r;
        }
        trace += cov(i, i);
      }
      window_mean.assign(K, 0.0);
      for (std::size_t i = 0; i < K; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < windows; ++p) acc += a[p + i];
        window_mean[i] = acc * inv_windows;
      }
      if (trace == 0.0) {
        out.u(l, n) = 0.0;
        continue;
      }
      const std::vector<double> w = mv_weights(cov, cfg.diagonal_loading);
      out.u(l, n) = simd::dot(w, window_mean);
    }
  }
  return out;
}

BeamformedLines deconvolve(const BeamformedLines& u, const DeconvKernel& kernel) {
  kernel.validate();
  BeamformedLines out{Matrix(u.u.rows(), u.u.cols())};
  for (std::size_t l = 0; l < u.u.rows(); ++l) simd::convolve_same(u.u.row(l), kernel.taps, out.u.row(l));
  return out;
}

DeconvKernel wiener_kernel(const PulseModel& pulse, double sampling_freq, int length, double regularizer) {
  pulse.validate();
  if (length < 1 || length % 2 == 0) throw ConfigError("wiener_kernel: length must be odd");
  if (!(regularizer > 0.0)) throw ConfigError("wiener_kernel: regularizer must be positive");
  const int fft_size = 256;
  const int half = fft_size / 2;
  // pulse sampled on a centred grid, index 0 <-> t = 0 (circular)
  std::vector<double> p(fft_size, 0.0);
  for (int k = -half; k < half; ++k) p[(k + fft_size) % fft_size] = pulse(k / sampling_freq);

  using cd = std::complex<double>;
  std::vector<cd> spectrum(fft_size);
  for (int f = 0; f < fft_size; ++f) {
    cd acc = 0.0;
    for (int k = 0; k < fft_size; ++k) acc += p[k] * std::polar(1.0, -2.0 * std::numbers::pi * f * k / fft_size);
    spectrum[f] = acc;
  }
  double peak = 0.0;
  for (const auto& s : spectrum) peak = std::max(peak, std::norm(s));
  const double eps = regularizer * peak;
  std::vector<cd> inverse(fft_size);
  for (int f = 0; f < fft_size; ++f) inverse[f] = std::conj(spectrum[f]) / (std::norm(spectrum[f]) + eps);

  DeconvKernel kernel;
  kernel.taps.resize(static_cast<std::size_t>(length));
  const int h = (length - 1) / 2;
  for (int m = -h; m <= h; ++m) {
    cd acc = 0.0;
    const int idx = (m + fft_size) % fft_size;
    for (int f = 0; f < fft_size; ++f) acc += inverse[f] * std::polar(1.0, 2.0 * std::numbers::pi * f * idx / fft_size);
    kernel.taps[static_cast<std::size_t>(m + h)] = acc.real() / fft_size;
  }
  return kernel;
}

BeamformerMethod parse_beamformer(std::string_view name) {
  if (name == "das") return BeamformerMethod::kDas;
  if (name == "mvbf") return BeamformerMethod::kMvbf;
  if (name == "das+deconv") return BeamformerMethod::kDasDeconv;
  throw ConfigError("unknown beamformer '" + std::string(name) + "'");
}

std::string_view beamformer_name(BeamformerMethod method) {
  switch (method) {
    case BeamformerMethod::kDas:
      return "das";
    case BeamformerMethod::kMvbf:
      return "mvbf";
    case BeamformerMethod::kDasDeconv:
      return "das+deconv";
  }
  return "unknown";
}

BeamformedLines beamform(const RfCube& z, const BeamformerSettings& settings, const ChannelMask* mask) {
  switch (settings.method) {
    case BeamformerMethod::kDas:
      return das(z, mask);
    case BeamformerMethod::kMvbf:
      return mvbf(z, settings.mv, mask);
    case BeamformerMethod::kDasDeconv:
      return deconvolve(das(z, mask), settings.kernel);
  }
  throw ConfigError("unknown beamformer");
}

}  // namespace ubf
