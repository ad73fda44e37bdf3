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

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ubf/acoustic_sim.hpp"
#include "ubf/rfdata.hpp"

namespace ubf {

// Beamformer output u[l, n] before the Hilbert stage.
struct BeamformedLines {
  Matrix u;  // [L x N]
};

struct MvConfig {
  int subaperture = 16;        // K
  double diagonal_loading = 1e-2;  // Delta, relative to trace(R) / K

  void validate() const;
};

struct DeconvKernel {
  std::vector<double> taps;  // odd length, applied along depth

  void validate() const;
  static DeconvKernel identity() { return {{1.0}}; }
};

// Mask used by a beamformer: the explicit one, else the cube's attached mask,
// else every channel.
ChannelMask effective_mask(const RfCube& z, const ChannelMask* mask);

// u[l,n] = (1/J) * sum of the J active channels of z[l,n,:].
BeamformedLines das(const RfCube& z, const ChannelMask* mask = nullptr);

// w = Rl^-1 1 / (1^T Rl^-1 1) with Rl = R + loading * trace(R) / K * I.
std::vector<double> mv_weights(const Matrix& covariance, double loading);

// Minimum-variance beamformer with subaperture averaging: the J active
// channels are compacted, the covariance is averaged over the J-K+1 windows of
// length K, and the output is the weighted average of the windows.
BeamformedLines mvbf(const RfCube& z, const MvConfig& cfg, const ChannelMask* mask = nullptr);

// Per-scanline convolution along depth, zero-padded, same length.
BeamformedLines deconvolve(const BeamformedLines& u, const DeconvKernel& kernel);

// Regularised inverse of the simulator pulse: H = P* / (|P|^2 + eps * max|P|^2),
// truncated to `length` centred taps.
DeconvKernel wiener_kernel(const PulseModel& pulse, double sampling_freq, int length = 31,
                           double regularizer = 1e-2);

enum class BeamformerMethod { kDas, kMvbf, kDasDeconv };

BeamformerMethod parse_beamformer(std::string_view name);
std::string_view beamformer_name(BeamformerMethod method);

struct BeamformerSettings {
  BeamformerMethod method = BeamformerMethod::kDas;
  MvConfig mv;
  DeconvKernel kernel = DeconvKernel::identity();
};

BeamformedLines beamform(const RfCube& z, const BeamformerSettings& settings, const ChannelMask* mask = nullptr);

}  // namespace ubf
