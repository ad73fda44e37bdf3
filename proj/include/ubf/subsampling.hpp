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
#include <string_view>
#include <vector>

#include "ubf/rfdata.hpp"

namespace ubf {

enum class Selection { kRandom, kUniform };
enum class DepthMode { kFixed, kVariable };

Selection parse_selection(std::string_view name);
DepthMode parse_depth_mode(std::string_view name);

// Receive-channel subsampling. Typical keep counts for a 64-channel aperture
// are 64, 32, 24, 16, 8 and 4 (factors 1, 2, 2.7, 4, 8, 16).
struct SamplingScheme {
  int keep_count = 64;
  Selection selection = Selection::kRandom;
  DepthMode depth_mode = DepthMode::kVariable;
  std::uint64_t seed = 0;

  void validate(std::size_t channels) const;
  double factor(std::size_t channels) const { return static_cast<double>(channels) / keep_count; }
};

// Keep count for a subsampling factor, e.g. 4 -> 16 of 64 channels.
int keep_count_for_factor(double factor, std::size_t channels);

// Indices C/2 - 1 and C/2.
std::pair<std::size_t, std::size_t> center_pair(std::size_t channels);

// Random selection always keeps the centre pair and draws the rest uniformly
// without replacement from the other channels. Uniform selection places
// keep_count channels on a grid of stride C/keep anchored at channel C/2 - 1
// and is identical for every depth. Variable masks draw each depth row from
// its own (seed, depth) stream; fixed masks draw once and broadcast.
ChannelMask make_mask(const SamplingScheme& scheme, std::size_t channels, std::size_t depths);

// Zeroes inactive channels and attaches the mask (intersected with any mask
// already attached) for downstream channel counting.
RfCube apply_mask(const RfCube& z, const ChannelMask& mask);

}  // namespace ubf
