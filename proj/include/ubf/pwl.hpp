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
#include <span>
#include <vector>

#include "ubf/network.hpp"

namespace ubf {

// Replaces every normalisation layer by its inference-mode affine equivalent:
// w' = w * gamma / sqrt(var + eps), b' = beta - gamma * mean / sqrt(var + eps).
// The result has norm = none and bias = true and computes the same function
// as the original in infer mode.
NetworkParams fold_norm(const NetworkParams& params);

// Zeroes every additive term, giving a positively homogeneous network.
NetworkParams strip_bias(const NetworkParams& params);

// The activation region of one input and, for small networks, the affine map
// the network realises on it: forward(x) = effective_linear * x + offset for
// every x sharing the ReLU pattern.
struct PwlMap {
  // One 0/1 entry per ReLU, layer by layer.
  std::vector<std::vector<std::uint8_t>> masks;
  Matrix effective_linear;      // [output x input]; empty when not materialised
  std::vector<double> offset;   // [output]; zero for bias-free networks
  std::vector<double> output;   // forward(z)
  std::uint64_t region_id = 0;  // FNV-1a over the concatenated mask bits
  // Pre-activations exactly equal to zero. They are counted as off.
  std::size_t ties = 0;
};

// Largest input size for which extract_pwl builds the dense operator.
inline constexpr std::size_t kMaxDenseInput = 4096;

// Records every ReLU pattern during one forward pass of a norm-free network
// and, when `materialize` is set, composes the masked layer operators
// (including the skip concatenations) into the dense effective map.
PwlMap extract_pwl(const NetworkParams& params, std::span<const double> z, bool materialize = true);

// Affine map of a fixed activation region applied to x without forming the
// dense operator: a forward pass whose ReLUs follow `masks` instead of signs.
std::vector<double> mask_replay(const NetworkParams& params, const std::vector<std::vector<std::uint8_t>>& masks,
                                std::span<const double> x);

// Distinct region ids met at `samples` points z_a + alpha (z_b - z_a), alpha
// drawn uniformly from [0, 1] with a seeded stream.
std::size_t count_regions(const NetworkParams& params, std::span<const double> z_a, std::span<const double> z_b,
                          std::size_t samples, std::uint64_t seed = 0);

struct AdaptivityReport {
  std::vector<std::uint64_t> region_ids;
  Matrix same_region;                  // [k x k], 1 where the region ids agree
  std::vector<double> operator_norms;  // Frobenius norm of each effective map
};

AdaptivityReport adaptivity_probe(const NetworkParams& params, const std::vector<std::vector<double>>& inputs);

}  // namespace ubf
