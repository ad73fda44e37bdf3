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

#include "ubf/pwl.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "ubf/errors.hpp"
#include "ubf/random.hpp"

namespace ubf {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void require_norm_free(const NetworkParams& params) {
  for (const auto& layer : params.layers) {
    if (layer.norm) throw ConfigError("activation-region analysis needs a norm-free network; fold the norm first");
  }
}

std::vector<double> width_mean(const std::vector<double>& t, std::size_t rows, std::size_t width) {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = t.data() + r * width;
    out[r] = std::accumulate(row, row + width, 0.0) / static_cast<double>(width);
  }
  return out;
}

void append(std::vector<double>& dst, const std::vector<double>& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

NetworkParams fold_norm(const NetworkParams& params) {
  params.validate();
  ArchSpec arch = params.arch;
  arch.norm = NormKind::kNone;
  arch.bias = true;
  NetworkParams out = NetworkParams::zeros(arch);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const ConvLayer& src = params.layers[l];
    ConvLayer& dst = out.layers[l];
    const std::size_t per_out = src.weights.size() / static_cast<std::size_t>(src.out_channels);
    for (std::size_t o = 0; o < static_cast<std::size_t>(src.out_channels); ++o) {
      double scale = 1.0, shift = src.has_bias ? src.bias[o] : 0.0;
      if (src.norm) {
        const double inv = 1.0 / std::sqrt(src.running_var[o] + kNormEpsilon);
        scale = src.gamma[o] * inv;
        shift = src.beta[o] - src.gamma[o] * src.running_mean[o] * inv;
      }
      for (std::size_t k = 0; k < per_out; ++k) dst.weights[o * per_out + k] = src.weights[o * per_out + k] * scale;
      dst.bias[o] = shift;
    }
  }
  out.bypass = params.bypass;
  return out;
}

NetworkParams strip_bias(const NetworkParams& params) {
  require_norm_free(params);
  ArchSpec arch = params.arch;
  arch.bias = false;
  NetworkParams out = NetworkParams::zeros(arch);
  for (std::size_t l = 0; l < params.layers.size(); ++l) out.layers[l].weights = params.layers[l].weights;
  out.bypass = params.bypass;
  return out;
}

PwlMap extract_pwl(const NetworkParams& params, std::span<const double> z, bool materialize) {
  params.validate();
  require_norm_free(params);
  const ArchSpec& a = params.arch;
  if (z.size() != a.input_size()) throw DimensionError("extract_pwl: input size does not match the network");
  if (materialize && z.size() > kMaxDenseInput) {
    throw ConfigError("extract_pwl: input of " + std::to_string(z.size()) +
                      " values is too large for a dense operator; use mask_replay");
  }
  const auto width = static_cast<std::size_t>(a.width);
  const auto plan = skip_plan(a);
  PwlMap map;

  // Activation, plus the affine map from z: one column per input entry and an offset.
  std::vector<double> cur(z.begin(), z.end());
  std::vector<std::vector<double>> cols;
  std::vector<double> off;
  if (materialize) {
    cols.assign(z.size(), std::vector<double>(z.size(), 0.0));
    for (std::size_t k = 0; k < z.size(); ++k) cols[k][k] = 1.0;
    off.assign(z.size(), 0.0);
  }
  struct Saved {
    std::vector<double> act, off;
    std::vector<std::vector<double>> cols;
  };
  std::vector<Saved> skips(static_cast<std::size_t>(a.stages));

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const ConvLayer& layer = params.layers[l];
    if (plan[l].concat_skip >= 0) {
      const Saved& s = skips[static_cast<std::size_t>(plan[l].concat_skip)];
      append(cur, s.act);
      if (materialize) {
        append(off, s.off);
        for (std::size_t k = 0; k < cols.size(); ++k) append(cols[k], s.cols[k]);
      }
    }
    std::vector<double> pre = conv_apply(layer, cur, a.height, a.width, true);
    if (materialize) {
      off = conv_apply(layer, off, a.height, a.width, true);
      for (auto& c : cols) c = conv_apply(layer, c, a.height, a.width, false);
    }
    if (layer.relu) {
      std::vector<std::uint8_t> mask(pre.size());
      for (std::size_t k = 0; k < pre.size(); ++k) {
        mask[k] = pre[k] > 0.0 ? 1 : 0;
        if (pre[k] == 0.0) ++map.ties;
        if (!mask[k]) {
          pre[k] = 0.0;
          if (materialize) {
            off[k] = 0.0;
            for (auto& c : cols) c[k] = 0.0;
          }
        }
      }
      map.masks.push_back(std::move(mask));
    }
    cur = std::move(pre);
    if (plan[l].save_skip >= 0) skips[static_cast<std::size_t>(plan[l].save_skip)] = {cur, off, cols};
  }

  const std::size_t rows = a.output_size();
  map.output = width_mean(cur, rows, width);
  const auto extra = bypass_apply(params, z);
  for (std::size_t r = 0; r < rows; ++r) map.output[r] += extra[r];
  if (materialize) {
    map.offset = width_mean(off, rows, width);
    map.effective_linear = Matrix(rows, z.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto col = width_mean(cols[k], rows, width);
      for (std::size_t r = 0; r < rows; ++r) map.effective_linear(r, k) = col[r];
    }
    if (a.bypass) {
      // Input (p, y, x) reaches output row (o, y) with weight bypass[o, p] / W.
      const auto planes = static_cast<std::size_t>(a.depth_planes);
      const auto height = static_cast<std::size_t>(a.height);
      for (std::size_t k = 0; k < z.size(); ++k) {
        const std::size_t p = k / (height * width), y = (k / width) % height;
        for (std::size_t o = 0; o < 2; ++o) {
          map.effective_linear(o * height + y, k) += params.bypass[o * planes + p] / static_cast<double>(width);
        }
      }
    }
  }
  std::uint64_t h = kFnvOffset;
  for (const auto& mask : map.masks) {
    for (std::uint8_t bit : mask) h = (h ^ bit) * kFnvPrime;
  }
  map.region_id = h;
  return map;
}

std::vector<double> mask_replay(const NetworkParams& params, const std::vector<std::vector<std::uint8_t>>& masks,
                                std::span<const double> x) {
  params.validate();
  require_norm_free(params);
  const ArchSpec& a = params.arch;
  if (x.size() != a.input_size()) throw DimensionError("mask_replay: input size does not match the network");
  const auto plan = skip_plan(a);
  std::vector<std::vector<double>> skips(static_cast<std::size_t>(a.stages));
  std::vector<double> cur(x.begin(), x.end());
  std::size_t relu_index = 0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const ConvLayer& layer = params.layers[l];
    if (plan[l].concat_skip >= 0) append(cur, skips[static_cast<std::size_t>(plan[l].concat_skip)]);
    cur = conv_apply(layer, cur, a.height, a.width, true);
    if (layer.relu) {
      if (relu_index >= masks.size() || masks[relu_index].size() != cur.size()) {
        throw DimensionError("mask_replay: masks do not match the network");
      }
      const auto& mask = masks[relu_index++];
      for (std::size_t k = 0; k < cur.size(); ++k) {
        if (!mask[k]) cur[k] = 0.0;
      }
    }
    if (plan[l].save_skip >= 0) skips[static_cast<std::size_t>(plan[l].save_skip)] = cur;
  }
  std::vector<double> out = width_mean(cur, a.output_size(), static_cast<std::size_t>(a.width));
  const auto extra = bypass_apply(params, x);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] += extra[r];
  return out;
}

std::size_t count_regions(const NetworkParams& params, std::span<const double> z_a, std::span<const double> z_b,
                          std::size_t samples, std::uint64_t seed) {
  if (z_a.size() != z_b.size()) throw DimensionError("count_regions: segment endpoints differ in size");
  Rng rng(derive_seed(seed, {0xC0C0}));
  std::unordered_set<std::uint64_t> ids;
  std::vector<double> z(z_a.size());
  for (std::size_t s = 0; s < samples; ++s) {
    const double alpha = rng.uniform();
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = z_a[k] + alpha * (z_b[k] - z_a[k]);
    ids.insert(extract_pwl(params, z, false).region_id);
  }
  return ids.size();
}

AdaptivityReport adaptivity_probe(const NetworkParams& params, const std::vector<std::vector<double>>& inputs) {
  AdaptivityReport rep;
  for (const auto& z : inputs) {
    const PwlMap map = extract_pwl(params, z, true);
    rep.region_ids.push_back(map.region_id);
    const auto& v = map.effective_linear.values();
    rep.operator_norms.push_back(std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)));
  }
  const std::size_t k = inputs.size();
  rep.same_region = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) rep.same_region(i, j) = rep.region_ids[i] == rep.region_ids[j] ? 1.0 : 0.0;
  }
  return rep;
}

}  // namespace ubf
