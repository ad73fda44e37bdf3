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

#include "ubf/subsampling.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "ubf/errors.hpp"
#include "ubf/random.hpp"

namespace ubf {

namespace {

constexpr std::uint64_t kFixedStream = 0xF1ED;
constexpr std::uint64_t kVariableStream = 0x5A1E;

std::vector<std::uint8_t> random_row(std::size_t channels, std::size_t keep, Rng& rng) {
  std::vector<std::uint8_t> row(channels, 0);
  if (keep >= channels) {
    std::fill(row.begin(), row.end(), 1);
    return row;
  }
  const auto [c0, c1] = center_pair(channels);
  row[c0] = 1;
  row[c1] = 1;
  std::vector<std::size_t> pool;
  pool.reserve(channels - 2);
  for (std::size_t c = 0; c < channels; ++c) {
    if (c != c0 && c != c1) pool.push_back(c);
  }
  // partial Fisher-Yates over the non-centre channels
  for (std::size_t k = 0; k + 2 < keep; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng.below(pool.size() - k));
    std::swap(pool[k], pool[pick]);
    row[pool[k]] = 1;
  }
  return row;
}

std::vector<std::uint8_t> uniform_row(std::size_t channels, std::size_t keep) {
  std::vector<std::uint8_t> row(channels, 0);
  const double stride = static_cast<double>(channels) / static_cast<double>(keep);
  const double anchor = static_cast<double>(center_pair(channels).first);
  const double phase = anchor - std::floor(anchor / stride) * stride;
  for (std::size_t k = 0; k < keep; ++k) {
    const auto idx = static_cast<std::size_t>(std::floor(phase + static_cast<double>(k) * stride + 1e-9));
    row[std::min(idx, channels - 1)] = 1;
  }
  return row;
}

}  // namespace

Selection parse_selection(std::string_view name) {
  if (name == "random") return Selection::kRandom;
  if (name == "uniform") return Selection::kUniform;
  throw ConfigError("unknown selection '" + std::string(name) + "'");
}

DepthMode parse_depth_mode(std::string_view name) {
  if (name == "fixed") return DepthMode::kFixed;
  if (name == "variable") return DepthMode::kVariable;
  throw ConfigError("unknown depth mode '" + std::string(name) + "'");
}

void SamplingScheme::validate(std::size_t channels) const {
  if (keep_count < 1 || static_cast<std::size_t>(keep_count) > channels) {
    throw ConfigError("keep_count must lie in [1, " + std::to_string(channels) + "]");
  }
  if (selection == Selection::kRandom && keep_count < 2 && static_cast<std::size_t>(keep_count) < channels) {
    throw ConfigError("random selection needs keep_count >= 2 (the centre pair is always kept)");
  }
}

int keep_count_for_factor(double factor, std::size_t channels) {
  if (!(factor >= 1.0)) throw ConfigError("subsampling factor must be >= 1");
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(channels) / factor)));
}

std::pair<std::size_t, std::size_t> center_pair(std::size_t channels) {
  if (channels < 2) throw ConfigError("centre pair needs at least two channels");
  return {channels / 2 - 1, channels / 2};
}

ChannelMask make_mask(const SamplingScheme& scheme, std::size_t channels, std::size_t depths) {
  scheme.validate(channels);
  const auto keep = static_cast<std::size_t>(scheme.keep_count);
  if (scheme.selection == Selection::kUniform) return ChannelMask::fixed(uniform_row(channels, keep));
  if (scheme.depth_mode == DepthMode::kFixed) {
    Rng rng(derive_seed(scheme.seed, {kFixedStream}));
    return ChannelMask::fixed(random_row(channels, keep, rng));
  }
  std::vector<std::uint8_t> bits;
  bits.reserve(channels * depths);
  for (std::size_t n = 0; n < depths; ++n) {
    Rng rng(derive_seed(scheme.seed, {kVariableStream, n}));
    const auto row = random_row(channels, keep, rng);
    bits.insert(bits.end(), row.begin(), row.end());
  }
  return ChannelMask::variable(depths, channels, std::move(bits));
}

RfCube apply_mask(const RfCube& z, const ChannelMask& mask) {
  if (z.kind != CubeKind::kAperture) throw ConfigError("apply_mask expects an aperture cube");
  mask.check_compatible(z.depths(), z.channels());
  RfCube out = z;
  for (std::size_t l = 0; l < z.scanlines(); ++l) {
    for (std::size_t n = 0; n < z.depths(); ++n) {
      auto row = out.data.row(l, n);
      const auto bits = mask.row(n);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (!bits[c]) row[c] = 0.0;
      }
    }
  }
  if (!z.mask) {
    out.mask = mask;
  } else if (!(*z.mask == mask)) {
    std::vector<std::uint8_t> bits(z.depths() * z.channels());
    for (std::size_t n = 0; n < z.depths(); ++n) {
      for (std::size_t c = 0; c < z.channels(); ++c) {
        bits[n * z.channels() + c] = (z.mask->active(n, c) && mask.active(n, c)) ? 1 : 0;
      }
    }
    out.mask = ChannelMask::variable(z.depths(), z.channels(), std::move(bits));
  }
  return out;
}

}  // namespace ubf
