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

#include <gtest/gtest.h>

#include <cmath>

#include "ubf/errors.hpp"
#include "ubf/network.hpp"
#include "ubf/pwl.hpp"
#include "ubf/random.hpp"

using namespace ubf;

namespace {

ArchSpec small_arch(NormKind norm = NormKind::kNone, bool bypass = true) {
  ArchSpec a;
  a.stages = 1;
  a.convs_per_stage = 1;
  a.channels = 3;
  a.depth_planes = 3;
  a.height = 4;
  a.width = 3;
  a.norm = norm;
  a.bypass = bypass;
  return a;
}

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

NetworkParams random_params(const ArchSpec& a, std::uint64_t seed) {
  NetworkParams p = NetworkParams::zeros(a);
  Rng rng(seed);
  p.for_each_trainable([&](double& v) { v = 0.5 * rng.normal(); });
  return p;
}

std::vector<double> affine(const PwlMap& m, const std::vector<double>& x) {
  std::vector<double> y = m.offset;
  for (std::size_t r = 0; r < m.effective_linear.rows(); ++r) {
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += m.effective_linear(r, c) * x[c];
  }
  return y;
}

// Single-pixel network whose units all switch at x = 0.
NetworkParams hinge_net() {
  ArchSpec a;
  a.stages = 1;
  a.convs_per_stage = 1;
  a.channels = 1;
  a.depth_planes = 1;
  a.height = 1;
  a.width = 1;
  a.norm = NormKind::kNone;
  a.bypass = false;
  NetworkParams p = NetworkParams::zeros(a);
  p.layers[0].w(0, 0, 1, 1) = 1.0;
  p.layers[1].w(0, 0, 1, 1) = 1.0;
  p.layers[2].w(0, 0, 1, 1) = 1.0;
  p.layers[2].w(0, 1, 1, 1) = 1.0;
  p.layers[3].w(0, 0, 1, 0) = 1.0;
  p.layers[3].w(1, 0, 1, 0) = -1.0;
  return p;
}

}  // namespace

TEST(Pwl, EffectiveMapReproducesForward) {
  const NetworkParams p = random_params(small_arch(), 1);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto z = randn(p.arch.input_size(), 10 + seed);
    const PwlMap m = extract_pwl(p, z);
    ASSERT_EQ(m.effective_linear.rows(), p.arch.output_size());
    ASSERT_EQ(m.effective_linear.cols(), p.arch.input_size());
    const auto f = forward(p, z);
    const auto y = affine(m, z);
    for (std::size_t k = 0; k < f.size(); ++k) {
      EXPECT_NEAR(m.output[k], f[k], 1e-12);
      EXPECT_NEAR(y[k], f[k], 1e-10);
    }
  }
}

TEST(Pwl, MapHoldsThroughoutTheRegion) {
  const NetworkParams p = random_params(small_arch(), 2);
  const auto z = randn(p.arch.input_size(), 20);
  const auto d = randn(p.arch.input_size(), 21);
  const PwlMap m = extract_pwl(p, z);
  std::vector<double> x = z;
  for (std::size_t k = 0; k < x.size(); ++k) x[k] += 1e-7 * d[k];
  ASSERT_EQ(extract_pwl(p, x, false).region_id, m.region_id);
  const auto f = forward(p, x);
  const auto y = affine(m, x);
  for (std::size_t k = 0; k < f.size(); ++k) EXPECT_NEAR(y[k], f[k], 1e-10);
  // Finite-difference Jacobian along d.
  for (std::size_t r = 0; r < f.size(); ++r) {
    double directional = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) directional += m.effective_linear(r, c) * d[c];
    EXPECT_NEAR((f[r] - m.output[r]) / 1e-7, directional, 1e-5);
  }
}

TEST(Pwl, MaskReplayMatchesDenseMap) {
  const NetworkParams p = random_params(small_arch(), 3);
  const auto z = randn(p.arch.input_size(), 30);
  const PwlMap m = extract_pwl(p, z);
  // Replay is the region's affine map, even for inputs outside the region.
  const auto x = randn(p.arch.input_size(), 31);
  const auto replay = mask_replay(p, m.masks, x);
  const auto y = affine(m, x);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(replay[k], y[k], 1e-10);
  const auto same = mask_replay(p, m.masks, z);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(same[k], m.output[k], 1e-12);
}

TEST(Pwl, FoldedNormIsEquivalentInInference) {
  NetworkParams p = random_params(small_arch(NormKind::kBatch), 4);
  Rng rng(5);
  for (auto& layer : p.layers) {
    for (auto& v : layer.running_mean) v = 0.3 * rng.normal();
    for (auto& v : layer.running_var) v = 0.5 + rng.uniform();
  }
  const NetworkParams f = fold_norm(p);
  EXPECT_EQ(f.arch.norm, NormKind::kNone);
  EXPECT_THROW(extract_pwl(p, randn(p.arch.input_size(), 1)), ConfigError);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto z = randn(p.arch.input_size(), 40 + seed);
    const auto a = forward(p, z, Mode::kInfer), b = forward(f, z, Mode::kInfer);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-10);
  }
}

TEST(Pwl, BiasFreeNetworkIsPositivelyHomogeneous) {
  const NetworkParams p = strip_bias(random_params(small_arch(), 6));
  const auto z = randn(p.arch.input_size(), 60);
  std::vector<double> z2 = z;
  for (auto& v : z2) v *= 2.0;
  const PwlMap a = extract_pwl(p, z), b = extract_pwl(p, z2);
  EXPECT_EQ(a.region_id, b.region_id);
  for (double v : a.offset) EXPECT_EQ(v, 0.0);
  for (std::size_t k = 0; k < a.output.size(); ++k) EXPECT_NEAR(b.output[k], 2.0 * a.output[k], 1e-12);
}

TEST(Pwl, AllPositiveNetworkHasOneRegionOnPositiveInputs) {
  NetworkParams p = random_params(small_arch(), 7);
  p.for_each_trainable([](double& v) { v = std::abs(v); });
  auto za = randn(p.arch.input_size(), 70), zb = randn(p.arch.input_size(), 71);
  for (auto& v : za) v = std::abs(v) + 0.1;
  for (auto& v : zb) v = std::abs(v) + 0.1;
  const PwlMap m = extract_pwl(p, za);
  for (const auto& layer : m.masks) {
    for (auto bit : layer) EXPECT_EQ(bit, 1);
  }
  EXPECT_EQ(count_regions(p, za, zb, 50, 1), 1u);
}

TEST(Pwl, ZeroWeightsGiveOneRegion) {
  const NetworkParams p = NetworkParams::zeros(small_arch());
  const auto za = randn(p.arch.input_size(), 1), zb = randn(p.arch.input_size(), 2);
  EXPECT_EQ(count_regions(p, za, zb, 100, 3), 1u);
  EXPECT_GT(extract_pwl(p, za).ties, 0u);
}

TEST(Pwl, SingleHingeGivesTwoRegions) {
  const NetworkParams p = hinge_net();
  const std::vector<double> za{-1.0}, zb{1.0};
  EXPECT_EQ(count_regions(p, za, zb, 1000, 4), 2u);
  EXPECT_EQ(count_regions(p, std::vector<double>{0.5}, zb, 100, 4), 1u);
  EXPECT_NEAR(forward(p, zb)[0], 2.0, 1e-15);
  EXPECT_NEAR(forward(p, za)[0], 0.0, 1e-15);
}

TEST(Pwl, AdaptivityReport) {
  const NetworkParams p = random_params(small_arch(), 8);
  std::vector<std::vector<double>> inputs;
  for (std::uint64_t s = 0; s < 3; ++s) inputs.push_back(randn(p.arch.input_size(), 80 + s));
  inputs.push_back(inputs[0]);
  const AdaptivityReport rep = adaptivity_probe(p, inputs);
  ASSERT_EQ(rep.region_ids.size(), 4u);
  EXPECT_EQ(rep.region_ids[0], rep.region_ids[3]);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rep.same_region(i, i), 1.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(rep.same_region(i, j), rep.same_region(j, i));
  }
  const PwlMap m = extract_pwl(p, inputs[1]);
  double fro = 0.0;
  for (double v : m.effective_linear.values()) fro += v * v;
  EXPECT_NEAR(rep.operator_norms[1], std::sqrt(fro), 1e-10);
}

TEST(Pwl, InputValidation) {
  const NetworkParams p = random_params(small_arch(), 9);
  EXPECT_THROW(extract_pwl(p, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(count_regions(p, std::vector<double>(5), std::vector<double>(6), 10), DimensionError);
  const PwlMap m = extract_pwl(p, randn(p.arch.input_size(), 1));
  auto masks = m.masks;
  masks.pop_back();
  EXPECT_THROW(mask_replay(p, masks, randn(p.arch.input_size(), 1)), DimensionError);
}
