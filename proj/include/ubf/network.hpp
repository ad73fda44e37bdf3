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
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ubf/rfdata.hpp"

namespace ubf {

// Added to the variance inside every normalisation layer.
inline constexpr double kNormEpsilon = 1e-5;

enum class NormKind : std::uint8_t { kBatch = 0, kNone = 1 };

NormKind parse_norm_kind(std::string_view name);
std::string_view norm_kind_name(NormKind kind);

// Encoder-decoder layout over a [depth_planes x height x width] slab, where
// height runs over scanlines and width over receive channels.
//
// The encoder has `stages` stages of `convs_per_stage` 3x3 convolutions. A
// bridge of `convs_per_stage` convolutions follows. Each decoder stage first
// concatenates the mirrored encoder stage output along channels and then runs
// `convs_per_stage` convolutions, so convs_per_stage is also the skip cadence.
// A final 3x1 convolution maps to two channels (I and Q), averaged over width.
// With `bypass`, a learnable linear map of the per-plane width means is added
// to that output, so the convolutional path only models the residual.
struct ArchSpec {
  int stages = 1;
  int convs_per_stage = 2;
  int channels = 16;
  int depth_planes = 3;
  int height = 32;
  int width = 64;
  NormKind norm = NormKind::kBatch;
  // Additive terms on layers without normalisation, including the last one.
  bool bias = true;
  bool bypass = true;

  void validate() const;
  int conv_layers() const { return 2 * stages * convs_per_stage + convs_per_stage + 1; }
  std::size_t input_size() const;
  std::size_t output_size() const { return 2 * static_cast<std::size_t>(height); }

  // Four stages of four 64-channel convolutions on a 3 x 96 x 64 slab, no
  // bypass.
  static ArchSpec full_scale();
  bool operator==(const ArchSpec&) const = default;
};

struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  bool norm = false;
  bool relu = true;
  bool has_bias = false;
  std::vector<double> weights;  // [out x in x kh x kw]
  std::vector<double> bias;     // [out] or empty
  std::vector<double> gamma;    // [out] or empty
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  double& w(int o, int i, int ky, int kx) { return weights[((o * in_channels + i) * kernel_h + ky) * kernel_w + kx]; }
  double w(int o, int i, int ky, int kx) const {
    return weights[((o * in_channels + i) * kernel_h + ky) * kernel_w + kx];
  }
};

struct NetworkParams {
  ArchSpec arch;
  std::vector<ConvLayer> layers;
  // [2 x depth_planes] when arch.bypass, else empty.
  std::vector<double> bypass;

  // Layer shapes for `arch` with zero weights, unit gamma and unit running
  // variance.
  static NetworkParams zeros(const ArchSpec& arch);

  std::size_t trainable_count() const;
  // Visits every layer's parameters in a fixed order, then the bypass.
  void for_each_trainable(const std::function<void(double&)>& fn);
  void for_each_trainable(const std::function<void(double)>& fn) const;
  // Order-sensitive hash of every stored value, running statistics included.
  std::uint64_t checksum() const;
  // Throws NumericalError on a non-finite value, DimensionError on a shape
  // that disagrees with the layer description.
  void validate() const;
};

// Skip wiring of layer l: the encoder stage whose output is concatenated onto
// its input, and the stage index its own output is recorded as.
struct SkipLink {
  int concat_skip = -1;
  int save_skip = -1;
};
std::vector<SkipLink> skip_plan(const ArchSpec& arch);

// One layer's convolution of an [in x H x W] tensor with zero padding, plus
// the layer bias when `with_bias` is set. No normalisation or ReLU.
std::vector<double> conv_apply(const ConvLayer& layer, std::span<const double> in, int height, int width,
                               bool with_bias = true);

// Bypass contribution [2 x height] for one slab; zeros without a bypass.
std::vector<double> bypass_apply(const NetworkParams& params, std::span<const double> slab);

// Gaussian Xavier initialisation, std = sqrt(2 / (fan_in + fan_out)).
NetworkParams init_params(const ArchSpec& arch, std::uint64_t seed);

enum class Mode { kTrain, kInfer };

// One slab in, [2 x height] out (I row then Q row). Train mode normalises
// with the statistics of the slab itself, infer mode with running statistics.
std::vector<double> forward(const NetworkParams& params, std::span<const double> slab, Mode mode = Mode::kInfer);

// Batched forward; in train mode the normalisation statistics are shared
// across the batch.
std::vector<std::vector<double>> forward_batch(const NetworkParams& params,
                                               const std::vector<std::span<const double>>& slabs,
                                               Mode mode = Mode::kInfer);

struct LossGradient {
  double loss = 0.0;
  NetworkParams gradient;  // running statistics unused
  // Per-layer batch statistics in train mode, for running averages.
  std::vector<std::vector<double>> batch_mean;
  std::vector<std::vector<double>> batch_var;
};

// loss = (1/B) sum_b ||t_b - f(s_b)||^2 + lambda ||theta||^2 with exact
// gradients for the realised ReLU pattern.
LossGradient backward(const NetworkParams& params, const std::vector<std::span<const double>>& slabs,
                      const std::vector<std::span<const double>>& targets, double lambda, Mode mode = Mode::kTrain);

// A network input/target pair. Values are stored unnormalised; `scale` (the
// RMS of the masked frame the slab came from) divides both before they reach
// the network.
struct TrainingSample {
  std::vector<double> slab;    // [planes x L x C]
  std::vector<double> target;  // [2 x L]
  std::uint32_t frame = 0;
  std::uint32_t depth = 0;
  std::uint32_t keep_count = 0;
  std::vector<std::uint8_t> mask_rows;  // [planes x C]
  double scale = 1.0;
};

// Planes n-1, n, n+1 (or just n when planes == 1) of an aperture cube laid
// out [plane x scanline x channel]; edge planes are replicated. Each plane is
// scaled by C / J, the aperture size over the active channel count of the
// cube's mask at that depth, so its channel mean equals its DAS value.
std::vector<double> assemble_slab(const RfCube& z, std::size_t depth, int planes);

// RMS over the non-zero entries; 1 when every entry is zero.
double nonzero_rms(std::span<const double> values);

struct TrainConfig {
  double lr0 = 1e-4;
  double lr_final = 1e-7;
  int epochs = 200;
  int batch = 16;
  double lambda = 1e-4;
  double norm_momentum = 0.1;
  // Heavy-ball coefficient: v = momentum * v - lr * g, theta += v. 0 gives
  // plain SGD.
  double momentum = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  // lr0 * (lr_final / lr0)^(epoch / epochs)
  double learning_rate(double epoch) const;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Minibatch SGD, optionally with momentum. train() starts from Xavier weights and, with a
// bypass, its least-squares fit to the normalised samples. The sample order of each epoch is drawn from its own
// seeded stream, so two runs with the same seed produce identical weights.
// Throws NumericalError carrying the loss trace if the loss stops being finite.
TrainResult train(const std::vector<TrainingSample>& samples, const ArchSpec& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Same, continuing from existing parameters.
TrainResult train_from(NetworkParams params, const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

// Sets the bypass to the least-squares fit of the normalised targets alone.
void fit_bypass(NetworkParams& params, const std::vector<TrainingSample>& samples);

// Mean per-sample squared error on normalised samples (no regulariser).
double evaluate_loss(const NetworkParams& params, const std::vector<TrainingSample>& samples);

// Beamforms every depth of a (masked) aperture cube. Slabs are divided by the
// cube's non-zero RMS before the network and the output is scaled back.
IqImage infer_frame(const NetworkParams& params, const RfCube& z, double dynamic_range_db = 60.0);

// "UBFW": magic, u32 version, ArchSpec, u32 layer count, then per layer its
// shape, flags and f32 weights, bias, gamma, beta and running statistics,
// then the f32 bypass.
void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ubf
