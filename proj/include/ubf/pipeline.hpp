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
#include <optional>
#include <string>
#include <vector>

#include "ubf/acoustic_sim.hpp"
#include "ubf/beamformers.hpp"
#include "ubf/focusing.hpp"
#include "ubf/iq.hpp"
#include "ubf/metrics.hpp"
#include "ubf/network.hpp"
#include "ubf/subsampling.hpp"

namespace ubf {

// Probe, pulse and noise settings shared by every simulated frame.
struct SimulationConfig {
  ProbeConfig probe = ProbeConfig::desk();
  PulseModel pulse;
  double noise_std = 0.0;
  Interpolation interpolation = Interpolation::kLinear;
};

// Either a named scenario or an explicit phantom.
struct PhantomSpec {
  PhantomKind kind = PhantomKind::kCystGrid;
  std::uint64_t seed = 1;
  std::optional<Phantom> custom;

  Phantom build(const SimulationConfig& sim) const;
};

// A simulated acquisition focused onto the receive apertures, full data.
struct Frame {
  Phantom phantom;
  RfCube aperture;
};

Frame make_frame(const SimulationConfig& sim, const PhantomSpec& phantom, std::uint64_t noise_seed);

// Standalone simulation request: "probe", "pulse", "noise_std",
// "interpolation", "phantom" and "seed" keys.
struct SimulateRequest {
  SimulationConfig sim;
  PhantomSpec phantom;
  std::uint64_t seed = 1;
};
SimulateRequest parse_simulate_config(const std::string& json_text);

// Network and optimiser settings: {"arch": {...}, "train": {...}}. Fields not
// given keep the values of `arch` and `train`.
struct TrainRequest {
  ArchSpec arch;
  TrainConfig train;
};
TrainRequest parse_train_config(const std::string& json_text, TrainRequest defaults);

// Beamformer, or a trained network loaded from a checkpoint.
struct MethodSpec {
  std::string label;  // "das", "mvbf", "das+deconv" or "deepbf:<path>"
  std::optional<BeamformerSettings> classic;
  std::optional<NetworkParams> network;
};

// Relative checkpoint paths in "deepbf:<path>" resolve against base_dir.
MethodSpec parse_method(const std::string& label, const MvConfig& mv, const DeconvKernel& kernel,
                        const std::filesystem::path& base_dir = {});

// Runs one method on a (possibly masked) aperture cube and returns IQ data.
IqImage run_method(const MethodSpec& method, const RfCube& z, const HilbertKernel& hilbert, double dynamic_range_db);

// Anechoic ROI: pixels within 0.8 r of the first anechoic disc centre.
// Background: the ring between 1.2 r and 2 r, clipped to the image.
// Throws ConfigError for a phantom without anechoic discs.
RoiPair phantom_rois(const Phantom& phantom, const ProbeConfig& probe);

// ROI label raster for the metrics CLI: 128 background, 255 anechoic, 0 else.
GrayImage roi_labels(const RoiPair& roi);
RoiPair roi_from_labels(const GrayImage& labels);

// The pixel at which lateral/axial profiles are cut: the first anechoic disc
// centre, else the first point scatterer, else the image centre.
std::pair<std::size_t, std::size_t> profile_center(const Phantom& phantom, const ProbeConfig& probe);

// -6 dB width (m) of the lateral profile through the brightest pixel of the
// given depth row, linearly interpolated between scanlines.
double lateral_width_6db(const Matrix& bmode_db, const ProbeConfig& probe, std::size_t depth);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "ubf_out";
  SimulationConfig sim;
  PhantomSpec phantom;
  std::vector<double> factors{1.0};
  Selection selection = Selection::kRandom;
  DepthMode depth_mode = DepthMode::kVariable;
  std::vector<std::string> methods{"das"};
  // Directory that relative checkpoint paths in method labels resolve against.
  std::filesystem::path base_dir;
  std::string reference = "das";
  MvConfig mv;
  int deconv_length = 31;
  double deconv_regularizer = 1e-2;
  int hilbert_length = 63;
  double dynamic_range_db = 60.0;
  bool write_cubes = true;

  void validate() const;
};

// Parses the JSON experiment description. Paths inside are resolved against
// `base_dir`.
ExperimentConfig parse_experiment(const std::string& json_text, const std::filesystem::path& base_dir = {});
std::string experiment_hash(const std::string& json_text);

struct SweepRow {
  double factor = 1.0;
  int keep_count = 0;
  std::string method;
  std::string status = "ok";
  MetricReport metrics;   // PSNR/SSIM against the configured reference on full data
  double psnr_self = 0.0;  // PSNR/SSIM against the same method on full data
  double ssim_self = 0.0;
  double lateral_width = 0.0;  // -6 dB width at the profile centre, m
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<std::filesystem::path> files;
};

// Runs the full chain for every (factor, method) cell and writes its
// artifacts under output_dir. A failing cell is reported in its row and does not stop the
// others.
SweepReport run_pipeline(const ExperimentConfig& cfg);

std::string format_metrics_csv(const std::vector<SweepRow>& rows);

// Training-set construction.
struct DatasetConfig {
  std::uint64_t seed = 1;
  SimulationConfig sim;
  std::vector<PhantomSpec> frames;
  std::size_t count = 3600;
  // Train and validation shares; 5:1 by default.
  std::size_t train_share = 5;
  std::size_t val_share = 1;
  std::vector<int> keep_counts{64, 32, 16, 8};
  Selection selection = Selection::kRandom;
  DepthMode depth_mode = DepthMode::kVariable;
  BeamformerSettings target;
  int hilbert_length = 63;
  int depth_planes = 3;

  void validate() const;
};

DatasetConfig parse_dataset_config(const std::string& json_text);

struct Dataset {
  int depth_planes = 3;
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> validation;
};

// Train/validation sizes for a total count, preserving the share ratio.
std::pair<std::size_t, std::size_t> split_sizes(std::size_t count, std::size_t train_share, std::size_t val_share);

// Draws `count` slabs uniformly over frames and depths, cycling through the
// keep counts. Targets come from the target beamformer on the full frame.
Dataset build_dataset(const std::vector<Frame>& frames, const DatasetConfig& cfg);

// Simulates the configured frames and builds the dataset from them.
Dataset build_dataset(const DatasetConfig& cfg);

// "UBFD": magic, u32 version, u32 planes, L, C, train and validation counts,
// then per entry its frame, depth, keep count, f64 scale, mask rows (u8), slab
// and target (f32).
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace ubf
