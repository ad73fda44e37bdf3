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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ubf/acoustic_sim.hpp"
#include "ubf/beamformers.hpp"
#include "ubf/errors.hpp"
#include "ubf/focusing.hpp"
#include "ubf/iq.hpp"
#include "ubf/metrics.hpp"
#include "ubf/network.hpp"
#include "ubf/pipeline.hpp"
#include "ubf/pwl.hpp"
#include "ubf/rfdata.hpp"
#include "ubf/subsampling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ubf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

RfCube read_aperture(const fs::path& path) {
  RfCube z = read_cube(path);
  if (z.kind != CubeKind::kAperture) throw ConfigError(path.string() + " is not an aperture cube");
  return z;
}

// Inverse of the display mapping: level 0 is -dr dB, 255 is 0 dB.
Matrix pgm_to_db(const GrayImage& img, double dr) {
  Matrix m(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) m(x, y) = img.at(x, y) / 255.0 * dr - dr;
  }
  return m;
}

void write_iq_outputs(const IqImage& iq, const ProbeConfig& probe, const std::string& out, const std::string& pgm,
                      double dr) {
  if (!out.empty()) write_iq(iq, probe, out);
  if (!pgm.empty()) write_pgm(pgm, to_display(iq.bmode_db(), dr));
}

struct SimulateArgs {
  std::string config, probe, phantom, out, roi_out, interp;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
};

void cmd_simulate(const SimulateArgs& a) {
  json j = a.config.empty() ? json::object() : json::parse(read_text(a.config), nullptr, false);
  if (j.is_discarded()) throw ConfigError(a.config + " is not valid JSON");
  if (!a.probe.empty()) j["probe"]["preset"] = a.probe;
  if (!a.phantom.empty()) j["phantom"] = {{"kind", a.phantom}};
  if (a.seed) j["seed"] = *a.seed;
  if (a.noise) j["noise_std"] = *a.noise;
  if (!a.interp.empty()) j["interpolation"] = a.interp;
  const SimulateRequest req = parse_simulate_config(j.dump());
  PhantomSpec spec = req.phantom;
  if (!j.contains("phantom") || !j["phantom"].contains("seed")) spec.seed = req.seed;
  const Phantom phantom = spec.build(req.sim);
  const RfCube raw = simulate_rf(phantom, req.sim.probe, req.sim.pulse, req.sim.noise_std, req.seed);
  write_cube(raw, a.out);
  if (!a.roi_out.empty()) write_pgm(a.roi_out, roi_labels(phantom_rois(phantom, req.sim.probe)));
}

void cmd_focus(const std::string& in, const std::string& out, const std::string& interp, std::optional<int> aperture) {
  RfCube raw = read_cube(in);
  if (raw.kind != CubeKind::kRaw) throw ConfigError(in + " is not a raw cube");
  if (aperture) {
    raw.probe.num_rx = *aperture;
    raw.probe.validate();
  }
  write_cube(focus(raw, parse_interpolation(interp)), out);
}

struct SubsampleArgs {
  std::string in, out, mask_out, selection = "random", depth_mode = "variable";
  std::optional<int> keep;
  std::optional<double> factor;
  std::uint64_t seed = 1;
};

void cmd_subsample(const SubsampleArgs& a) {
  const RfCube z = read_aperture(a.in);
  if (a.keep.has_value() == a.factor.has_value()) throw ConfigError("give exactly one of --keep and --factor");
  SamplingScheme scheme;
  scheme.keep_count = a.keep ? *a.keep : keep_count_for_factor(*a.factor, z.channels());
  scheme.selection = parse_selection(a.selection);
  scheme.depth_mode = parse_depth_mode(a.depth_mode);
  scheme.seed = a.seed;
  const ChannelMask mask = make_mask(scheme, z.channels(), z.depths());
  write_cube(apply_mask(z, mask), a.out);
  if (!a.mask_out.empty()) write_mask(mask, a.mask_out);
}

struct BeamformArgs {
  std::string in, method = "das", out, pgm, mask;
  int subaperture = 16;
  double loading = 1e-2;
  int deconv_length = 31;
  double deconv_regularizer = 1e-2;
  double fractional_bandwidth = 0.6;
  int hilbert_length = 63;
  double dr = 60.0;
};

void cmd_beamform(const BeamformArgs& a) {
  RfCube z = read_aperture(a.in);
  if (!a.mask.empty()) z = apply_mask(z, read_mask(a.mask));
  MvConfig mv{a.subaperture, a.loading};
  PulseModel pulse{z.probe.center_freq, a.fractional_bandwidth};
  const DeconvKernel kernel = wiener_kernel(pulse, z.probe.sampling_freq, a.deconv_length, a.deconv_regularizer);
  const MethodSpec method = parse_method(a.method, mv, kernel);
  const IqImage iq = run_method(method, z, hilbert_fir(a.hilbert_length), a.dr);
  write_iq_outputs(iq, z.probe, a.out, a.pgm, a.dr);
}

struct TrainArgs {
  std::string dataset, config, out, loss_csv;
  std::optional<int> epochs, batch, channels, stages, convs;
  std::optional<double> lr0, lr_final;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> norm;
};

void cmd_train(const TrainArgs& a) {
  const Dataset ds = read_dataset(a.dataset);
  if (ds.train.empty()) throw ConfigError("dataset has no training samples");
  TrainRequest req;
  req.arch.depth_planes = ds.depth_planes;
  req.arch.height = static_cast<int>(ds.train.front().target.size() / 2);
  req.arch.width = static_cast<int>(ds.train.front().slab.size() / (ds.depth_planes * req.arch.height));
  if (!a.config.empty()) req = parse_train_config(read_text(a.config), req);
  if (a.epochs) req.train.epochs = *a.epochs;
  if (a.batch) req.train.batch = *a.batch;
  if (a.lr0) req.train.lr0 = *a.lr0;
  if (a.lr_final) req.train.lr_final = *a.lr_final;
  if (a.seed) req.train.seed = *a.seed;
  if (a.channels) req.arch.channels = *a.channels;
  if (a.stages) req.arch.stages = *a.stages;
  if (a.convs) req.arch.convs_per_stage = *a.convs;
  if (a.norm) req.arch.norm = parse_norm_kind(*a.norm);
  req.arch.validate();
  req.train.validate();
  const TrainResult result = train(ds.train, req.arch, req.train, [&](int epoch, double loss) {
    std::cerr << "epoch " << epoch + 1 << "/" << req.train.epochs << " loss " << loss << "\n";
  });
  save_checkpoint(result.params, a.out);
  if (!a.loss_csv.empty()) {
    std::string csv = "epoch,train_loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) csv += std::to_string(e) + "," + fmt(result.epoch_loss[e]) + "\n";
    if (!ds.validation.empty()) csv += "validation," + fmt(evaluate_loss(result.params, ds.validation)) + "\n";
    write_text(a.loss_csv, csv);
  }
}

void cmd_infer(const std::string& model, const std::string& in, const std::string& out, const std::string& pgm,
               double dr) {
  const NetworkParams params = load_checkpoint(model);
  const RfCube z = read_aperture(in);
  write_iq_outputs(infer_frame(params, z, dr), z.probe, out, pgm, dr);
}

struct MetricsArgs {
  std::string ref, test, batch, roi, out;
  double dr = 60.0;
};

void cmd_metrics(const MetricsArgs& a) {
  if (a.test.empty() == a.batch.empty()) throw ConfigError("give exactly one of --test and --batch");
  const GrayImage ref_img = read_pgm(a.ref);
  const Matrix ref = pgm_to_db(ref_img, a.dr);
  std::optional<RoiPair> roi;
  if (!a.roi.empty()) roi = roi_from_labels(read_pgm(a.roi));
  std::vector<fs::path> tests;
  if (!a.test.empty()) {
    tests.push_back(a.test);
  } else {
    for (const auto& entry : fs::directory_iterator(a.batch)) {
      if (entry.is_regular_file() && entry.path().extension() == ".pgm") tests.push_back(entry.path());
    }
    std::sort(tests.begin(), tests.end());
  }
  std::string csv = "file,cr_db,cnr,gcnr,psnr_db,ssim\n";
  for (const auto& path : tests) {
    const Matrix test = pgm_to_db(read_pgm(path), a.dr);
    if (test.rows() != ref.rows() || test.cols() != ref.cols()) {
      throw DimensionError(path.string() + " does not match the reference size");
    }
    std::string row = path.filename().string();
    if (roi) {
      const MetricReport r = evaluate_all(ref, test, *roi, a.dr);
      row += "," + fmt(r.cr) + "," + fmt(r.cnr) + "," + fmt(r.gcnr) + "," + fmt(r.psnr) + "," + fmt(r.ssim);
    } else {
      const Matrix r8 = display_levels(ref_img), t8 = display_levels(read_pgm(path));
      row += ",,,," + fmt(psnr(r8, t8)) + "," + fmt(ssim(r8, t8));
    }
    csv += row + "\n";
  }
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
  }
}

struct PwlArgs {
  std::string model, in, to, out;
  std::size_t depth = 0;
  std::size_t samples = 200;
  std::uint64_t seed = 1;
};

std::vector<double> normalised_slab(const RfCube& z, std::size_t depth, int planes) {
  if (depth >= z.depths()) throw ConfigError("depth " + std::to_string(depth) + " is outside the cube");
  std::vector<double> slab = assemble_slab(z, depth, planes);
  const double scale = nonzero_rms(z.data.values());
  for (auto& v : slab) v /= scale;
  return slab;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void cmd_analyze_pwl(const PwlArgs& a) {
  const NetworkParams original = load_checkpoint(a.model);
  const NetworkParams params = original.arch.norm == NormKind::kNone ? original : fold_norm(original);
  const RfCube z = read_aperture(a.in);
  if (z.scanlines() != static_cast<std::size_t>(params.arch.height) ||
      z.channels() != static_cast<std::size_t>(params.arch.width)) {
    throw DimensionError("cube does not match the model input");
  }
  const std::vector<double> x = normalised_slab(z, a.depth, params.arch.depth_planes);
  const bool dense = x.size() <= kMaxDenseInput;
  const PwlMap map = extract_pwl(params, x, dense);
  const std::vector<double> replay = mask_replay(params, map.masks, x);
  const std::vector<double> reference = forward(original, x, Mode::kInfer);
  double num = 0.0, den = 0.0, fold_num = 0.0;
  for (std::size_t k = 0; k < replay.size(); ++k) {
    num += (replay[k] - map.output[k]) * (replay[k] - map.output[k]);
    fold_num += (reference[k] - map.output[k]) * (reference[k] - map.output[k]);
    den += map.output[k] * map.output[k];
  }
  std::size_t active = 0, total = 0;
  for (const auto& m : map.masks) {
    total += m.size();
    for (auto b : m) active += b;
  }
  json report;
  report["depth"] = a.depth;
  report["region_id"] = hex64(map.region_id);
  report["relu_units"] = total;
  report["relu_active"] = active;
  report["ties"] = map.ties;
  report["replay_relative_residual"] = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  report["fold_relative_residual"] = den > 0.0 ? std::sqrt(fold_num / den) : std::sqrt(fold_num);
  if (dense) {
    double fro = 0.0;
    for (double v : map.effective_linear.values()) fro += v * v;
    report["operator_frobenius"] = std::sqrt(fro);
  }
  std::vector<double> end(x.size(), 0.0);
  if (!a.to.empty()) {
    const RfCube zb = read_aperture(a.to);
    if (zb.scanlines() != z.scanlines() || zb.channels() != z.channels()) {
      throw DimensionError("segment end cube does not match the model input");
    }
    end = normalised_slab(zb, a.depth, params.arch.depth_planes);
  }
  report["segment_samples"] = a.samples;
  report["segment_regions"] = count_regions(params, x, end, a.samples, a.seed);
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
}

void cmd_sweep(const std::string& config) {
  const std::string text = read_text(config);
  const ExperimentConfig cfg = parse_experiment(text, fs::path(config).parent_path());
  std::cerr << "experiment " << experiment_hash(text) << "\n";
  const SweepReport report = run_pipeline(cfg);
  std::cout << format_metrics_csv(report.rows);
  for (const auto& row : report.rows) {
    if (row.status != "ok") throw NumericalError("sweep cell failed: " + row.method + ": " + row.status);
  }
}

void cmd_dataset(const std::string& config, const std::string& out) {
  const DatasetConfig cfg = parse_dataset_config(read_text(config));
  const Dataset ds = build_dataset(cfg);
  write_dataset(ds, out);
  std::cerr << "train " << ds.train.size() << " validation " << ds.validation.size() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound beamforming toolkit: simulation, classic and learned beamformers, metrics"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate raw channel data for a phantom");
  c_sim->add_option("--config", sim.config, "JSON with probe, pulse, noise_std, interpolation, phantom, seed");
  c_sim->add_option("--probe", sim.probe, "Probe preset: desk or full");
  c_sim->add_option("--phantom", sim.phantom, "cyst_grid, point_targets, speckle_with_anechoic, speckle, two_point");
  c_sim->add_option("--seed", sim.seed, "Noise and phantom seed");
  c_sim->add_option("--noise", sim.noise, "Additive noise standard deviation");
  c_sim->add_option("--interp", sim.interp, "Delay interpolation recorded for later stages");
  c_sim->add_option("--roi-out", sim.roi_out, "Write the phantom ROI labels as a PGM");
  c_sim->add_option("--out", sim.out, "Raw cube output")->required();

  std::string focus_in, focus_out, focus_interp = "linear";
  std::optional<int> focus_aperture;
  auto* c_focus = app.add_subcommand("focus", "Apply receive delays and extract the apertures");
  c_focus->add_option("--in", focus_in)->required();
  c_focus->add_option("--out", focus_out)->required();
  c_focus->add_option("--interp", focus_interp, "linear or nearest");
  c_focus->add_option("--aperture,-C", focus_aperture, "Receive aperture size, default from the cube header");

  SubsampleArgs sub;
  auto* c_sub = app.add_subcommand("subsample", "Mask receive channels of an aperture cube");
  c_sub->add_option("--in", sub.in)->required();
  c_sub->add_option("--out", sub.out)->required();
  c_sub->add_option("--mask-out", sub.mask_out);
  c_sub->add_option("--keep", sub.keep, "Channels kept per depth");
  c_sub->add_option("--factor", sub.factor, "Subsampling factor");
  c_sub->add_option("--selection", sub.selection, "random or uniform");
  c_sub->add_option("--depth-mode", sub.depth_mode, "variable or fixed");
  c_sub->add_option("--seed", sub.seed);

  BeamformArgs bf;
  auto* c_bf = app.add_subcommand("beamform", "Beamform an aperture cube to IQ data");
  c_bf->add_option("--in", bf.in)->required();
  c_bf->add_option("--method", bf.method, "das, mvbf, das+deconv or deepbf:<checkpoint>");
  c_bf->add_option("--mask", bf.mask, "Mask file applied before beamforming");
  c_bf->add_option("--subaperture,-K", bf.subaperture, "MV subaperture length");
  c_bf->add_option("--loading", bf.loading);
  c_bf->add_option("--deconv-length", bf.deconv_length);
  c_bf->add_option("--deconv-regularizer", bf.deconv_regularizer);
  c_bf->add_option("--bandwidth", bf.fractional_bandwidth, "Fractional bandwidth of the pulse to deconvolve");
  c_bf->add_option("--hilbert-length", bf.hilbert_length);
  c_bf->add_option("--dr,--dynamic-range", bf.dr, "Dynamic range in dB");
  c_bf->add_option("--out", bf.out, "IQ output");
  c_bf->add_option("--pgm", bf.pgm, "B-mode PGM output");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a network on a dataset archive");
  c_train->add_option("--dataset", tr.dataset)->required();
  c_train->add_option("--config", tr.config, "JSON with arch and train sections");
  c_train->add_option("--out", tr.out)->required();
  c_train->add_option("--loss-csv", tr.loss_csv);
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch", tr.batch);
  c_train->add_option("--lr0", tr.lr0);
  c_train->add_option("--lr-final", tr.lr_final);
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--channels", tr.channels);
  c_train->add_option("--stages", tr.stages);
  c_train->add_option("--convs-per-stage", tr.convs);
  c_train->add_option("--norm", tr.norm, "batch or none");

  std::string inf_model, inf_in, inf_out, inf_pgm;
  double inf_dr = 60.0;
  auto* c_infer = app.add_subcommand("infer", "Beamform an aperture cube with a trained network");
  c_infer->add_option("--model", inf_model)->required();
  c_infer->add_option("--in", inf_in)->required();
  c_infer->add_option("--out", inf_out);
  c_infer->add_option("--pgm", inf_pgm);
  c_infer->add_option("--dr,--dynamic-range", inf_dr);

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "Image quality of B-mode PGMs against a reference");
  c_met->add_option("--ref", met.ref)->required();
  c_met->add_option("--test", met.test);
  c_met->add_option("--batch", met.batch, "Directory of PGMs");
  c_met->add_option("--roi", met.roi, "ROI label PGM: 128 background, 255 anechoic");
  c_met->add_option("--dr,--dynamic-range", met.dr);
  c_met->add_option("--out", met.out, "CSV output, default stdout");

  PwlArgs pwl;
  auto* c_pwl = app.add_subcommand("analyze-pwl", "Activation region and linear map of a network at one input");
  c_pwl->add_option("--model", pwl.model)->required();
  c_pwl->add_option("--in", pwl.in)->required();
  c_pwl->add_option("--depth", pwl.depth);
  c_pwl->add_option("--to", pwl.to, "Segment end cube, default the zero input");
  c_pwl->add_option("--samples", pwl.samples);
  c_pwl->add_option("--seed", pwl.seed);
  c_pwl->add_option("--out", pwl.out, "JSON output, default stdout");

  std::string sweep_config;
  auto* c_sweep = app.add_subcommand("sweep", "Run an experiment grid");
  c_sweep->add_option("--config", sweep_config)->required();

  std::string ds_config, ds_out;
  auto* c_ds = app.add_subcommand("dataset", "Build a training archive");
  c_ds->add_option("--config", ds_config)->required();
  c_ds->add_option("--out", ds_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*c_sim) cmd_simulate(sim);
    if (*c_focus) cmd_focus(focus_in, focus_out, focus_interp, focus_aperture);
    if (*c_sub) cmd_subsample(sub);
    if (*c_bf) cmd_beamform(bf);
    if (*c_train) cmd_train(tr);
    if (*c_infer) cmd_infer(inf_model, inf_in, inf_out, inf_pgm, inf_dr);
    if (*c_met) cmd_metrics(met);
    if (*c_pwl) cmd_analyze_pwl(pwl);
    if (*c_sweep) cmd_sweep(sweep_config);
    if (*c_ds) cmd_dataset(ds_config, ds_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
