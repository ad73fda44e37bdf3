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

#include "ubf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "ubf/errors.hpp"
#include "ubf/iq.hpp"
#include "ubf/random.hpp"

namespace ubf {

namespace {

using json = nlohmann::json;

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint64_t kNoiseStream = 0x7015;
constexpr std::uint64_t kMaskStream = 0x3A5C;
constexpr std::uint64_t kSampleStream = 0xDA7A;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&key](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

ProbeConfig parse_probe(const json& j) {
  check_keys(j,
             {"preset", "num_elements", "num_tx", "num_scanlines", "num_rx", "pitch", "sampling_freq", "center_freq",
              "sound_speed", "axial_min", "axial_max", "focal_depth", "scanline_spacing"},
             "probe");
  const auto preset = get_or<std::string>(j, "preset", "desk");
  ProbeConfig p;
  if (preset == "desk") {
    p = ProbeConfig::desk();
  } else if (preset != "full") {
    throw ConfigError("unknown probe preset '" + preset + "'");
  }
  p.num_elements = get_or(j, "num_elements", p.num_elements);
  p.num_tx = get_or(j, "num_tx", p.num_tx);
  p.num_scanlines = get_or(j, "num_scanlines", p.num_scanlines);
  p.num_rx = get_or(j, "num_rx", p.num_rx);
  p.pitch = get_or(j, "pitch", p.pitch);
  p.sampling_freq = get_or(j, "sampling_freq", p.sampling_freq);
  p.center_freq = get_or(j, "center_freq", p.center_freq);
  p.sound_speed = get_or(j, "sound_speed", p.sound_speed);
  p.axial_min = get_or(j, "axial_min", p.axial_min);
  p.axial_max = get_or(j, "axial_max", p.axial_max);
  p.focal_depth = get_or(j, "focal_depth", p.focal_depth);
  p.scanline_spacing = get_or(j, "scanline_spacing", p.scanline_spacing);
  p.validate();
  return p;
}

SimulationConfig parse_simulation(const json& root) {
  SimulationConfig sim;
  if (root.contains("probe")) sim.probe = parse_probe(root.at("probe"));
  if (root.contains("pulse")) {
    const json& j = root.at("pulse");
    check_keys(j, {"center_freq", "fractional_bandwidth"}, "pulse");
    sim.pulse.center_freq = get_or(j, "center_freq", sim.probe.center_freq);
    sim.pulse.fractional_bandwidth = get_or(j, "fractional_bandwidth", sim.pulse.fractional_bandwidth);
  } else {
    sim.pulse.center_freq = sim.probe.center_freq;
  }
  sim.pulse.validate();
  sim.noise_std = get_or(root, "noise_std", 0.0);
  if (sim.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  sim.interpolation = parse_interpolation(get_or<std::string>(root, "interpolation", "linear"));
  return sim;
}

PhantomSpec parse_phantom(const json& j) {
  check_keys(j, {"kind", "seed", "scatterers", "anechoic", "speckle"}, "phantom");
  PhantomSpec spec;
  spec.seed = get_or<std::uint64_t>(j, "seed", 1);
  const bool custom = j.contains("scatterers") || j.contains("anechoic") || j.contains("speckle");
  if (custom) {
    if (j.contains("kind")) throw ConfigError("phantom: give either 'kind' or explicit geometry, not both");
    Phantom ph;
    for (const auto& s : get_or(j, "scatterers", json::array())) {
      if (!s.is_array() || s.size() < 2 || s.size() > 3) throw ConfigError("scatterer must be [x, z] or [x, z, amplitude]");
      ph.scatterers.push_back({s[0].get<double>(), s[1].get<double>(), s.size() == 3 ? s[2].get<double>() : 1.0});
    }
    for (const auto& d : get_or(j, "anechoic", json::array())) {
      check_keys(d, {"x", "z", "radius"}, "anechoic disc");
      ph.anechoic.push_back({get_or(d, "x", 0.0), get_or(d, "z", 0.0), get_or(d, "radius", 0.0)});
      if (!(ph.anechoic.back().radius > 0.0)) throw ConfigError("anechoic radius must be positive");
    }
    for (const auto& r : get_or(j, "speckle", json::array())) {
      check_keys(r, {"label", "x0", "x1", "z0", "z1", "density", "amplitude"}, "speckle region");
      SpeckleRegion reg;
      reg.label = get_or<std::string>(r, "label", "background");
      reg.rect = {get_or(r, "x0", 0.0), get_or(r, "x1", 0.0), get_or(r, "z0", 0.0), get_or(r, "z1", 0.0)};
      reg.density = get_or(r, "density", reg.density);
      reg.mean_amplitude = get_or(r, "amplitude", reg.mean_amplitude);
      ph.regions.push_back(reg);
    }
    spec.custom = std::move(ph);
  } else {
    spec.kind = parse_phantom_kind(get_or<std::string>(j, "kind", "cyst_grid"));
  }
  return spec;
}

std::string fmt(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string factor_tag(double factor) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "x%g", factor);
  return buf;
}

std::string method_tag(const std::string& label) {
  std::string tag = label.starts_with("deepbf:") ? "deepbf" : label;
  std::replace(tag.begin(), tag.end(), '+', '_');
  return tag;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

SimulateRequest parse_simulate_config(const std::string& json_text) {
  const json root = parse_json(json_text, "simulation config");
  check_keys(root, {"probe", "pulse", "noise_std", "interpolation", "phantom", "seed"}, "simulation config");
  SimulateRequest req;
  req.sim = parse_simulation(root);
  if (root.contains("phantom")) req.phantom = parse_phantom(root.at("phantom"));
  req.seed = get_or<std::uint64_t>(root, "seed", req.seed);
  return req;
}

TrainRequest parse_train_config(const std::string& json_text, TrainRequest req) {
  const json root = parse_json(json_text, "training config");
  check_keys(root, {"arch", "train"}, "training config");
  if (root.contains("arch")) {
    const json& j = root.at("arch");
    check_keys(j, {"stages", "convs_per_stage", "channels", "depth_planes", "height", "width", "norm", "bias", "bypass"}, "arch");
    ArchSpec& a = req.arch;
    a.stages = get_or(j, "stages", a.stages);
    a.convs_per_stage = get_or(j, "convs_per_stage", a.convs_per_stage);
    a.channels = get_or(j, "channels", a.channels);
    a.depth_planes = get_or(j, "depth_planes", a.depth_planes);
    a.height = get_or(j, "height", a.height);
    a.width = get_or(j, "width", a.width);
    if (j.contains("norm")) a.norm = parse_norm_kind(get_or<std::string>(j, "norm", "batch"));
    a.bias = get_or(j, "bias", a.bias);
    a.bypass = get_or(j, "bypass", a.bypass);
  }
  if (root.contains("train")) {
    const json& j = root.at("train");
    check_keys(j, {"lr0", "lr_final", "epochs", "batch", "lambda", "norm_momentum", "momentum", "seed"}, "train");
    TrainConfig& t = req.train;
    t.lr0 = get_or(j, "lr0", t.lr0);
    t.lr_final = get_or(j, "lr_final", t.lr_final);
    t.epochs = get_or(j, "epochs", t.epochs);
    t.batch = get_or(j, "batch", t.batch);
    t.lambda = get_or(j, "lambda", t.lambda);
    t.norm_momentum = get_or(j, "norm_momentum", t.norm_momentum);
    t.momentum = get_or(j, "momentum", t.momentum);
    t.seed = get_or<std::uint64_t>(j, "seed", t.seed);
  }
  req.arch.validate();
  req.train.validate();
  return req;
}

Phantom PhantomSpec::build(const SimulationConfig& sim) const {
  if (!custom) return standard_phantom(kind, sim.probe, seed, sim.pulse);
  Phantom ph = *custom;
  const auto regions = ph.regions;
  ph.regions.clear();
  for (std::size_t k = 0; k < regions.size(); ++k) {
    fill_speckle(ph, regions[k], sim.probe, sim.pulse, derive_seed(seed, {k}));
  }
  ph.validate(sim.probe);
  return ph;
}

Frame make_frame(const SimulationConfig& sim, const PhantomSpec& phantom, std::uint64_t noise_seed) {
  Frame f;
  f.phantom = phantom.build(sim);
  f.aperture = focus(simulate_rf(f.phantom, sim.probe, sim.pulse, sim.noise_std, noise_seed), sim.interpolation);
  return f;
}

namespace {

std::filesystem::path checkpoint_path(const std::string& label, const std::filesystem::path& base_dir) {
  const std::filesystem::path p = label.substr(7);
  if (p.empty()) throw ConfigError("deepbf method needs a checkpoint path, e.g. deepbf:model.ubfw");
  return p.is_relative() ? base_dir / p : p;
}

}  // namespace

MethodSpec parse_method(const std::string& label, const MvConfig& mv, const DeconvKernel& kernel,
                        const std::filesystem::path& base_dir) {
  MethodSpec m;
  m.label = label;
  if (label.starts_with("deepbf:")) {
    m.network = load_checkpoint(checkpoint_path(label, base_dir));
    return m;
  }
  BeamformerSettings s;
  s.method = parse_beamformer(label);
  s.mv = mv;
  s.kernel = kernel;
  m.classic = s;
  return m;
}

IqImage run_method(const MethodSpec& method, const RfCube& z, const HilbertKernel& hilbert, double dynamic_range_db) {
  if (method.network) return infer_frame(*method.network, z, dynamic_range_db);
  return to_analytic(beamform(z, *method.classic), hilbert, dynamic_range_db);
}

RoiPair phantom_rois(const Phantom& phantom, const ProbeConfig& probe) {
  if (phantom.anechoic.empty()) throw ConfigError("phantom has no anechoic region for contrast ROIs");
  const Disc& d = phantom.anechoic.front();
  RoiPair roi;
  roi.rows = static_cast<std::size_t>(probe.num_scanlines);
  roi.cols = static_cast<std::size_t>(probe.depth_count());
  roi.background.assign(roi.rows * roi.cols, 0);
  roi.anechoic.assign(roi.rows * roi.cols, 0);
  for (std::size_t l = 0; l < roi.rows; ++l) {
    const double x = probe.scanline_x(static_cast<int>(l));
    for (std::size_t n = 0; n < roi.cols; ++n) {
      const double r = std::hypot(x - d.x, probe.sample_depth(static_cast<double>(n)) - d.z);
      const bool elsewhere = std::any_of(phantom.anechoic.begin() + 1, phantom.anechoic.end(), [&](const Disc& o) {
        return o.contains(x, probe.sample_depth(static_cast<double>(n)));
      });
      if (r < 0.8 * d.radius) roi.anechoic[l * roi.cols + n] = 1;
      if (r > 1.2 * d.radius && r < 2.0 * d.radius && !elsewhere) roi.background[l * roi.cols + n] = 1;
    }
  }
  if (std::none_of(roi.anechoic.begin(), roi.anechoic.end(), [](auto v) { return v != 0; }) ||
      std::none_of(roi.background.begin(), roi.background.end(), [](auto v) { return v != 0; })) {
    throw ConfigError("anechoic ROIs fall outside the image grid");
  }
  return roi;
}

GrayImage roi_labels(const RoiPair& roi) {
  GrayImage img;
  img.width = roi.rows;
  img.height = roi.cols;
  img.pixels.assign(roi.rows * roi.cols, 0);
  for (std::size_t l = 0; l < roi.rows; ++l) {
    for (std::size_t n = 0; n < roi.cols; ++n) {
      const std::size_t k = l * roi.cols + n;
      img.pixels[n * img.width + l] = roi.anechoic[k] ? 255 : (roi.background[k] ? 128 : 0);
    }
  }
  return img;
}

RoiPair roi_from_labels(const GrayImage& labels) {
  RoiPair roi;
  roi.rows = labels.width;
  roi.cols = labels.height;
  roi.background.assign(roi.rows * roi.cols, 0);
  roi.anechoic.assign(roi.rows * roi.cols, 0);
  for (std::size_t l = 0; l < roi.rows; ++l) {
    for (std::size_t n = 0; n < roi.cols; ++n) {
      const auto v = labels.at(l, n);
      roi.background[l * roi.cols + n] = v == 128 ? 1 : 0;
      roi.anechoic[l * roi.cols + n] = v == 255 ? 1 : 0;
    }
  }
  return roi;
}

std::pair<std::size_t, std::size_t> profile_center(const Phantom& phantom, const ProbeConfig& probe) {
  double x = 0.0;
  double z = 0.5 * (probe.axial_min + probe.axial_max);
  if (!phantom.anechoic.empty()) {
    x = phantom.anechoic.front().x;
    z = phantom.anechoic.front().z;
  } else if (!phantom.scatterers.empty() && phantom.regions.empty()) {
    x = phantom.scatterers.front().x;
    z = phantom.scatterers.front().z;
  }
  const double spacing = probe.line_spacing();
  const long l = std::lround(x / spacing + probe.num_scanlines / 2.0);
  const long n = std::lround((z - probe.axial_min) * 2.0 * probe.sampling_freq / probe.sound_speed);
  return {static_cast<std::size_t>(std::clamp(l, 0L, static_cast<long>(probe.num_scanlines) - 1)),
          static_cast<std::size_t>(std::clamp(n, 0L, static_cast<long>(probe.depth_count()) - 1))};
}

double lateral_width_6db(const Matrix& bmode_db, const ProbeConfig& probe, std::size_t depth) {
  if (depth >= bmode_db.cols()) throw DimensionError("lateral_width_6db: depth outside the image");
  const std::size_t lines = bmode_db.rows();
  std::size_t peak = 0;
  for (std::size_t l = 1; l < lines; ++l) {
    if (bmode_db(l, depth) > bmode_db(peak, depth)) peak = l;
  }
  const double level = bmode_db(peak, depth) - 6.0;
  auto crossing = [&](int step) {
    long l = static_cast<long>(peak);
    while (true) {
      const long next = l + step;
      if (next < 0 || next >= static_cast<long>(lines)) return static_cast<double>(l);
      const double a = bmode_db(static_cast<std::size_t>(l), depth);
      const double b = bmode_db(static_cast<std::size_t>(next), depth);
      if (b < level) return static_cast<double>(l) + step * (a - level) / (a - b);
      l = next;
    }
  };
  return (crossing(+1) - crossing(-1)) * probe.line_spacing();
}

void ExperimentConfig::validate() const {
  sim.probe.validate();
  sim.pulse.validate();
  if (methods.empty()) throw ConfigError("methods must not be empty");
  if (factors.empty()) throw ConfigError("factors must not be empty");
  for (double f : factors) {
    SamplingScheme s;
    s.keep_count = keep_count_for_factor(f, static_cast<std::size_t>(sim.probe.num_rx));
    s.selection = selection;
    s.validate(static_cast<std::size_t>(sim.probe.num_rx));
  }
  mv.validate();
  if (dynamic_range_db <= 0.0) throw ConfigError("dynamic_range_db must be positive");
  std::vector<std::string> labels = methods;
  labels.push_back(reference);
  for (const auto& m : labels) {
    if (m.starts_with("deepbf:")) {
      const auto path = checkpoint_path(m, base_dir);
      if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    } else {
      parse_beamformer(m);
    }
  }
}

ExperimentConfig parse_experiment(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  check_keys(root,
             {"seed", "output_dir", "probe", "pulse", "noise_std", "interpolation", "phantom", "factors", "selection",
              "depth_mode", "methods", "reference", "mv", "deconv", "hilbert_length", "dynamic_range_db",
              "write_cubes"},
             "experiment config");
  ExperimentConfig cfg;
  cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed);
  const auto out = get_or<std::string>(root, "output_dir", "ubf_out");
  cfg.output_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base_dir / out;
  cfg.sim = parse_simulation(root);
  if (root.contains("phantom")) cfg.phantom = parse_phantom(root.at("phantom"));
  cfg.factors = get_or(root, "factors", cfg.factors);
  cfg.selection = parse_selection(get_or<std::string>(root, "selection", "random"));
  cfg.depth_mode = parse_depth_mode(get_or<std::string>(root, "depth_mode", "variable"));
  cfg.methods.clear();
  cfg.base_dir = base_dir;
  cfg.methods = get_or(root, "methods", std::vector<std::string>{"das"});
  cfg.reference = get_or<std::string>(root, "reference", "das");
  if (root.contains("mv")) {
    const json& j = root.at("mv");
    check_keys(j, {"subaperture", "diagonal_loading"}, "mv");
    cfg.mv.subaperture = get_or(j, "subaperture", cfg.mv.subaperture);
    cfg.mv.diagonal_loading = get_or(j, "diagonal_loading", cfg.mv.diagonal_loading);
  }
  if (root.contains("deconv")) {
    const json& j = root.at("deconv");
    check_keys(j, {"length", "regularizer"}, "deconv");
    cfg.deconv_length = get_or(j, "length", cfg.deconv_length);
    cfg.deconv_regularizer = get_or(j, "regularizer", cfg.deconv_regularizer);
  }
  cfg.hilbert_length = get_or(root, "hilbert_length", cfg.hilbert_length);
  cfg.dynamic_range_db = get_or(root, "dynamic_range_db", cfg.dynamic_range_db);
  cfg.write_cubes = get_or(root, "write_cubes", cfg.write_cubes);
  cfg.validate();
  return cfg;
}

std::string experiment_hash(const std::string& json_text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : json_text) h = (h ^ c) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_metrics_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "factor,keep_count,method,status,cr_db,cnr,gcnr,psnr_db,ssim,psnr_self_db,ssim_self,lateral_width_mm\n";
  for (const auto& r : rows) {
    os << fmt(r.factor, 3) << ',' << r.keep_count << ',' << r.method << ',' << r.status << ',' << fmt(r.metrics.cr)
       << ',' << fmt(r.metrics.cnr) << ',' << fmt(r.metrics.gcnr) << ',' << fmt(r.metrics.psnr) << ','
       << fmt(r.metrics.ssim) << ',' << fmt(r.psnr_self) << ',' << fmt(r.ssim_self) << ','
       << fmt(r.lateral_width * 1e3) << '\n';
  }
  return os.str();
}

SweepReport run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  const ProbeConfig& probe = cfg.sim.probe;
  const auto dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  SweepReport report;
  auto record = [&report](const std::filesystem::path& p) { report.files.push_back(p); };

  const Frame frame = make_frame(cfg.sim, cfg.phantom, derive_seed(cfg.seed, {kNoiseStream}));
  if (cfg.write_cubes) {
    write_cube(frame.aperture, dir / "aperture.ubf");
    record(dir / "aperture.ubf");
  }
  const HilbertKernel hilbert = hilbert_fir(cfg.hilbert_length);
  const DeconvKernel kernel = wiener_kernel(cfg.sim.pulse, probe.sampling_freq, cfg.deconv_length,
                                            cfg.deconv_regularizer);
  std::optional<RoiPair> roi;
  if (!frame.phantom.anechoic.empty()) {
    roi = phantom_rois(frame.phantom, probe);
    write_pgm(dir / "roi.pgm", roi_labels(*roi));
    record(dir / "roi.pgm");
  }
  const auto [center_l, center_n] = profile_center(frame.phantom, probe);
  const MetricsConfig mcfg;
  const double dr = cfg.dynamic_range_db;

  std::vector<MethodSpec> methods;
  for (const auto& label : cfg.methods) methods.push_back(parse_method(label, cfg.mv, kernel, cfg.base_dir));
  const MethodSpec reference = parse_method(cfg.reference, cfg.mv, kernel, cfg.base_dir);
  const Matrix ref_db = run_method(reference, frame.aperture, hilbert, dr).bmode_db();
  const Matrix ref8 = display_levels(to_display(ref_db, dr));

  // Full-data image of every method, for the self-referenced columns.
  std::vector<std::optional<Matrix>> self_ref(methods.size());

  for (std::size_t fi = 0; fi < cfg.factors.size(); ++fi) {
    const double factor = cfg.factors[fi];
    SamplingScheme scheme;
    scheme.keep_count = keep_count_for_factor(factor, static_cast<std::size_t>(probe.num_rx));
    scheme.selection = cfg.selection;
    scheme.depth_mode = cfg.depth_mode;
    scheme.seed = derive_seed(cfg.seed, {kMaskStream, fi});
    const ChannelMask mask = make_mask(scheme, static_cast<std::size_t>(probe.num_rx), frame.aperture.depths());
    const RfCube masked = apply_mask(frame.aperture, mask);
    const std::string ftag = factor_tag(factor);
    if (cfg.write_cubes) {
      write_mask(mask, dir / ("mask_" + ftag + ".ubf"));
      record(dir / ("mask_" + ftag + ".ubf"));
    }
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      SweepRow row;
      row.factor = factor;
      row.keep_count = scheme.keep_count;
      row.method = cfg.methods[mi];
      try {
        const IqImage iq = run_method(methods[mi], masked, hilbert, dr);
        const Matrix db = iq.bmode_db();
        const GrayImage gray = to_display(db, dr);
        const std::string stem = method_tag(cfg.methods[mi]) + "_" + ftag;
        write_pgm(dir / ("bmode_" + stem + ".pgm"), gray);
        record(dir / ("bmode_" + stem + ".pgm"));
        const Matrix test8 = display_levels(gray);
        if (roi) {
          row.metrics.cr = contrast_ratio(db, *roi);
          row.metrics.cnr = cnr(db, *roi);
          row.metrics.gcnr = gcnr(db, *roi, mcfg);
        } else {
          row.metrics.cr = row.metrics.cnr = row.metrics.gcnr = std::numeric_limits<double>::quiet_NaN();
        }
        row.metrics.psnr = psnr(ref8, test8, mcfg);
        row.metrics.ssim = ssim(ref8, test8, mcfg);
        if (!self_ref[mi]) {
          self_ref[mi] = display_levels(to_display(run_method(methods[mi], frame.aperture, hilbert, dr).bmode_db(), dr));
        }
        row.psnr_self = psnr(*self_ref[mi], test8, mcfg);
        row.ssim_self = ssim(*self_ref[mi], test8, mcfg);
        row.lateral_width = lateral_width_6db(db, probe, center_n);

        std::ostringstream lat, ax;
        lat << "x_mm,db\n";
        for (std::size_t l = 0; l < db.rows(); ++l) {
          lat << fmt(probe.scanline_x(static_cast<int>(l)) * 1e3, 4) << ',' << fmt(db(l, center_n), 4) << '\n';
        }
        ax << "z_mm,db\n";
        for (std::size_t n = 0; n < db.cols(); ++n) {
          ax << fmt(probe.sample_depth(static_cast<double>(n)) * 1e3, 4) << ',' << fmt(db(center_l, n), 4) << '\n';
        }
        write_text(dir / ("lateral_" + stem + ".csv"), lat.str());
        write_text(dir / ("axial_" + stem + ".csv"), ax.str());
        record(dir / ("lateral_" + stem + ".csv"));
        record(dir / ("axial_" + stem + ".csv"));
      } catch (const Error& e) {
        row.status = std::string("error: ") + e.what();
        std::replace(row.status.begin(), row.status.end(), ',', ';');
        std::replace(row.status.begin(), row.status.end(), '\n', ' ');
      }
      report.rows.push_back(row);
    }
  }
  write_text(dir / "metrics.csv", format_metrics_csv(report.rows));
  record(dir / "metrics.csv");
  return report;
}

// ---------------------------------------------------------------------------
// Dataset

void DatasetConfig::validate() const {
  sim.probe.validate();
  if (count == 0) throw ConfigError("dataset count must be positive");
  if (train_share == 0) throw ConfigError("train share must be positive");
  if (keep_counts.empty()) throw ConfigError("keep_counts must not be empty");
  for (int k : keep_counts) {
    SamplingScheme s;
    s.keep_count = k;
    s.selection = selection;
    s.validate(static_cast<std::size_t>(sim.probe.num_rx));
  }
  if (depth_planes != 1 && depth_planes != 3) throw ConfigError("depth_planes must be 1 or 3");
  target.mv.validate();
}

DatasetConfig parse_dataset_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("dataset config is not valid JSON: ") + e.what());
  }
  check_keys(root,
             {"seed", "probe", "pulse", "noise_std", "interpolation", "frames", "count", "split", "keep_counts",
              "factors", "selection", "depth_mode", "target", "mv", "deconv", "hilbert_length", "depth_planes"},
             "dataset config");
  DatasetConfig cfg;
  cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed);
  cfg.sim = parse_simulation(root);
  if (!root.contains("frames")) throw ConfigError("dataset config needs a 'frames' list");
  for (const auto& f : root.at("frames")) cfg.frames.push_back(parse_phantom(f));
  cfg.count = get_or<std::size_t>(root, "count", cfg.count);
  if (root.contains("split")) {
    const auto split = get_or<std::vector<std::size_t>>(root, "split", {});
    if (split.size() != 2) throw ConfigError("split must be [train_share, val_share]");
    cfg.train_share = split[0];
    cfg.val_share = split[1];
  }
  if (root.contains("keep_counts") && root.contains("factors")) {
    throw ConfigError("give either keep_counts or factors, not both");
  }
  cfg.keep_counts = get_or(root, "keep_counts", cfg.keep_counts);
  if (root.contains("factors")) {
    cfg.keep_counts.clear();
    for (double f : get_or<std::vector<double>>(root, "factors", {})) {
      cfg.keep_counts.push_back(keep_count_for_factor(f, static_cast<std::size_t>(cfg.sim.probe.num_rx)));
    }
  }
  cfg.selection = parse_selection(get_or<std::string>(root, "selection", "random"));
  cfg.depth_mode = parse_depth_mode(get_or<std::string>(root, "depth_mode", "variable"));
  cfg.target.method = parse_beamformer(get_or<std::string>(root, "target", "das"));
  if (root.contains("mv")) {
    const json& j = root.at("mv");
    check_keys(j, {"subaperture", "diagonal_loading"}, "mv");
    cfg.target.mv.subaperture = get_or(j, "subaperture", cfg.target.mv.subaperture);
    cfg.target.mv.diagonal_loading = get_or(j, "diagonal_loading", cfg.target.mv.diagonal_loading);
  }
  int deconv_length = 31;
  double deconv_reg = 1e-2;
  if (root.contains("deconv")) {
    const json& j = root.at("deconv");
    check_keys(j, {"length", "regularizer"}, "deconv");
    deconv_length = get_or(j, "length", deconv_length);
    deconv_reg = get_or(j, "regularizer", deconv_reg);
  }
  if (cfg.target.method == BeamformerMethod::kDasDeconv) {
    cfg.target.kernel = wiener_kernel(cfg.sim.pulse, cfg.sim.probe.sampling_freq, deconv_length, deconv_reg);
  }
  cfg.hilbert_length = get_or(root, "hilbert_length", cfg.hilbert_length);
  cfg.depth_planes = get_or(root, "depth_planes", cfg.depth_planes);
  cfg.validate();
  return cfg;
}

std::pair<std::size_t, std::size_t> split_sizes(std::size_t count, std::size_t train_share, std::size_t val_share) {
  if (train_share == 0) throw ConfigError("train share must be positive");
  const std::size_t total_share = train_share + val_share;
  const std::size_t train = (count * train_share + total_share / 2) / total_share;
  return {train, count - train};
}

Dataset build_dataset(const std::vector<Frame>& frames, const DatasetConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw ConfigError("insufficient frames: the dataset needs at least one simulated frame");
  const std::size_t lines = frames.front().aperture.scanlines();
  const std::size_t ch = frames.front().aperture.channels();
  const std::size_t depths = frames.front().aperture.depths();
  for (const auto& f : frames) {
    if (f.aperture.kind != CubeKind::kAperture || f.aperture.scanlines() != lines || f.aperture.channels() != ch ||
        f.aperture.depths() != depths) {
      throw DimensionError("dataset frames must be aperture cubes of one shape");
    }
  }
  const HilbertKernel hilbert = hilbert_fir(cfg.hilbert_length);
  std::vector<IqImage> targets;
  // Per (depth, channel) sums of squares and non-zero counts, for the RMS of
  // any masked version of a frame.
  std::vector<std::vector<double>> energy(frames.size()), nonzero(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    targets.push_back(to_analytic(beamform(frames[f].aperture, cfg.target), hilbert));
    energy[f].assign(depths * ch, 0.0);
    nonzero[f].assign(depths * ch, 0.0);
    for (std::size_t l = 0; l < lines; ++l) {
      for (std::size_t n = 0; n < depths; ++n) {
        const auto row = frames[f].aperture.data.row(l, n);
        for (std::size_t c = 0; c < ch; ++c) {
          energy[f][n * ch + c] += row[c] * row[c];
          nonzero[f][n * ch + c] += row[c] != 0.0 ? 1.0 : 0.0;
        }
      }
    }
  }
  const std::size_t n_train = split_sizes(cfg.count, cfg.train_share, cfg.val_share).first;
  Dataset ds;
  ds.depth_planes = cfg.depth_planes;
  for (std::size_t s = 0; s < cfg.count; ++s) {
    Rng rng(derive_seed(cfg.seed, {kSampleStream, s}));
    const std::size_t f = rng.below(frames.size());
    const std::size_t n = rng.below(depths);
    SamplingScheme scheme;
    scheme.keep_count = cfg.keep_counts[s % cfg.keep_counts.size()];
    scheme.selection = cfg.selection;
    scheme.depth_mode = cfg.depth_mode;
    scheme.seed = derive_seed(cfg.seed, {kMaskStream, s});
    const ChannelMask mask = make_mask(scheme, ch, depths);

    double sq = 0.0, cnt = 0.0;
    for (std::size_t d = 0; d < depths; ++d) {
      const auto bits = mask.row(d);
      for (std::size_t c = 0; c < ch; ++c) {
        if (bits[c]) {
          sq += energy[f][d * ch + c];
          cnt += nonzero[f][d * ch + c];
        }
      }
    }

    // Three-depth excerpt around n with the mask rows of those depths.
    const std::size_t lo = n == 0 ? 0 : n - 1;
    const std::size_t hi = std::min(depths - 1, n + 1);
    const std::size_t idx[3] = {lo, n, hi};
    RfCube part;
    part.kind = CubeKind::kAperture;
    part.probe = frames[f].aperture.probe;
    part.data = Tensor3(lines, 3, ch);
    std::vector<std::uint8_t> rows;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto bits = mask.row(idx[k]);
      rows.insert(rows.end(), bits.begin(), bits.end());
      for (std::size_t l = 0; l < lines; ++l) {
        const auto src = frames[f].aperture.data.row(l, idx[k]);
        auto dst = part.data.row(l, k);
        for (std::size_t c = 0; c < ch; ++c) dst[c] = bits[c] ? src[c] : 0.0;
      }
    }
    part.mask = ChannelMask::variable(3, ch, rows);

    TrainingSample sample;
    sample.slab = assemble_slab(part, 1, cfg.depth_planes);
    sample.target.resize(2 * lines);
    for (std::size_t l = 0; l < lines; ++l) {
      sample.target[l] = targets[f].i_part(l, n);
      sample.target[lines + l] = targets[f].q_part(l, n);
    }
    sample.frame = static_cast<std::uint32_t>(f);
    sample.depth = static_cast<std::uint32_t>(n);
    sample.keep_count = static_cast<std::uint32_t>(scheme.keep_count);
    if (cfg.depth_planes == 3) {
      sample.mask_rows = rows;
    } else {
      sample.mask_rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(ch),
                              rows.begin() + static_cast<std::ptrdiff_t>(2 * ch));
    }
    sample.scale = cnt > 0.0 ? std::sqrt(sq / cnt) : 1.0;
    (s < n_train ? ds.train : ds.validation).push_back(std::move(sample));
  }
  return ds;
}

Dataset build_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  if (cfg.frames.empty()) throw ConfigError("dataset needs at least one frame");
  std::vector<Frame> frames;
  for (std::size_t k = 0; k < cfg.frames.size(); ++k) {
    frames.push_back(make_frame(cfg.sim, cfg.frames[k], derive_seed(cfg.seed, {kNoiseStream, k})));
  }
  return build_dataset(frames, cfg);
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto& first = ds.train.empty() ? ds.validation : ds.train;
  if (first.empty()) throw ConfigError("cannot write an empty dataset");
  if (ds.depth_planes != 1 && ds.depth_planes != 3) throw ConfigError("depth_planes must be 1 or 3");
  const auto planes = static_cast<std::size_t>(ds.depth_planes);
  const std::size_t lines = first.front().target.size() / 2;
  const std::size_t ch = first.front().mask_rows.size() / planes;
  if (lines == 0 || ch == 0 || first.front().slab.size() != planes * lines * ch) {
    throw DimensionError("dataset sample shape is inconsistent");
  }
  detail::ByteWriter w;
  w.bytes("UBFD");
  w.u32(kDatasetVersion);
  for (std::size_t v : {planes, lines, ch, ds.train.size(), ds.validation.size()}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  for (const auto* part : {&ds.train, &ds.validation}) {
    for (const auto& s : *part) {
      if (s.slab.size() != planes * lines * ch || s.target.size() != 2 * lines || s.mask_rows.size() != planes * ch) {
        throw DimensionError("dataset samples differ in shape");
      }
      w.u32(s.frame);
      w.u32(s.depth);
      w.u32(s.keep_count);
      w.f64(s.scale);
      for (auto b : s.mask_rows) w.u8(b);
      for (double v : s.slab) w.f32(static_cast<float>(v));
      for (double v : s.target) w.f32(static_cast<float>(v));
    }
  }
  w.save(path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  if (r.bytes(4) != "UBFD") throw FormatError(path.string() + ": not a UBFD dataset");
  if (const auto v = r.u32(); v != kDatasetVersion) {
    throw FormatError(path.string() + ": unsupported dataset version " + std::to_string(v));
  }
  const std::size_t planes = r.u32();
  const std::size_t lines = r.u32();
  const std::size_t ch = r.u32();
  const std::size_t n_train = r.u32();
  const std::size_t n_val = r.u32();
  if (planes != 1 && planes != 3) throw FormatError(path.string() + ": bad plane count");
  const std::size_t entry = 3 * 4 + 8 + planes * ch + 4 * (planes * lines * ch + 2 * lines);
  if (lines == 0 || ch == 0 || r.remaining() / entry < n_train + n_val || r.remaining() != entry * (n_train + n_val)) {
    throw SizeError(path.string() + ": payload size does not match the header");
  }
  Dataset ds;
  ds.depth_planes = static_cast<int>(planes);
  for (std::size_t k = 0; k < n_train + n_val; ++k) {
    TrainingSample s;
    s.frame = r.u32();
    s.depth = r.u32();
    s.keep_count = r.u32();
    s.scale = r.f64();
    s.mask_rows.resize(planes * ch);
    for (auto& b : s.mask_rows) b = r.u8();
    s.slab.resize(planes * lines * ch);
    for (auto& v : s.slab) v = r.f32();
    s.target.resize(2 * lines);
    for (auto& v : s.target) v = r.f32();
    (k < n_train ? ds.train : ds.validation).push_back(std::move(s));
  }
  return ds;
}

}  // namespace ubf
