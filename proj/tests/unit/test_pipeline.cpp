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
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "test_util.hpp"
#include "ubf/errors.hpp"
#include "ubf/pipeline.hpp"

using namespace ubf;
using ubf::testing::TempDir;

namespace {

const char* kTinyProbe =
    R"("probe": {"num_elements": 32, "num_tx": 16, "num_scanlines": 8, "num_rx": 16,
                 "axial_min": 0.010, "axial_max": 0.014, "focal_depth": 0.012})";

std::string experiment_json(const std::filesystem::path& out, const std::string& factors, const std::string& methods) {
  std::ostringstream os;
  os << R"({"seed": 4, "output_dir": ")" << out.string() << R"(", )" << kTinyProbe
     << R"(, "phantom": {"kind": "speckle_with_anechoic", "seed": 2}, "factors": )" << factors
     << R"(, "methods": )" << methods << R"(, "mv": {"subaperture": 2}})";
  return os.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(UBF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, SingleDasCellAtFullData) {
  TempDir dir("pipe_one");
  const ExperimentConfig cfg = parse_experiment(experiment_json(dir / "out", "[1]", R"(["das"])"));
  const SweepReport rep = run_pipeline(cfg);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].status, "ok");
  EXPECT_EQ(rep.rows[0].keep_count, 16);
  EXPECT_EQ(rep.rows[0].metrics.psnr, std::numeric_limits<double>::infinity());
  EXPECT_NEAR(rep.rows[0].metrics.ssim, 1.0, 1e-12);
  EXPECT_GT(rep.rows[0].metrics.cr, 0.0);
  std::size_t images = 0;
  for (const auto& f : rep.files) images += f.filename().string().starts_with("bmode_") ? 1 : 0;
  EXPECT_EQ(images, 1u);
  for (const auto& f : rep.files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
}

TEST(Pipeline, SweepGridAndByteIdenticalRerun) {
  TempDir dir("pipe_grid");
  const std::string methods = R"(["das", "mvbf"])";
  const SweepReport a = run_pipeline(parse_experiment(experiment_json(dir / "a", "[1, 2, 4]", methods)));
  const SweepReport b = run_pipeline(parse_experiment(experiment_json(dir / "b", "[1, 2, 4]", methods)));
  ASSERT_EQ(a.rows.size(), 6u);
  for (const auto& r : a.rows) EXPECT_EQ(r.status, "ok") << r.method << " " << r.factor;
  ASSERT_EQ(a.files.size(), b.files.size());
  for (std::size_t k = 0; k < a.files.size(); ++k) {
    EXPECT_EQ(a.files[k].filename(), b.files[k].filename());
    EXPECT_EQ(slurp(a.files[k]), slurp(b.files[k])) << a.files[k].filename();
  }
  EXPECT_EQ(format_metrics_csv(a.rows), format_metrics_csv(b.rows));
}

TEST(Pipeline, ConfigErrors) {
  EXPECT_THROW(parse_experiment("{not json"), ConfigError);
  EXPECT_THROW(parse_experiment(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_experiment(R"({"factors": [0.5]})"), ConfigError);
  EXPECT_THROW(parse_experiment(R"({"methods": ["beamy"]})"), ConfigError);
}

TEST(Pipeline, RoisAreDisjointRingAndCore) {
  const SimulationConfig sim;
  PhantomSpec spec;
  spec.kind = PhantomKind::kSpeckleWithAnechoic;
  const Phantom ph = spec.build(sim);
  const RoiPair roi = phantom_rois(ph, sim.probe);
  Matrix img(roi.rows, roi.cols);
  EXPECT_NO_THROW(roi.validate(img));
  const RoiPair back = roi_from_labels(roi_labels(roi));
  EXPECT_EQ(back.background, roi.background);
  EXPECT_EQ(back.anechoic, roi.anechoic);
  EXPECT_THROW(phantom_rois(Phantom{}, sim.probe), ConfigError);
}

TEST(Pipeline, LateralWidthOfGaussianProfile) {
  const ProbeConfig probe = ProbeConfig::desk();
  Matrix db(static_cast<std::size_t>(probe.num_scanlines), 3, -60.0);
  // 20 log10 of a Gaussian beam with sigma of two scanlines.
  const double sigma = 2.0;
  const double c = 15.5;
  for (std::size_t l = 0; l < db.rows(); ++l) {
    const double d = (static_cast<double>(l) - c) / sigma;
    db(l, 1) = std::max(-60.0, 20.0 * std::log10(std::exp(-0.5 * d * d)));
  }
  const double spacing = probe.scanline_x(1) - probe.scanline_x(0);
  const double expected = 2.0 * sigma * std::sqrt(2.0 * std::log(2.0)) * spacing;
  EXPECT_NEAR(lateral_width_6db(db, probe, 1), expected, 0.1 * spacing);
}

TEST(Dataset, CountsSplitAndArchiveRoundTrip) {
  TempDir dir("dataset");
  const std::string json = std::string(R"({"seed": 3, )") + kTinyProbe +
                           R"(, "frames": [{"kind": "speckle", "seed": 1}, {"kind": "cyst_grid", "seed": 2}],
                               "count": 12, "keep_counts": [16, 8, 4], "split": [5, 1]})";
  const DatasetConfig cfg = parse_dataset_config(json);
  EXPECT_EQ(split_sizes(12, 5, 1), std::make_pair(std::size_t{10}, std::size_t{2}));
  const Dataset ds = build_dataset(cfg);
  ASSERT_EQ(ds.train.size(), 10u);
  ASSERT_EQ(ds.validation.size(), 2u);
  std::vector<std::uint32_t> keeps;
  for (const auto& s : ds.train) {
    EXPECT_EQ(s.slab.size(), 3u * 8u * 16u);
    EXPECT_EQ(s.target.size(), 16u);
    EXPECT_GT(s.scale, 0.0);
    keeps.push_back(s.keep_count);
  }
  EXPECT_NE(std::find(keeps.begin(), keeps.end(), 4u), keeps.end());
  EXPECT_NE(std::find(keeps.begin(), keeps.end(), 16u), keeps.end());
  write_dataset(ds, dir / "d.ubfd");
  const Dataset back = read_dataset(dir / "d.ubfd");
  ASSERT_EQ(back.train.size(), ds.train.size());
  for (std::size_t k = 0; k < ds.train.size(); ++k) {
    EXPECT_EQ(back.train[k].depth, ds.train[k].depth);
    EXPECT_EQ(back.train[k].keep_count, ds.train[k].keep_count);
    EXPECT_EQ(back.train[k].mask_rows, ds.train[k].mask_rows);
    for (std::size_t i = 0; i < ds.train[k].slab.size(); ++i) {
      EXPECT_EQ(back.train[k].slab[i], static_cast<float>(ds.train[k].slab[i]));
    }
  }
  write_dataset(back, dir / "e.ubfd");
  EXPECT_EQ(slurp(dir / "d.ubfd"), slurp(dir / "e.ubfd"));
  EXPECT_EQ(slurp(dir / "d.ubfd"), [&] {
    write_dataset(build_dataset(cfg), dir / "f.ubfd");
    return slurp(dir / "f.ubfd");
  }());
}

TEST(Cli, ChainedStagesAndExitCodes) {
  TempDir dir("cli");
  {
    std::ofstream(dir / "sim.json") << "{" << kTinyProbe << R"(, "phantom": {"kind": "speckle_with_anechoic"}, "seed": 3})";
  }
  const auto p = [&](const char* name) { return (dir / name).string(); };
  ASSERT_EQ(run_cli("simulate --config " + p("sim.json") + " --out " + p("raw.ubf") + " --roi-out " + p("roi.pgm")), 0);
  ASSERT_EQ(run_cli("focus --in " + p("raw.ubf") + " --out " + p("z.ubf")), 0);
  ASSERT_EQ(run_cli("subsample --in " + p("z.ubf") + " --out " + p("zm.ubf") + " --factor 2 --seed 5"), 0);
  ASSERT_EQ(run_cli("beamform --in " + p("z.ubf") + " --method das --pgm " + p("full.pgm")), 0);
  ASSERT_EQ(run_cli("beamform --in " + p("zm.ubf") + " --method das --pgm " + p("half.pgm") + " --out " + p("iq.ubf")), 0);
  ASSERT_EQ(run_cli("metrics --ref " + p("full.pgm") + " --test " + p("half.pgm") + " --roi " + p("roi.pgm") +
                    " --out " + p("m.csv")),
            0);
  const std::string csv = slurp(dir / "m.csv");
  EXPECT_NE(csv.find("cr_db,cnr,gcnr,psnr_db,ssim"), std::string::npos);
  // Rerun is byte-identical.
  ASSERT_EQ(run_cli("beamform --in " + p("zm.ubf") + " --method das --pgm " + p("half2.pgm")), 0);
  EXPECT_EQ(slurp(dir / "half.pgm"), slurp(dir / "half2.pgm"));

  EXPECT_EQ(run_cli("beamform --in " + p("z.ubf") + " --method beamy"), 2);
  EXPECT_EQ(run_cli("beamform --in " + p("missing.ubf")), 4);
  EXPECT_EQ(run_cli("subsample --in " + p("z.ubf") + " --out " + p("x.ubf") + " --keep 99"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
}
