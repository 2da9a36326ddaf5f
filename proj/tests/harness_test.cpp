// Copyright 2026 The Foveate Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the command-line tool end to end.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "foveate/harness.hpp"
#include "foveate/render.hpp"
#include "test_support.hpp"

namespace foveate {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(FOVEATE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return detail::read_file(p.string()); }

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

// Shared 10-trial run, seed 5.
const fs::path& sim_dir() {
  static const fs::path dir = [] {
    const fs::path d = testing::scratch_dir("harness_sim");
    EXPECT_EQ(run("simulate --trials 10 --seed 5 --out " + d.string()), 0);
    return d;
  }();
  return dir;
}

TEST(Cli, SimulateIsByteIdenticalForAFixedSeed) {
  const fs::path again = testing::scratch_dir("harness_again"), other = testing::scratch_dir("harness_other");
  ASSERT_EQ(run("simulate --trials 10 --seed 5 --out " + again.string()), 0);
  ASSERT_EQ(run("simulate --trials 10 --seed 6 --out " + other.string()), 0);
  EXPECT_EQ(slurp(sim_dir() / "traces.tsv"), slurp(again / "traces.tsv"));
  EXPECT_EQ(slurp(sim_dir() / "metrics.csv"), slurp(again / "metrics.csv"));
  EXPECT_NE(slurp(sim_dir() / "traces.tsv"), slurp(other / "traces.tsv"));
}

TEST(Cli, SimulateMatchesTheLibrary) {
  RunConfig cfg;
  cfg.trials = 10;
  cfg.seed = 5;
  const LoadedAgent la = load_agent(cfg);
  const Dataset data = load_split(cfg);
  const auto traces = simulate_subject(la.agent, cfg.params, data, trial_stimuli(data, 10), 5);
  std::ostringstream tsv;
  write_traces(tsv, traces);
  EXPECT_EQ(slurp(sim_dir() / "traces.tsv"), tsv.str());
  EXPECT_EQ(slurp(sim_dir() / "metrics.csv"),
            std::string(kMetricsHeader) + "\n" + metrics_row(cfg.params, behavioral_metrics(traces)) + "\n");
}

TEST(Cli, ConfigFileWithCommandLineOverride) {
  const fs::path d = testing::scratch_dir("harness_config");
  std::ofstream(d / "run.ini") << "trials = 10\nseed = 99\nout = " << (d / "out").string() << "\n";
  ASSERT_EQ(run("simulate --config " + (d / "run.ini").string() + " --seed 5"), 0);
  EXPECT_EQ(slurp(d / "out" / "traces.tsv"), slurp(sim_dir() / "traces.tsv"));
}

TEST(Cli, MissingInputsExitTwoAndWriteNothing) {
  const fs::path d = testing::scratch_dir("harness_missing");
  EXPECT_EQ(run("simulate --trials 10 --weights /nonexistent/vae.vaew --out " + (d / "out").string()), 2);
  EXPECT_EQ(run("simulate --trials 10 --atlas /nonexistent/atlas.patl --out " + (d / "out").string()), 2);
  EXPECT_EQ(run("invert --traces /nonexistent/traces.tsv --out " + (d / "out").string()), 2);
  EXPECT_EQ(run("simulate --config /nonexistent/run.ini --out " + (d / "out").string()), 2);
  EXPECT_FALSE(fs::exists(d / "out"));
}

TEST(Cli, UsageErrorsExitSixtyFour) {
  EXPECT_EQ(run("frobnicate"), 64);
  EXPECT_EQ(run(""), 64);
  EXPECT_EQ(run("simulate --no-such-flag"), 64);
  EXPECT_EQ(run("simulate --beta -1"), 64);
  EXPECT_EQ(run("invert"), 64);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, ValidateWeights) {
  EXPECT_EQ(run("validate-weights"), 0);
  EXPECT_EQ(run("validate-weights --weights /nonexistent.vaew"), 2);
}

TEST(Cli, SweepOfOnePointEqualsSimulate) {
  const fs::path d = testing::scratch_dir("harness_sweep");
  ASSERT_EQ(run("sweep --c 6 --beta 1 --trials 10 --seed 5 --out " + d.string()), 0);
  EXPECT_EQ(slurp(d / "sweep.csv"), slurp(sim_dir() / "metrics.csv"));
}

TEST(Cli, InvertWritesAPosterior) {
  const fs::path d = testing::scratch_dir("harness_invert");
  ASSERT_EQ(run("invert --traces " + (sim_dir() / "traces.tsv").string() + " --out " + d.string()), 0);
  const std::string json = slurp(d / "inversion.json");
  for (const char* key : {"\"c_pref\"", "\"log_beta\"", "\"covariance\"", "\"free_energy\"", "\"traces\": 10"})
    EXPECT_NE(json.find(key), std::string::npos) << key;
}

TEST(Cli, RenderIsPixelExact) {
  const fs::path d = testing::scratch_dir("harness_render");
  ASSERT_EQ(run("render --traces " + (sim_dir() / "traces.tsv").string() + " --trial 3 --out " +
                (d / "t3.pgm").string()),
            0);
  const std::string bytes = slurp(d / "t3.pgm");
  const Raster r = decode_pgm(bytes);
  EXPECT_EQ(r.width, 6 * 224u + 5 * 4u);
  EXPECT_EQ(r.height, 224u);
  const std::string digest = std::to_string(r.width) + "x" + std::to_string(r.height) + " " + std::to_string(fnv1a(bytes));
  EXPECT_EQ(digest, testing::golden("render_trial3.txt", digest));
  EXPECT_EQ(run("render --traces " + (sim_dir() / "traces.tsv").string() + " --trial 999 --out " +
                (d / "x.pgm").string()),
            1);
}

TEST(Render, UniformDigitBarsAreEqual) {
  const auto bars = bar_heights(digit_panel(Vec(kClasses, 0.1)));
  for (size_t h : bars) EXPECT_EQ(h, bars.front());
  EXPECT_EQ(bars.front(), static_cast<size_t>(std::lround(0.1 * 223)));
  Vec one(kClasses, 0.0);
  one[4] = 1.0;
  const auto peaked = bar_heights(digit_panel(one));
  EXPECT_EQ(peaked[4], 223u);
  EXPECT_EQ(peaked[0], 0u);
}

TEST(Render, WherePanelAndPgmRoundTrip) {
  Vec where(kLocations, 0.0);
  where[8] = 1.0;  // row 1, column 1
  const Raster w = where_panel(where);
  EXPECT_EQ(w.at(28 + 14, 28 + 14), 255);
  EXPECT_EQ(w.at(14, 14), 0);
  const Raster back = decode_pgm(encode_pgm(w));
  EXPECT_EQ(back.pixels, w.pixels);
  EXPECT_EQ(testing::kind_of([] { decode_pgm("P6\n1 1\n255\n\x01"); }), ErrorKind::kBadMagic);
  EXPECT_EQ(testing::kind_of([] { decode_pgm("P5\n2 2\n255\n\x01"); }), ErrorKind::kTruncated);
}

}  // namespace
}  // namespace foveate
