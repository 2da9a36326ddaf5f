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

// Run configuration and trial orchestration shared by the CLI and the
// acceptance checks.

#ifndef FOVEATE_HARNESS_HPP_
#define FOVEATE_HARNESS_HPP_

#include <filesystem>
#include <memory>
#include <string>

#include "foveate/inversion.hpp"

#ifndef FOVEATE_SOURCE_DIR
#define FOVEATE_SOURCE_DIR "."
#endif

namespace foveate {

inline std::string fixture_path(const std::string& name) { return std::string(FOVEATE_SOURCE_DIR) + "/fixtures/" + name; }

struct RunConfig {
  std::string weights_path = fixture_path("vae.vaew");
  std::string atlas_path = fixture_path("atlas.patl");
  std::string data_dir = data_dir_or_default();
  std::string split = "test";
  size_t trials = 1000;  // interleaved by class: 0,1,...,9,0,1,...
  SubjectiveParams params;
  uint64_t seed = 1;
  std::string out_dir = "out";
  SelectionMode mode = SelectionMode::kSample;

  // Calibrated defaults; see README "Calibration".
  double log_pi_e = 1.0;
  double feature_epsilon = 0.7;
  double digit_confusion_log_precision = 0.5;  // negative: identity digit likelihood
  CodeInit code_init = CodeInit::kCanvas;

  static std::string data_dir_or_default() { return foveate::data_dir(fixture_path("mnist")); }
};

/// Weights and agent built from a run configuration. The agent points into
/// `weights`, so the two travel together.
struct LoadedAgent {
  std::unique_ptr<VaeWeights> weights;
  Agent agent;
};

inline LoadedAgent load_agent(const RunConfig& cfg) {
  LoadedAgent out;
  out.weights = std::make_unique<VaeWeights>(load_weights(cfg.weights_path));
  const PriorityAtlas atlas = load_atlas(cfg.atlas_path);
  TaskConfig task;
  task.c_pref = cfg.params.c_pref > 0.0 ? cfg.params.c_pref : TaskConfig{}.c_pref;
  task.feature_epsilon = cfg.feature_epsilon;
  out.agent.model = build_model(task, atlas);
  out.agent.model.set_feedback_preference(cfg.params.c_pref);
  if (cfg.digit_confusion_log_precision >= 0.0)
    use_decoder_digit_likelihood(out.agent.model, *out.weights, cfg.digit_confusion_log_precision);
  out.agent.weights = out.weights.get();
  out.agent.config.mode = cfg.mode;
  out.agent.config.code_init = cfg.code_init;
  out.agent.config.continuous.precision.log_pi_e = cfg.log_pi_e;
  return out;
}

inline Dataset load_split(const RunConfig& cfg) { return load_mnist_split(cfg.data_dir, cfg.split); }

/// Stimulus ids for `trials` trials, balanced across classes.
inline std::vector<size_t> trial_stimuli(const Dataset& data, size_t trials) {
  require(trials > 0, ErrorKind::kInvalidArgument, "trial count must be positive");
  auto ids = balanced_ids(data, (trials + kClasses - 1) / kClasses);
  ids.resize(trials);
  return ids;
}

/// Writes `bytes` to a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  detail::write_file(tmp.string(), bytes);
  std::filesystem::rename(tmp, path);
}

struct RunOutput {
  std::vector<BehaviorTrace> traces;
  BehavioralMetrics metrics;
  std::filesystem::path trace_path, metrics_path;
};

/// Simulates the configured subject and writes traces.tsv and metrics.csv.
/// Every input is loaded before anything is written, so a failure leaves no
/// partial output.
inline RunOutput run_trials(const RunConfig& cfg) {
  const LoadedAgent la = load_agent(cfg);
  const Dataset data = load_split(cfg);
  const auto ids = trial_stimuli(data, cfg.trials);
  RunOutput out;
  out.traces = simulate_subject(la.agent, cfg.params, data, ids, cfg.seed);
  out.metrics = behavioral_metrics(out.traces);

  std::ostringstream tsv;
  write_traces(tsv, out.traces);
  const std::string csv = std::string(kMetricsHeader) + '\n' + metrics_row(cfg.params, out.metrics) + '\n';
  std::filesystem::create_directories(cfg.out_dir);
  out.trace_path = std::filesystem::path(cfg.out_dir) / "traces.tsv";
  out.metrics_path = std::filesystem::path(cfg.out_dir) / "metrics.csv";
  write_atomic(out.trace_path, tsv.str());
  write_atomic(out.metrics_path, csv);
  return out;
}

}  // namespace foveate

#endif  // FOVEATE_HARNESS_HPP_
