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

// One trial of the foraging task: the discrete planner chooses where to look
// (or what to report), the continuous level carries out the saccade and
// gathers evidence, and the link layer passes messages between them.

#ifndef FOVEATE_AGENT_HPP_
#define FOVEATE_AGENT_HPP_

#include <optional>
#include <vector>

#include "foveate/continuous.hpp"
#include "foveate/link.hpp"
#include "foveate/mdp.hpp"
#include "foveate/priority.hpp"
#include "foveate/vision.hpp"

namespace foveate {

struct SubjectiveParams {
  double c_pref = 6.0;
  double beta = 1.0;
};

/// Where each saccade's style code starts: the prior mean, the previous
/// saccade's estimate, or the encoder's reading of every pixel sampled so far.
enum class CodeInit { kZero, kCarry, kCanvas };

struct AgentConfig {
  ContinuousConfig continuous;
  SelectionMode mode = SelectionMode::kSample;
  bool keep_saccades = false;  // store full saccade traces (rendering)
  CodeInit code_init = CodeInit::kCanvas;
};

/// Replaces the grid-cell columns of the digit likelihood with the class
/// confusions the decoder predicts there: at a cell where two classes decode
/// to similar patches, seeing one is weak evidence against the other. Border
/// cells, where every class decodes to background, become uninformative.
inline void use_decoder_digit_likelihood(MdpModel& model, const VaeWeights& w, double log_precision) {
  const Vec z(kLatentContinuous, 0.0);
  std::array<Vec, kClasses> mean;
  for (size_t h = 0; h < kClasses; ++h) {
    Vec onehot(kClasses, 0.0);
    onehot[h] = 1.0;
    mean[h] = decode_mixture(w, z, onehot);
  }
  Likelihood& A = model.A[kDigitModality];
  const double pc = std::exp(log_precision), eps = model.epsilon;
  for (size_t l = 0; l < kGridCells; ++l) {
    const GridPoint c = cell_center(l);
    const auto idx = fovea_indices(grid_to_pixel(Point2{c.row, c.col}));
    for (size_t d = 0; d < kClasses; ++d) {
      Vec lo(kClasses, 0.0);
      for (size_t o = 0; o < kClasses; ++o)
        for (int q : idx)
          if (q >= 0) {
            const double diff = mean[d][static_cast<size_t>(q)] - mean[o][static_cast<size_t>(q)];
            lo[o] -= 0.5 * pc * diff * diff;
          }
      const Vec p = softmax(lo);
      for (size_t o = 0; o < kClasses; ++o) A.at(d + kClasses * l, o) = (1.0 - eps) * p[o] + eps / kClasses;
    }
  }
  A.column_entropy.clear();
  detail::finish_entropies(A);
}

/// Everything the harness needs to run trials.
struct Agent {
  MdpModel model;
  const VaeWeights* weights = nullptr;
  AgentConfig config;
};

// Stream identifiers for counter-based randomness.
inline constexpr uint64_t kPerceptionStream = 0x70657263;  // "perc"
inline constexpr uint64_t kActionStream = 0x61637469;      // "acti"

struct StepRecord {
  size_t location = kDecisionLocation;  // where the eye is at this step
  Vec digit_outcome;                    // ascending digit evidence at this step
  Vec digit_posterior;                  // Q(digit) after inference
  Vec where_posterior;                  // Q(where) after inference
  Vec q_pi;                             // policy posterior (empty on the last step)
  PolicyEvaluation evaluation;
  double gamma = 1.0;
  size_t policy = 0;
  CompositeAction action;
  std::optional<SaccadeTrace> saccade;  // saccade that brought the eye here
};

struct TrialResult {
  size_t trial_id = 0;
  size_t stimulus_id = 0;
  int label = -1;
  std::vector<size_t> fixations;  // locations visited before the trial ended
  size_t report = kUndecided;
  bool correct = false;
  std::vector<StepRecord> steps;
};

/// Outcome vector for the current step.
inline std::vector<Vec> make_outcomes(const MdpModel& model, size_t location, const Vec& digit_evidence,
                                      size_t feedback, const std::array<std::array<uint8_t, kGridCells>, kChannelCount>& levels) {
  std::vector<Vec> o(model.modalities());
  o[kDigitModality] = digit_evidence;
  o[kWhereModality].assign(kLocations, 0.0);
  o[kWhereModality][location] = 1.0;
  o[kFeedbackModality].assign(3, 0.0);
  o[kFeedbackModality][feedback] = 1.0;
  for (size_t f = 0; f < model.features(); ++f) {
    o[kFirstFeatureModality + f].assign(kFeatureLevels, 0.0);
    const size_t level = location == kDecisionLocation ? 1 : levels[f][location];
    o[kFirstFeatureModality + f][level - 1] = 1.0;
  }
  return o;
}

/// Runs the saccade to `target` and returns the digit evidence (class
/// posterior from the fixated location's reduced models under a flat class
/// prior, so the discrete prior is not counted twice).
inline Vec gather_evidence(const Agent& agent, const Image& stimulus, const Point2& eye, size_t target,
                           const Vec& class_prior, CounterRng& rng, SaccadeTrace& trace,
                           std::span<const double> code = {}) {
  const ReducedModelSet models;
  Vec where(kLocations, 0.0);
  where[target] = 1.0;
  const LinkDescend eta = to_priors(class_prior, where, TargetMode::kHard);
  trace = run_saccade(stimulus, eye, eta, *agent.weights, agent.config.continuous, rng, code);
  EvidenceAccumulator acc;
  accumulate(acc, target, trace);
  const Vec flat(kLatentClasses, 1.0 / kLatentClasses);
  return ascend(models.prior(flat, where), acc).digit;
}

/// Writes every fovea sample of a saccade into the canvas.
inline void paint_samples(Image& canvas, const SaccadeTrace& trace) {
  for (const auto& step : trace.steps) {
    const auto& f = step.fovea;
    const auto idx = fovea_indices({f.center[0] + f.jitter[0], f.center[1] + f.jitter[1]});
    for (size_t k = 0; k < kFoveaPixels; ++k)
      if (idx[k] >= 0) canvas.pixels[static_cast<size_t>(idx[k])] = f.patch[k];
  }
}

/// Runs one trial. Perception noise is keyed by (trial, stimulus, step) and
/// action sampling by (seed, trial), so a replay with the same fixations
/// sees the same evidence.
inline TrialResult run_trial(const Agent& agent, const Image& stimulus, int label, size_t trial_id,
                             size_t stimulus_id, double beta, uint64_t seed,
                             const std::vector<size_t>* forced_path = nullptr) {
  require(agent.weights != nullptr, ErrorKind::kInvalidArgument, "agent has no weights");
  const MdpModel& model = agent.model;
  const auto levels = feature_levels(stimulus);
  CounterRng action_rng = CounterRng::derive(seed, kActionStream, trial_id);

  TrialResult tr;
  tr.trial_id = trial_id;
  tr.stimulus_id = stimulus_id;
  tr.label = label;
  BeliefState b = initial_beliefs(model, beta);
  size_t location = kDecisionLocation;
  Point2 eye = {cell_center(location).row, cell_center(location).col};
  Vec digit_evidence(kLatentClasses, 1.0 / kLatentClasses);
  std::optional<SaccadeTrace> saccade;
  Vec code(kLatentContinuous, 0.0);
  Image canvas(kImageSide, kImageSide, 0.0);  // fovea samples seen so far

  for (size_t t = 0;; ++t) {
    const auto outcomes = make_outcomes(model, location, digit_evidence, kNoFeedback, levels);
    StepResult r = step_trial(model, b, outcomes, action_rng, agent.config.mode);
    if (forced_path && !r.evaluation.allowed.empty()) {
      // Replay: execute the recorded choice instead of the sampled one (the
      // horizon step has no choice to replace).
      const size_t k = t < forced_path->size() ? (*forced_path)[t] : kDecisionLocation;
      r.beliefs.actions.back() = model.policies[k].actions.front();
      r.selection = {k, model.policies[k].actions.front()};
      r.done = r.selection.action.reports();
    }
    b = std::move(r.beliefs);

    StepRecord rec;
    rec.location = location;
    rec.digit_outcome = digit_evidence;
    rec.digit_posterior = b.marginals[kDigitFactor][b.t()];
    rec.where_posterior = b.marginals[kWhereFactor][b.t()];
    rec.q_pi = b.q_pi;
    rec.evaluation = std::move(r.evaluation);
    rec.gamma = b.gamma;
    rec.policy = r.selection.policy;
    rec.action = r.selection.action;
    rec.saccade = std::move(saccade);
    saccade.reset();
    tr.steps.push_back(std::move(rec));

    if (r.done) {
      tr.report = r.selection.action.report;
      tr.correct = tr.report == static_cast<size_t>(label);
      break;
    }
    const size_t target = r.selection.action.where;
    tr.fixations.push_back(target);
    CounterRng perception = CounterRng::derive(kPerceptionStream, trial_id, stimulus_id, t);
    if (agent.config.code_init == CodeInit::kCanvas) {
      const Encoding e = encode(*agent.weights, canvas.pixels);
      code.assign(e.mu.begin(), e.mu.begin() + static_cast<long>(kLatentContinuous));
    }
    SaccadeTrace st;
    digit_evidence =
        gather_evidence(agent, stimulus, eye, target, b.marginals[kDigitFactor][b.t()], perception, st, code);
    eye = st.final_eye();
    paint_samples(canvas, st);
    if (agent.config.code_init == CodeInit::kCarry) code = st.steps.back().mu.rho;
    if (agent.config.keep_saccades) saccade = std::move(st);
    location = target;
  }
  return tr;
}

}  // namespace foveate

#endif  // FOVEATE_AGENT_HPP_
