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

// Messages between the discrete and continuous levels. Descending: the
// policy-averaged outcome prediction becomes the empirical prior of the next
// saccade. Ascending: evidence accumulated under each reduced model (one
// class hypothesis at one location) is turned back into an outcome
// posterior by Bayesian model reduction.

#ifndef FOVEATE_LINK_HPP_
#define FOVEATE_LINK_HPP_

#include <vector>

#include "foveate/common.hpp"
#include "foveate/continuous.hpp"
#include "foveate/image.hpp"

namespace foveate {

inline constexpr double kPriorFloor = 1e-12;

struct ReducedModel {
  size_t cls = 0;
  size_t location = 0;
};

/// The 10 x 50 reduced models; index = cls + 10 * location.
class ReducedModelSet {
 public:
  static constexpr size_t kClassCount = kLatentClasses;
  static constexpr size_t kSize = kClassCount * kLocations;

  size_t size() const { return kSize; }
  static size_t index(size_t cls, size_t location) { return cls + kClassCount * location; }
  ReducedModel operator[](size_t m) const { return {m % kClassCount, m / kClassCount}; }

  /// Prior over models from outcome distributions over class and location.
  Vec prior(std::span<const double> digit, std::span<const double> where) const {
    require(digit.size() == kClassCount && where.size() == kLocations, ErrorKind::kDimensionMismatch,
            "digit/where outcome sizes");
    Vec p(kSize);
    for (size_t l = 0; l < kLocations; ++l)
      for (size_t h = 0; h < kClassCount; ++h) p[index(h, l)] = digit[h] * where[l];
    return p;
  }
};

/// Bayesian model average of per-policy outcome predictions:
/// predictions[policy][modality].
inline std::vector<Vec> descend(std::span<const double> q_pi, const std::vector<std::vector<Vec>>& predictions) {
  require(!predictions.empty() && q_pi.size() == predictions.size(), ErrorKind::kDimensionMismatch,
          "one prediction per policy needed");
  require(is_simplex(q_pi, 1e-10), ErrorKind::kNotNormalized, "policy posterior is not a simplex");
  std::vector<Vec> out(predictions.front().size());
  for (size_t m = 0; m < out.size(); ++m) out[m].assign(predictions.front()[m].size(), 0.0);
  for (size_t k = 0; k < predictions.size(); ++k) {
    require(predictions[k].size() == out.size(), ErrorKind::kDimensionMismatch, "modality count differs");
    for (size_t m = 0; m < out.size(); ++m) {
      require(predictions[k][m].size() == out[m].size(), ErrorKind::kDimensionMismatch, "outcome size differs");
      for (size_t o = 0; o < out[m].size(); ++o) out[m][o] += q_pi[k] * predictions[k][m][o];
    }
  }
  return out;
}

enum class TargetMode { kSoft, kHard };

/// Empirical priors for the continuous level: the class marginal and the
/// expected (soft) or most probable (hard) target location.
inline LinkDescend to_priors(std::span<const double> digit, std::span<const double> where,
                             TargetMode mode = TargetMode::kHard) {
  require(digit.size() == kLatentClasses && where.size() == kLocations, ErrorKind::kDimensionMismatch,
          "digit/where outcome sizes");
  const double sd = sum(digit), sw = sum(where);
  require(sd > 0.0 && sw > 0.0 && all_finite(digit) && all_finite(where), ErrorKind::kNotNormalized,
          "degenerate outcome distribution");
  LinkDescend eta;
  for (size_t h = 0; h < kLatentClasses; ++h) eta.eta_h[h] = digit[h] / sd;
  if (mode == TargetMode::kHard) {
    const GridPoint g = cell_center(argmax(where));
    eta.eta_o = {g.row, g.col};
  } else {
    eta.eta_o = {0.0, 0.0};
    for (size_t l = 0; l < kLocations; ++l) {
      const GridPoint g = cell_center(l);
      eta.eta_o[0] += where[l] / sw * g.row;
      eta.eta_o[1] += where[l] / sw * g.col;
    }
  }
  return eta;
}

/// Running integral of L_m dt for the models that received evidence.
struct EvidenceAccumulator {
  Vec integral = Vec(ReducedModelSet::kSize, 0.0);
  std::vector<size_t> steps = std::vector<size_t>(ReducedModelSet::kSize, 0);
};

/// Adds L_h * dt for the class models at `location`.
inline void accumulate(EvidenceAccumulator& acc, size_t location, std::span<const double> loglik, double dt) {
  require(location < kLocations, ErrorKind::kOutOfRange, "location out of range");
  require(loglik.size() == kLatentClasses, ErrorKind::kDimensionMismatch, "one log-likelihood per class");
  require(all_finite(loglik) && std::isfinite(dt), ErrorKind::kInvalidArgument, "non-finite evidence");
  for (size_t h = 0; h < kLatentClasses; ++h) {
    const size_t m = ReducedModelSet::index(h, location);
    acc.integral[m] += loglik[h] * dt;
    ++acc.steps[m];
  }
}

/// Adds a whole saccade, weighting each step by 1/steps.
inline void accumulate(EvidenceAccumulator& acc, size_t location, const SaccadeTrace& trace) {
  const double dt = 1.0 / static_cast<double>(trace.steps.size());
  for (const auto& s : trace.steps) accumulate(acc, location, s.hypothesis_loglik, dt);
}

struct AscendResult {
  Vec models;  // posterior over the 500 reduced models
  Vec digit;   // its class marginal
  Vec where;   // its location marginal
};

/// softmax(-E) with E_m = -ln prior_m - integral_m.
inline AscendResult ascend(std::span<const double> model_prior, const EvidenceAccumulator& acc) {
  require(model_prior.size() == ReducedModelSet::kSize, ErrorKind::kDimensionMismatch, "prior over 500 models");
  require(is_simplex(model_prior, 1e-8), ErrorKind::kNotNormalized, "model prior is not a simplex");
  Vec neg_e(model_prior.size());
  for (size_t m = 0; m < neg_e.size(); ++m) neg_e[m] = safe_log(model_prior[m], kPriorFloor) + acc.integral[m];
  AscendResult r;
  r.models = softmax(neg_e);
  r.digit.assign(kLatentClasses, 0.0);
  r.where.assign(kLocations, 0.0);
  for (size_t m = 0; m < r.models.size(); ++m) {
    r.digit[m % kLatentClasses] += r.models[m];
    r.where[m / kLatentClasses] += r.models[m];
  }
  return r;
}

}  // namespace foveate

#endif  // FOVEATE_LINK_HPP_
