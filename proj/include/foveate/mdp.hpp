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

// Discrete-time active inference for one trial of the foraging task.
//
// Hidden state factors are digit (10), where (49 grid cells + decision
// location), report (10 classes + undecided) and one factor per feature
// channel (5 levels). Each outcome modality depends on a subset of factors;
// its likelihood is stored over that subset only. State inference is
// structured mean-field: the posterior factorizes over factors, and each
// factor keeps an exact chain posterior over time, updated by
// forward-backward in turn. Every such update minimizes the free energy
// with respect to one factor, so the free energy never increases.

#ifndef FOVEATE_MDP_HPP_
#define FOVEATE_MDP_HPP_

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "foveate/common.hpp"
#include "foveate/image.hpp"
#include "foveate/priority.hpp"

namespace foveate {

inline constexpr size_t kClasses = 10;
inline constexpr size_t kUndecided = kClasses;  // report state / action index
inline constexpr size_t kReportStates = kClasses + 1;

enum FactorIndex : size_t { kDigitFactor = 0, kWhereFactor = 1, kReportFactor = 2, kFirstFeatureFactor = 3 };
enum ModalityIndex : size_t {
  kDigitModality = 0,
  kWhereModality = 1,
  kFeedbackModality = 2,
  kFirstFeatureModality = 3
};
enum Feedback : size_t { kCorrect = 0, kIncorrect = 1, kNoFeedback = 2 };

struct CompositeAction {
  size_t where = kDecisionLocation;
  size_t report = kUndecided;
  bool operator==(const CompositeAction&) const = default;
  bool reports() const { return report != kUndecided; }
};

struct Policy {
  std::vector<CompositeAction> actions;
};

/// P(o | s) for one modality over the factors it depends on. Entry
/// table[state * outcomes + o], where state is the mixed-radix index over
/// `factors` with the first listed factor varying fastest.
struct Likelihood {
  std::string name;
  std::vector<size_t> factors;
  std::vector<size_t> radix;  // sizes of `factors`
  size_t outcomes = 0;
  Vec table;
  Vec column_entropy;  // H[P(o | s)] per state

  size_t states() const {
    size_t n = 1;
    for (size_t r : radix) n *= r;
    return n;
  }
  double& at(size_t state, size_t o) { return table[state * outcomes + o]; }
  double at(size_t state, size_t o) const { return table[state * outcomes + o]; }
};

struct MdpModel {
  std::vector<size_t> factor_sizes;
  std::vector<Likelihood> A;
  std::vector<std::vector<Vec>> B;  // [factor][action], entry [to + n * from]
  std::vector<Vec> C;               // log preferences per modality
  std::vector<Vec> D;
  std::vector<Policy> policies;
  size_t horizon = 9;
  double epsilon = 0.02;

  size_t factors() const { return factor_sizes.size(); }
  size_t modalities() const { return A.size(); }
  size_t features() const { return factors() - kFirstFeatureFactor; }

  /// Action index each factor sees under a composite action.
  size_t factor_action(size_t factor, const CompositeAction& u) const {
    if (factor == kWhereFactor) return u.where;
    if (factor == kReportFactor) return u.report;
    return 0;
  }

  /// Sets C[feedback] = (c, -c, 0). Any real c is accepted here.
  void set_feedback_preference(double c) { C[kFeedbackModality] = {c, -c, 0.0}; }
  double feedback_preference() const { return C[kFeedbackModality][kCorrect]; }

  void validate() const {
    const double tol = 1e-10;
    require(B.size() == factors() && D.size() == factors(), ErrorKind::kDimensionMismatch, "B/D factor count");
    for (size_t f = 0; f < factors(); ++f) {
      require(D[f].size() == factor_sizes[f] && is_simplex(D[f], tol), ErrorKind::kNotNormalized,
              "D[" + std::to_string(f) + "] is not a simplex");
      const size_t n = factor_sizes[f];
      for (const Vec& b : B[f]) {
        require(b.size() == n * n, ErrorKind::kDimensionMismatch, "B matrix size");
        for (size_t from = 0; from < n; ++from) {
          double s = 0.0;
          for (size_t to = 0; to < n; ++to) {
            require(b[to + n * from] >= 0.0, ErrorKind::kNotNormalized, "negative transition probability");
            s += b[to + n * from];
          }
          require(std::abs(s - 1.0) <= tol, ErrorKind::kNotNormalized, "B column does not sum to one");
        }
      }
    }
    require(C.size() == modalities(), ErrorKind::kDimensionMismatch, "C modality count");
    for (size_t m = 0; m < modalities(); ++m) {
      const Likelihood& a = A[m];
      require(C[m].size() == a.outcomes, ErrorKind::kDimensionMismatch, "C size for " + a.name);
      require(a.table.size() == a.states() * a.outcomes, ErrorKind::kDimensionMismatch, "A size for " + a.name);
      for (size_t s = 0; s < a.states(); ++s) {
        double sum_o = 0.0;
        for (size_t o = 0; o < a.outcomes; ++o) {
          require(a.at(s, o) >= 0.0, ErrorKind::kNotNormalized, "negative likelihood in " + a.name);
          sum_o += a.at(s, o);
        }
        require(std::abs(sum_o - 1.0) <= tol, ErrorKind::kNotNormalized, "A column of " + a.name + " not normalized");
      }
    }
    require(!policies.empty(), ErrorKind::kInvalidArgument, "empty policy set");
  }
};

struct TaskConfig {
  size_t features = kChannelCount;
  double epsilon = 0.02;
  double c_pref = 6.0;
  size_t horizon = 9;
  double feature_epsilon = -1.0;  // smoothing of the feature modalities; negative: same as epsilon
};

namespace detail {

/// Distribution with 1 - eps on `hot` and eps shared evenly by the rest.
inline void fill_concentrated(Likelihood& a, size_t state, size_t hot, double eps) {
  for (size_t o = 0; o < a.outcomes; ++o)
    a.at(state, o) = o == hot ? 1.0 - eps : eps / static_cast<double>(a.outcomes - 1);
}

inline Likelihood make_likelihood(std::string name, std::vector<size_t> factors,
                                  const std::vector<size_t>& factor_sizes, size_t outcomes) {
  Likelihood a;
  a.name = std::move(name);
  a.factors = std::move(factors);
  for (size_t f : a.factors) a.radix.push_back(factor_sizes[f]);
  a.outcomes = outcomes;
  a.table.assign(a.states() * outcomes, 0.0);
  return a;
}

inline void finish_entropies(Likelihood& a) {
  a.column_entropy.assign(a.states(), 0.0);
  for (size_t s = 0; s < a.states(); ++s)
    a.column_entropy[s] = entropy(std::span<const double>(a.table.data() + s * a.outcomes, a.outcomes));
}

inline Vec identity_transition(size_t n) {
  Vec b(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) b[i + n * i] = 1.0;
  return b;
}

}  // namespace detail

/// The depth-1 composite action set: 49 saccades and a move to the decision
/// location (all undecided), then one report per class from the decision
/// location.
inline std::vector<Policy> default_policies() {
  std::vector<Policy> ps;
  for (size_t l = 0; l < kLocations; ++l) ps.push_back({{CompositeAction{l, kUndecided}}});
  for (size_t k = 0; k < kClasses; ++k) ps.push_back({{CompositeAction{kDecisionLocation, k}}});
  return ps;
}

inline MdpModel build_model(const TaskConfig& config, const PriorityAtlas& atlas) {
  require(config.c_pref > 0.0, ErrorKind::kInvalidArgument, "preference c must be positive");
  require(config.epsilon > 0.0 && config.epsilon <= 0.1, ErrorKind::kInvalidArgument, "epsilon must be in (0, 0.1]");
  require(config.horizon >= 2, ErrorKind::kInvalidArgument, "horizon must be at least 2");
  require(atlas.classes() == kClasses && atlas.channels() == config.features && atlas.rows() == kGridSide &&
              atlas.cols() == kGridSide,
          ErrorKind::kDimensionMismatch, "atlas must cover 10 classes x F features x 7x7 cells");
  atlas.validate();

  const double eps = config.epsilon;
  const double eps_f = config.feature_epsilon < 0.0 ? eps : config.feature_epsilon;
  require(eps_f > 0.0 && eps_f < 1.0, ErrorKind::kInvalidArgument, "feature epsilon must be in (0, 1)");
  MdpModel m;
  m.horizon = config.horizon;
  m.epsilon = eps;
  m.factor_sizes = {kClasses, kLocations, kReportStates};
  for (size_t f = 0; f < config.features; ++f) m.factor_sizes.push_back(kFeatureLevels);
  const auto& sizes = m.factor_sizes;

  // Digit outcomes report the class at grid cells and carry no information
  // at the decision location, which shows no pixels.
  Likelihood digit = detail::make_likelihood("digit", {kDigitFactor, kWhereFactor}, sizes, kClasses);
  for (size_t l = 0; l < kLocations; ++l)
    for (size_t d = 0; d < kClasses; ++d) {
      const size_t s = d + kClasses * l;
      if (l == kDecisionLocation) {
        for (size_t o = 0; o < kClasses; ++o) digit.at(s, o) = 1.0 / kClasses;
      } else {
        detail::fill_concentrated(digit, s, d, eps);
      }
    }
  Likelihood where = detail::make_likelihood("where", {kWhereFactor}, sizes, kLocations);
  for (size_t l = 0; l < kLocations; ++l) detail::fill_concentrated(where, l, l, eps);

  Likelihood feedback = detail::make_likelihood("feedback", {kReportFactor, kDigitFactor}, sizes, 3);
  for (size_t d = 0; d < kClasses; ++d)
    for (size_t r = 0; r < kReportStates; ++r) {
      const size_t s = r + kReportStates * d;
      const size_t hot = r == kUndecided ? kNoFeedback : (r == d ? kCorrect : kIncorrect);
      detail::fill_concentrated(feedback, s, hot, eps);
    }
  m.A = {std::move(digit), std::move(where), std::move(feedback)};

  for (size_t f = 0; f < config.features; ++f) {
    Likelihood feat = detail::make_likelihood("feature_" + std::to_string(f), {kDigitFactor, kWhereFactor}, sizes,
                                              kFeatureLevels);
    for (size_t l = 0; l < kLocations; ++l)
      for (size_t d = 0; d < kClasses; ++d) {
        const size_t level = l == kDecisionLocation ? 1 : atlas.level(d, f, l);
        detail::fill_concentrated(feat, d + kClasses * l, level - 1, eps_f);
      }
    m.A.push_back(std::move(feat));
  }
  for (auto& a : m.A) detail::finish_entropies(a);

  m.B.resize(m.factors());
  m.B[kDigitFactor] = {detail::identity_transition(kClasses)};
  for (size_t u = 0; u < kLocations; ++u) {
    Vec b(kLocations * kLocations, 0.0);
    for (size_t from = 0; from < kLocations; ++from) b[u + kLocations * from] = 1.0;
    m.B[kWhereFactor].push_back(std::move(b));
  }
  for (size_t u = 0; u < kReportStates; ++u) {
    Vec b = detail::identity_transition(kReportStates);
    if (u != kUndecided) {
      b[kUndecided + kReportStates * kUndecided] = 0.0;
      b[u + kReportStates * kUndecided] = 1.0;
    }
    m.B[kReportFactor].push_back(std::move(b));
  }
  for (size_t f = 0; f < config.features; ++f)
    m.B[kFirstFeatureFactor + f] = {detail::identity_transition(kFeatureLevels)};

  m.C.resize(m.modalities());
  for (size_t i = 0; i < m.modalities(); ++i) m.C[i].assign(m.A[i].outcomes, 0.0);
  m.set_feedback_preference(config.c_pref);

  m.D.resize(m.factors());
  m.D[kDigitFactor].assign(kClasses, 1.0 / kClasses);
  m.D[kWhereFactor].assign(kLocations, 0.0);
  m.D[kWhereFactor][kDecisionLocation] = 1.0;
  m.D[kReportFactor].assign(kReportStates, 0.0);
  m.D[kReportFactor][kUndecided] = 1.0;
  for (size_t f = 0; f < config.features; ++f) m.D[kFirstFeatureFactor + f].assign(kFeatureLevels, 1.0 / kFeatureLevels);

  m.policies = default_policies();
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Beliefs and state inference.

struct BeliefState {
  std::vector<std::vector<Vec>> marginals;  // [factor][tau], tau = 0..t
  std::vector<std::vector<Vec>> observed;   // [tau][modality] outcome distributions
  std::vector<CompositeAction> actions;     // actions[tau] moves tau -> tau + 1
  Vec q_pi;
  Vec q_pi_prior;
  double gamma = 1.0;
  double beta = 1.0;
  double beta_prior = 1.0;
  double free_energy = 0.0;
  std::vector<double> free_energy_trace;  // after every factor update of the last inference
  size_t iterations = 0;

  /// Index of the latest observed step (requires at least one observation).
  size_t t() const { return observed.size() - 1; }
};

inline BeliefState initial_beliefs(const MdpModel& model, double beta_prior = 1.0) {
  require(beta_prior > 0.0, ErrorKind::kInvalidArgument, "beta must be positive");
  BeliefState b;
  b.marginals.assign(model.factors(), {});
  b.beta = b.beta_prior = beta_prior;
  b.gamma = 1.0 / beta_prior;
  return b;
}

namespace detail {

inline Vec apply_transition(const Vec& b, const Vec& q) {
  const size_t n = q.size();
  Vec out(n, 0.0);
  for (size_t from = 0; from < n; ++from) {
    if (q[from] == 0.0) continue;
    for (size_t to = 0; to < n; ++to) out[to] += b[to + n * from] * q[from];
  }
  return out;
}

inline Vec apply_transition_transposed(const Vec& b, const Vec& v) {
  const size_t n = v.size();
  Vec out(n, 0.0);
  for (size_t from = 0; from < n; ++from)
    for (size_t to = 0; to < n; ++to) out[from] += b[to + n * from] * v[to];
  return out;
}

/// ln max(sum_o A(o|s) o(o), floor) for every state of the modality.
inline Vec log_likelihood(const Likelihood& a, const Vec& outcome) {
  Vec out(a.states());
  for (size_t s = 0; s < a.states(); ++s) {
    double l = 0.0;
    for (size_t o = 0; o < a.outcomes; ++o) l += a.at(s, o) * outcome[o];
    out[s] = safe_log(l);
  }
  return out;
}

/// Calls fn(state, weight, digits) over the mixed-radix states of a
/// modality, weighting each by the product of the given factor marginals
/// (skipping `skip`, whose digit is still reported).
template <typename Fn>
inline void for_each_state(const Likelihood& a, const std::vector<const Vec*>& q, size_t skip, Fn&& fn) {
  const size_t k = a.factors.size();
  std::vector<size_t> digit(k, 0);
  const size_t n = a.states();
  for (size_t s = 0; s < n; ++s) {
    double w = 1.0;
    for (size_t j = 0; j < k && w != 0.0; ++j)
      if (j != skip) w *= (*q[j])[digit[j]];
    if (w != 0.0) fn(s, w, digit);
    for (size_t j = 0; j < k; ++j) {
      if (++digit[j] < a.radix[j]) break;
      digit[j] = 0;
    }
  }
}

struct ChainPosterior {
  std::vector<Vec> q;  // per tau
  double log_z = 0.0;
};

/// Exact posterior of one factor's chain given per-step log potentials.
inline ChainPosterior forward_backward(const Vec& prior, const std::vector<const Vec*>& transitions,
                                       const std::vector<Vec>& phi) {
  const size_t steps = phi.size();
  const size_t n = prior.size();
  std::vector<Vec> alpha(steps), scaled(steps);
  Vec c(steps);
  ChainPosterior out;
  for (size_t tau = 0; tau < steps; ++tau) {
    const double m = *std::max_element(phi[tau].begin(), phi[tau].end());
    scaled[tau].resize(n);
    for (size_t s = 0; s < n; ++s) scaled[tau][s] = std::exp(phi[tau][s] - m);
    Vec pred = tau == 0 ? prior : apply_transition(*transitions[tau - 1], alpha[tau - 1]);
    for (size_t s = 0; s < n; ++s) pred[s] *= scaled[tau][s];
    c[tau] = sum(pred);
    require(c[tau] > 0.0 && std::isfinite(c[tau]), ErrorKind::kNotNormalized, "observations have zero probability");
    for (double& x : pred) x /= c[tau];
    alpha[tau] = std::move(pred);
    out.log_z += std::log(c[tau]) + m;
  }
  Vec beta(n, 1.0);
  out.q.resize(steps);
  for (size_t tau = steps; tau-- > 0;) {
    if (tau + 1 < steps) {
      Vec msg(n);
      for (size_t s = 0; s < n; ++s) msg[s] = beta[s] * scaled[tau + 1][s];
      beta = apply_transition_transposed(*transitions[tau], msg);
      for (double& x : beta) x /= c[tau + 1];
    }
    Vec q(n);
    for (size_t s = 0; s < n; ++s) q[s] = alpha[tau][s] * beta[s];
    normalize(q);
    out.q[tau] = std::move(q);
  }
  return out;
}

}  // namespace detail

/// Adds this step's outcome distributions (one per modality; one-hot for
/// categorical observations, soft for ascending evidence) and re-infers the
/// hidden-state posterior over all elapsed steps.
inline BeliefState infer_states(const MdpModel& model, const BeliefState& beliefs, const std::vector<Vec>& outcomes,
                                size_t max_iterations = 32, double tolerance = 1e-6) {
  require(outcomes.size() == model.modalities(), ErrorKind::kDimensionMismatch, "one outcome per modality needed");
  require(beliefs.actions.size() == beliefs.observed.size(), ErrorKind::kInvalidArgument,
          "an action must precede every observation after the first");
  require(beliefs.observed.size() < model.horizon, ErrorKind::kOutOfRange, "trial horizon exceeded");
  for (size_t m = 0; m < model.modalities(); ++m) {
    require(outcomes[m].size() == model.A[m].outcomes, ErrorKind::kOutOfRange,
            "outcome size for modality " + model.A[m].name);
    require(is_simplex(outcomes[m], 1e-10), ErrorKind::kNotNormalized, "outcome for " + model.A[m].name);
  }
  for (size_t f = 0; f < model.factors(); ++f)
    for (const Vec& q : beliefs.marginals[f])
      require(is_simplex(q, 1e-10), ErrorKind::kNotNormalized, "belief marginal is not a simplex");

  BeliefState b = beliefs;
  b.observed.push_back(outcomes);
  const size_t steps = b.observed.size();
  const size_t nf = model.factors();
  const size_t nm = model.modalities();

  std::vector<std::vector<Vec>> loglik(steps, std::vector<Vec>(nm));
  for (size_t tau = 0; tau < steps; ++tau)
    for (size_t m = 0; m < nm; ++m) loglik[tau][m] = detail::log_likelihood(model.A[m], b.observed[tau][m]);

  std::vector<std::vector<const Vec*>> transitions(nf);
  for (size_t f = 0; f < nf; ++f)
    for (size_t tau = 0; tau + 1 < steps; ++tau)
      transitions[f].push_back(&model.B[f][model.factor_action(f, b.actions[tau])]);

  // Initial marginals for the new step: prediction from the previous one.
  for (size_t f = 0; f < nf; ++f) {
    auto& q = b.marginals[f];
    q.resize(steps);
    q[steps - 1] = steps == 1 ? model.D[f] : detail::apply_transition(*transitions[f][steps - 2], q[steps - 2]);
  }

  std::vector<double> kl_term(nf, 0.0);  // KL(Q_f || P_f) of each factor's current chain
  auto expected_loglik = [&]() {
    double e = 0.0;
    for (size_t tau = 0; tau < steps; ++tau)
      for (size_t m = 0; m < nm; ++m) {
        const Likelihood& a = model.A[m];
        std::vector<const Vec*> q;
        for (size_t f : a.factors) q.push_back(&b.marginals[f][tau]);
        detail::for_each_state(a, q, a.factors.size(), [&](size_t s, double w, const std::vector<size_t>&) {
          e += w * loglik[tau][m][s];
        });
      }
    return e;
  };
  // The chain KL of a factor is only known once it has been updated, so the
  // trace starts after the first sweep; from then on every entry follows a
  // coordinate-wise minimization.
  b.free_energy_trace.clear();
  double max_change = 0.0;
  size_t it = 0;
  for (; it < max_iterations; ++it) {
    max_change = 0.0;
    for (size_t f = 0; f < nf; ++f) {
      std::vector<Vec> phi(steps, Vec(model.factor_sizes[f], 0.0));
      for (size_t m = 0; m < nm; ++m) {
        const Likelihood& a = model.A[m];
        size_t slot = a.factors.size();
        for (size_t j = 0; j < a.factors.size(); ++j)
          if (a.factors[j] == f) slot = j;
        if (slot == a.factors.size()) continue;
        for (size_t tau = 0; tau < steps; ++tau) {
          std::vector<const Vec*> q;
          for (size_t g : a.factors) q.push_back(&b.marginals[g][tau]);
          detail::for_each_state(a, q, slot, [&](size_t s, double w, const std::vector<size_t>& digit) {
            phi[tau][digit[slot]] += w * loglik[tau][m][s];
          });
        }
      }
      const auto chain = detail::forward_backward(model.D[f], transitions[f], phi);
      double qphi = 0.0;
      for (size_t tau = 0; tau < steps; ++tau) {
        for (size_t s = 0; s < chain.q[tau].size(); ++s) {
          max_change = std::max(max_change, std::abs(chain.q[tau][s] - b.marginals[f][tau][s]));
          qphi += chain.q[tau][s] * phi[tau][s];
        }
        b.marginals[f][tau] = chain.q[tau];
      }
      kl_term[f] = qphi - chain.log_z;
      if (it > 0 || f + 1 == nf) {
        double fe = -expected_loglik();
        for (double k : kl_term) fe += k;
        b.free_energy_trace.push_back(fe);
      }
    }
    if (max_change < tolerance) {
      ++it;
      break;
    }
  }
  b.iterations = it;
  b.free_energy = b.free_energy_trace.back();
  return b;
}

/// Q(s_{t+1} | policy) for every factor.
inline std::vector<Vec> predict_states(const MdpModel& model, const BeliefState& b, const Policy& policy) {
  require(!policy.actions.empty(), ErrorKind::kInvalidArgument, "policy without actions");
  std::vector<Vec> out(model.factors());
  for (size_t f = 0; f < model.factors(); ++f)
    out[f] = detail::apply_transition(model.B[f][model.factor_action(f, policy.actions.front())],
                                      b.marginals[f][b.t()]);
  return out;
}

struct EfeTerms {
  double risk = 0.0;
  double ambiguity = 0.0;
  double total() const { return risk + ambiguity; }
};

/// Predicted outcome distribution per modality under factor marginals.
inline std::vector<Vec> predict_outcomes(const MdpModel& model, const std::vector<Vec>& states) {
  std::vector<Vec> out(model.modalities());
  for (size_t m = 0; m < model.modalities(); ++m) {
    const Likelihood& a = model.A[m];
    std::vector<const Vec*> q;
    for (size_t f : a.factors) q.push_back(&states[f]);
    out[m].assign(a.outcomes, 0.0);
    detail::for_each_state(a, q, a.factors.size(), [&](size_t s, double w, const std::vector<size_t>&) {
      for (size_t o = 0; o < a.outcomes; ++o) out[m][o] += w * a.at(s, o);
    });
  }
  return out;
}

/// Risk and ambiguity of one modality under predicted factor marginals.
inline EfeTerms modality_efe(const MdpModel& model, size_t m, const std::vector<Vec>& states, Vec* predicted = nullptr) {
  const Likelihood& a = model.A[m];
  std::vector<const Vec*> q;
  for (size_t f : a.factors) q.push_back(&states[f]);
  Vec p(a.outcomes, 0.0);
  EfeTerms t;
  detail::for_each_state(a, q, a.factors.size(), [&](size_t s, double w, const std::vector<size_t>&) {
    for (size_t o = 0; o < a.outcomes; ++o) p[o] += w * a.at(s, o);
    t.ambiguity += w * a.column_entropy[s];
  });
  t.risk = kl_divergence(p, softmax(model.C[m]));
  if (predicted) *predicted = std::move(p);
  return t;
}

/// G of a depth-1 policy: sum over modalities of KL(predicted outcomes ||
/// softmax(C)) plus the expected entropy of the likelihood.
inline EfeTerms expected_free_energy_terms(const MdpModel& model, const BeliefState& b, const Policy& policy) {
  const auto states = predict_states(model, b, policy);
  EfeTerms total;
  for (size_t m = 0; m < model.modalities(); ++m) {
    const EfeTerms t = modality_efe(model, m, states);
    total.risk += t.risk;
    total.ambiguity += t.ambiguity;
  }
  return total;
}

inline double expected_free_energy(const MdpModel& model, const BeliefState& b, const Policy& policy) {
  return expected_free_energy_terms(model, b, policy).total();
}

/// softmax(-F - gamma * G).
inline Vec policy_posterior(std::span<const double> F, std::span<const double> G, double gamma) {
  require(F.size() == G.size() && !F.empty(), ErrorKind::kDimensionMismatch, "F and G must match and be non-empty");
  require(all_finite(F) && all_finite(G), ErrorKind::kInvalidArgument, "F and G must be finite");
  require(std::isfinite(gamma) && gamma >= 0.0, ErrorKind::kInvalidArgument, "gamma must be finite and >= 0");
  Vec z(F.size());
  for (size_t i = 0; i < z.size(); ++i) z[i] = -F[i] - gamma * G[i];
  return softmax(z);
}

inline constexpr double kBetaMin = 1e-3;
inline constexpr double kBetaMax = 1e3;

struct Precision {
  double gamma;
  double beta;
};

/// One fixed-point step on the policy precision:
/// beta = beta_prior + (q_pi - q_pi_prior) . G, clamped, gamma = 1 / beta.
inline Precision update_gamma(std::span<const double> q_pi, std::span<const double> q_pi_prior,
                              std::span<const double> G, double beta_prior) {
  require(q_pi.size() == G.size() && q_pi_prior.size() == G.size(), ErrorKind::kDimensionMismatch,
          "policy vectors differ in size");
  double beta = beta_prior;
  for (size_t i = 0; i < G.size(); ++i) beta += (q_pi[i] - q_pi_prior[i]) * G[i];
  beta = std::clamp(beta, kBetaMin, kBetaMax);
  return {1.0 / beta, beta};
}

inline Precision update_gamma(const BeliefState& b, std::span<const double> G) {
  return update_gamma(b.q_pi, b.q_pi_prior, G, b.beta_prior);
}

enum class SelectionMode { kSample, kArgmax };

struct Selection {
  size_t policy = 0;
  CompositeAction action;
};

inline Selection sample_action(std::span<const double> q_pi, const std::vector<Policy>& policies, size_t t,
                               CounterRng& rng, SelectionMode mode) {
  require(!policies.empty(), ErrorKind::kInvalidArgument, "empty policy set");
  require(q_pi.size() == policies.size(), ErrorKind::kDimensionMismatch, "q_pi and policies differ in size");
  size_t k = 0;
  if (mode == SelectionMode::kArgmax) {
    k = argmax(q_pi);
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    k = policies.size() - 1;
    for (size_t i = 0; i < q_pi.size(); ++i) {
      acc += q_pi[i];
      if (u < acc) {
        k = i;
        break;
      }
    }
    while (q_pi[k] == 0.0 && k > 0) --k;  // rounding at the top of the cumulative sum
  }
  const auto& acts = policies[k].actions;
  require(!acts.empty(), ErrorKind::kInvalidArgument, "policy without actions");
  return {k, acts[std::min(t, acts.size() - 1)]};
}

/// Per-step policy evaluation: G and the predicted feedback distribution of
/// every policy, with report policies masked at the first step.
struct PolicyEvaluation {
  std::vector<bool> allowed;
  Vec G;                                 // total expected free energy (+inf where masked)
  Vec G_without_feedback_risk;           // G minus the feedback risk term
  std::vector<std::array<double, 3>> feedback;  // predicted feedback outcome per policy
};

inline double feedback_risk(const std::array<double, 3>& p, double c) {
  const double C[3] = {c, -c, 0.0};
  return kl_divergence(p, softmax(C));
}

inline PolicyEvaluation evaluate_policies(const MdpModel& model, const BeliefState& b) {
  const size_t n = model.policies.size();
  PolicyEvaluation ev;
  ev.allowed.assign(n, true);
  ev.G.assign(n, std::numeric_limits<double>::infinity());
  ev.G_without_feedback_risk.assign(n, 0.0);
  ev.feedback.assign(n, {0.0, 0.0, 0.0});
  const bool first = b.t() == 0;
  for (size_t k = 0; k < n; ++k) {
    const CompositeAction& u = model.policies[k].actions.front();
    if (first && u.reports()) {
      ev.allowed[k] = false;
      continue;
    }
    const auto states = predict_states(model, b, model.policies[k]);
    double g = 0.0;
    for (size_t m = 0; m < model.modalities(); ++m) {
      Vec p;
      const EfeTerms t = modality_efe(model, m, states, &p);
      if (m == kFeedbackModality) {
        std::copy(p.begin(), p.end(), ev.feedback[k].begin());
        g += t.ambiguity;
        g += t.risk;
      } else {
        g += t.total();
      }
    }
    ev.G[k] = g;
    ev.G_without_feedback_risk[k] = g - feedback_risk(ev.feedback[k], model.feedback_preference());
  }
  return ev;
}

/// Policy posterior over allowed policies; masked policies get probability 0.
inline Vec masked_policy_posterior(const std::vector<bool>& allowed, std::span<const double> F,
                                   std::span<const double> G, double gamma) {
  Vec f, g;
  for (size_t k = 0; k < allowed.size(); ++k)
    if (allowed[k]) {
      f.push_back(F[k]);
      g.push_back(G[k]);
    }
  const Vec q = policy_posterior(f, g, gamma);
  Vec out(allowed.size(), 0.0);
  for (size_t k = 0, j = 0; k < allowed.size(); ++k)
    if (allowed[k]) out[k] = q[j++];
  return out;
}

struct StepResult {
  BeliefState beliefs;
  Selection selection;
  bool done = false;
  PolicyEvaluation evaluation;
};

/// One step of a trial: infer states, evaluate policies, update precision,
/// select the next composite action.
inline StepResult step_trial(const MdpModel& model, const BeliefState& beliefs, const std::vector<Vec>& outcomes,
                             CounterRng& rng, SelectionMode mode = SelectionMode::kSample) {
  StepResult r;
  r.beliefs = infer_states(model, beliefs, outcomes);
  BeliefState& b = r.beliefs;
  const size_t t = b.t();
  if (t + 1 >= model.horizon) {
    r.selection = {kDecisionLocation, CompositeAction{kDecisionLocation, kUndecided}};
    r.done = true;
    b.actions.push_back(r.selection.action);
    return r;
  }
  r.evaluation = evaluate_policies(model, b);
  const auto& ev = r.evaluation;
  const size_t n = model.policies.size();
  const Vec F(n, b.free_energy);  // depth-1 policies share their past, so F_pi is common
  Vec G = ev.G;
  for (size_t k = 0; k < n; ++k)
    if (!ev.allowed[k]) G[k] = 0.0;
  b.beta = b.beta_prior;
  b.gamma = 1.0 / b.beta_prior;
  b.q_pi_prior = masked_policy_posterior(ev.allowed, Vec(n, 0.0), G, b.gamma);
  b.q_pi = masked_policy_posterior(ev.allowed, F, G, b.gamma);
  const Precision p = update_gamma(b, G);
  b.gamma = p.gamma;
  b.beta = p.beta;
  b.q_pi = masked_policy_posterior(ev.allowed, F, G, b.gamma);
  r.selection = sample_action(b.q_pi, model.policies, 0, rng, mode);
  r.done = r.selection.action.reports();
  b.actions.push_back(r.selection.action);
  return r;
}

}  // namespace foveate

#endif  // FOVEATE_MDP_HPP_
