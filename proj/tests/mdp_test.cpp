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

#include <gtest/gtest.h>

#include <sstream>

#include "foveate/agent.hpp"
#include "test_support.hpp"

namespace foveate {
namespace {

using testing::kind_of;

Vec onehot(size_t k, size_t n) {
  Vec v(n, 0.0);
  v[k] = 1.0;
  return v;
}

MdpModel task_model() { return build_model(TaskConfig{}, testing::atlas()); }

// Single hidden factor observed through one modality. Factor 0 sees action 0
// under every composite action, so B[0] needs a single matrix.
MdpModel one_factor_model(const Vec& D, const Vec& A /* table[s * outcomes + o] */, size_t outcomes,
                          const Vec& B) {
  MdpModel m;
  m.factor_sizes = {D.size()};
  Likelihood a = detail::make_likelihood("obs", {0}, m.factor_sizes, outcomes);
  a.table = A;
  detail::finish_entropies(a);
  m.A = {a};
  m.B = {{B}};
  m.C = {Vec(outcomes, 0.0)};
  m.D = {D};
  m.policies = {{{CompositeAction{}}}};
  m.validate();
  return m;
}

// Hidden state x (2 values) and a 2-location "where" factor; one modality
// depends on both. At location 0 it reveals x, at location 1 it is noise.
MdpModel two_location_toy(const Vec& D0) {
  MdpModel m;
  m.factor_sizes = {2, 2};
  Likelihood a = detail::make_likelihood("obs", {0, 1}, m.factor_sizes, 2);
  for (size_t x = 0; x < 2; ++x) {
    a.at(x + 2 * 0, x) = 1.0;
    a.at(x + 2 * 1, 0) = a.at(x + 2 * 1, 1) = 0.5;
  }
  detail::finish_entropies(a);
  m.A = {a};
  m.B = {{detail::identity_transition(2)}, {{1, 0, 1, 0}, {0, 1, 0, 1}}};
  m.C = {Vec(2, 0.0)};
  m.D = {D0, {1.0, 0.0}};
  m.policies = {{{CompositeAction{0, kUndecided}}}, {{CompositeAction{1, kUndecided}}},
                {{CompositeAction{0, kUndecided}}}};
  m.validate();
  return m;
}

TEST(Model, FactorAndModalitySizes) {
  const MdpModel m = task_model();
  EXPECT_EQ(m.factor_sizes[kDigitFactor], 10u);
  EXPECT_EQ(m.factor_sizes[kWhereFactor], 50u);
  EXPECT_EQ(m.factor_sizes[kReportFactor], 11u);
  EXPECT_EQ(m.features(), 2u);
  EXPECT_EQ(m.A[kFeedbackModality].outcomes, 3u);
  EXPECT_EQ(m.policies.size(), 60u);
  EXPECT_EQ(m.horizon, 9u);
  for (const Policy& p : m.policies)
    if (p.actions.front().reports()) EXPECT_EQ(p.actions.front().where, kDecisionLocation);
}

TEST(Model, FeedbackAndPreferences) {
  const MdpModel m = task_model();
  const Likelihood& fb = m.A[kFeedbackModality];
  EXPECT_DOUBLE_EQ(fb.at(3 + kReportStates * 3, kCorrect), 1.0 - m.epsilon);
  EXPECT_DOUBLE_EQ(fb.at(4 + kReportStates * 3, kIncorrect), 1.0 - m.epsilon);
  EXPECT_DOUBLE_EQ(fb.at(kUndecided + kReportStates * 3, kNoFeedback), 1.0 - m.epsilon);
  EXPECT_EQ(m.C[kFeedbackModality], (Vec{6.0, -6.0, 0.0}));
  for (size_t i = 0; i < m.modalities(); ++i)
    if (i != kFeedbackModality)
      for (double c : m.C[i]) EXPECT_EQ(c, 0.0);
}

TEST(Model, FeatureLikelihoodFollowsTheAtlas) {
  const MdpModel m = task_model();
  const PriorityAtlas& atlas = testing::atlas();
  for (size_t f = 0; f < 2; ++f)
    for (size_t d = 0; d < 10; ++d)
      for (size_t l = 0; l < kGridCells; ++l)
        EXPECT_DOUBLE_EQ(m.A[kFirstFeatureModality + f].at(d + 10 * l, atlas.level(d, f, l) - 1u), 1.0 - m.epsilon);
}

TEST(Model, ReportTransitions) {
  const MdpModel m = task_model();
  const auto& B = m.B[kReportFactor];
  const size_t n = kReportStates;
  EXPECT_EQ(B[kUndecided][kUndecided + n * kUndecided], 1.0);  // no report keeps undecided
  EXPECT_EQ(B[4][4 + n * kUndecided], 1.0);
  for (size_t u = 0; u < n; ++u)
    for (size_t k = 0; k < kClasses; ++k) EXPECT_EQ(B[u][k + n * k], 1.0);  // reports are absorbing
}

TEST(Model, SimplexInvariants) {
  EXPECT_NO_THROW(task_model().validate());
  MdpModel m = task_model();
  m.A[kWhereModality].at(3, 3) += 1e-9;
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::kNotNormalized);
}

TEST(Model, RejectsBadConfig) {
  TaskConfig c;
  c.c_pref = 0.0;
  EXPECT_EQ(kind_of([&] { build_model(c, testing::atlas()); }), ErrorKind::kInvalidArgument);
  PriorityAtlas small(10, 1, 7, 7);
  EXPECT_EQ(kind_of([&] { build_model(TaskConfig{}, small); }), ErrorKind::kDimensionMismatch);
}

TEST(InferStates, DeterministicLikelihoodGivesOneHotPosterior) {
  const Vec A = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const MdpModel m = one_factor_model({0.2, 0.3, 0.5}, A, 3, detail::identity_transition(3));
  const BeliefState b = infer_states(m, initial_beliefs(m), {onehot(1, 3)});
  EXPECT_NEAR(b.marginals[0][0][1], 1.0, 1e-12);
}

TEST(InferStates, UniformLikelihoodKeepsThePrior) {
  const MdpModel m = one_factor_model({0.2, 0.3, 0.5}, Vec(9, 1.0 / 3), 3, detail::identity_transition(3));
  const BeliefState b = infer_states(m, initial_beliefs(m), {onehot(2, 3)});
  for (size_t s = 0; s < 3; ++s) EXPECT_NEAR(b.marginals[0][0][s], m.D[0][s], 1e-12);
}

// 2 states x 2 outcomes: Bayes by enumerating the joint, over one and two
// steps (the second through a mixing transition).
TEST(InferStates, TwoByTwoToyMatchesEnumeration) {
  const Vec D = {0.3, 0.7};
  const double A[2][2] = {{0.9, 0.1}, {0.25, 0.75}};  // A[s][o]
  const Vec B = {0.8, 0.2, 0.35, 0.65};              // B[to + 2 * from]
  const MdpModel m = one_factor_model(D, {A[0][0], A[0][1], A[1][0], A[1][1]}, 2, B);
  for (size_t o0 = 0; o0 < 2; ++o0) {
    BeliefState b = infer_states(m, initial_beliefs(m), {onehot(o0, 2)});
    const double z = D[0] * A[0][o0] + D[1] * A[1][o0];
    EXPECT_NEAR(b.marginals[0][0][0], D[0] * A[0][o0] / z, 1e-5);
    for (size_t o1 = 0; o1 < 2; ++o1) {
      BeliefState b2 = b;
      b2.actions.push_back(CompositeAction{});
      b2 = infer_states(m, b2, {onehot(o1, 2)});
      double joint[2][2], total = 0.0;
      for (size_t s0 = 0; s0 < 2; ++s0)
        for (size_t s1 = 0; s1 < 2; ++s1) {
          joint[s0][s1] = D[s0] * A[s0][o0] * B[s1 + 2 * s0] * A[s1][o1];
          total += joint[s0][s1];
        }
      EXPECT_NEAR(b2.marginals[0][0][0], (joint[0][0] + joint[0][1]) / total, 1e-5);
      EXPECT_NEAR(b2.marginals[0][1][0], (joint[0][0] + joint[1][0]) / total, 1e-5);
      EXPECT_NEAR(b2.free_energy, -std::log(total), 1e-5);  // exact posterior: F = -ln p(o)
    }
  }
}

// Random multi-factor models with modalities over factor pairs, so the
// mean-field coordinate updates interact.
MdpModel random_model(CounterRng& rng) {
  MdpModel m;
  const size_t nf = 2 + rng() % 2;
  for (size_t f = 0; f < nf; ++f) m.factor_sizes.push_back(2 + rng() % 3);
  const size_t nm = 2 + rng() % 2;
  for (size_t k = 0; k < nm; ++k) {
    const size_t f1 = rng() % nf, f2 = (f1 + 1 + rng() % (nf - 1)) % nf;
    Likelihood a = detail::make_likelihood("m" + std::to_string(k), {f1, f2}, m.factor_sizes, 2 + rng() % 3);
    for (size_t s = 0; s < a.states(); ++s) {
      double z = 0.0;
      for (size_t o = 0; o < a.outcomes; ++o) z += a.at(s, o) = std::exp(2.0 * rng.normal());
      for (size_t o = 0; o < a.outcomes; ++o) a.at(s, o) /= z;
    }
    detail::finish_entropies(a);
    m.A.push_back(a);
    m.C.push_back(Vec(a.outcomes, 0.0));
  }
  for (size_t f = 0; f < nf; ++f) {
    const size_t n = m.factor_sizes[f];
    Vec B(n * n), D(n);
    for (size_t from = 0; from < n; ++from) {
      double z = 0.0;
      for (size_t to = 0; to < n; ++to) z += B[to + n * from] = std::exp(rng.normal());
      for (size_t to = 0; to < n; ++to) B[to + n * from] /= z;
    }
    double z = 0.0;
    for (double& d : D) z += d = std::exp(rng.normal());
    for (double& d : D) d /= z;
    m.B.push_back({B});
    m.D.push_back(D);
  }
  m.policies = {{{CompositeAction{0, 0}}}};
  m.validate();
  return m;
}

TEST(InferStates, FreeEnergyDescendsOnRandomModels) {
  CounterRng rng(21);
  size_t checked = 0;
  for (int model = 0; model < 50; ++model) {
    const MdpModel m = random_model(rng);
    BeliefState b = initial_beliefs(m);
    for (size_t t = 0; t < 3; ++t) {
      std::vector<Vec> obs;
      for (const Likelihood& a : m.A) obs.push_back(onehot(rng() % a.outcomes, a.outcomes));
      if (t > 0) b.actions.push_back(CompositeAction{0, 0});
      b = infer_states(m, b, obs);
      for (size_t i = 1; i < b.free_energy_trace.size(); ++i, ++checked)
        EXPECT_LE(b.free_energy_trace[i], b.free_energy_trace[i - 1] + 1e-9) << "model " << model;
      for (const auto& chain : b.marginals)
        for (const Vec& q : chain) EXPECT_TRUE(is_simplex(q, 1e-10));
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(InferStates, RejectsInvalidOutcomes) {
  const MdpModel m = one_factor_model({0.5, 0.5}, {0.9, 0.1, 0.1, 0.9}, 2, detail::identity_transition(2));
  EXPECT_EQ(kind_of([&] { infer_states(m, initial_beliefs(m), {Vec{0.5, 0.6}}); }), ErrorKind::kNotNormalized);
  EXPECT_EQ(kind_of([&] { infer_states(m, initial_beliefs(m), {Vec{1.0, 0.0, 0.0}}); }), ErrorKind::kOutOfRange);
}

TEST(ExpectedFreeEnergy, FlatPreferencesLeaveOnlyTheDivergenceFromUniform) {
  const MdpModel m = two_location_toy({0.7, 0.3});
  BeliefState b = infer_states(m, initial_beliefs(m), {Vec{0.5, 0.5}});
  const EfeTerms t = expected_free_energy_terms(m, b, m.policies[0]);
  EXPECT_NEAR(t.ambiguity, 0.0, 1e-12);
  EXPECT_NEAR(t.risk, std::log(2.0) - entropy(Vec{0.7, 0.3}), 1e-12);
  EXPECT_DOUBLE_EQ(expected_free_energy(m, b, m.policies[0]), expected_free_energy(m, b, m.policies[2]));
}

TEST(ExpectedFreeEnergy, AmbiguousLocationScoresWorse) {
  const MdpModel m = two_location_toy({0.5, 0.5});
  BeliefState b = infer_states(m, initial_beliefs(m), {Vec{0.5, 0.5}});
  // Location 0 resolves x: risk 0 (predicted outcomes uniform), ambiguity 0.
  // Location 1: risk 0, ambiguity ln 2.
  EXPECT_NEAR(expected_free_energy(m, b, m.policies[0]), 0.0, 1e-12);
  EXPECT_NEAR(expected_free_energy(m, b, m.policies[1]), std::log(2.0), 1e-12);
}

// d risk / d C[correct] = softmax(C)[correct] - p(correct): raising the
// preference for correct feedback lowers G for a policy whose predicted
// mass on correct exceeds its preferred probability.
TEST(ExpectedFreeEnergy, PreferenceForCorrectFeedback) {
  MdpModel m = task_model();
  m.C[kFeedbackModality] = {0.0, 0.0, 0.0};
  BeliefState b = initial_beliefs(m);
  b = infer_states(m, b, make_outcomes(m, kDecisionLocation, onehot(3, 10), kNoFeedback, {}));
  b.actions.push_back(CompositeAction{12, kUndecided});
  std::array<std::array<uint8_t, kGridCells>, kChannelCount> levels{};
  for (size_t f = 0; f < kChannelCount; ++f)
    for (size_t l = 0; l < kGridCells; ++l) levels[f][l] = testing::atlas().level(3, f, l);
  b = infer_states(m, b, make_outcomes(m, 12, onehot(3, 10), kNoFeedback, levels));
  const Policy report3{{CompositeAction{kDecisionLocation, 3}}};
  const Policy report5{{CompositeAction{kDecisionLocation, 5}}};
  const double g3 = expected_free_energy(m, b, report3), g5 = expected_free_energy(m, b, report5);
  MdpModel up = m;
  up.C[kFeedbackModality][kCorrect] += 0.5;
  Vec p;
  modality_efe(m, kFeedbackModality, predict_states(m, b, report3), &p);
  ASSERT_GT(p[kCorrect], 1.0 / 3.0);
  EXPECT_LT(expected_free_energy(up, b, report3), g3);
  modality_efe(m, kFeedbackModality, predict_states(m, b, report5), &p);
  const double slope = softmax(m.C[kFeedbackModality])[kCorrect] - p[kCorrect];
  const double h = 1e-6;
  MdpModel bumped = m;
  bumped.C[kFeedbackModality][kCorrect] += h;
  EXPECT_NEAR((expected_free_energy(bumped, b, report5) - g5) / h, slope, 1e-5);
}

TEST(PolicyPosterior, WorkedExample) {
  const Vec q = policy_posterior(Vec{0, 0}, Vec{0, std::log(4.0)}, 1.0);
  EXPECT_NEAR(q[0], 0.8, 1e-12);
  EXPECT_NEAR(q[1], 0.2, 1e-12);
}

TEST(PolicyPosterior, SymmetryInvarianceAndLimits) {
  const Vec F = {0.3, -1.2, 2.0, 0.7}, G = {1.0, 0.5, -0.25, 3.0};
  for (double v : policy_posterior(Vec(4, 1.5), Vec(4, -2.0), 3.0)) EXPECT_NEAR(v, 0.25, 1e-15);
  const Vec q = policy_posterior(F, G, 2.5);
  EXPECT_NEAR(sum(q), 1.0, 1e-12);
  Vec F2 = F, G2 = G;
  for (double& f : F2) f += 17.0;
  for (double& g : G2) g -= 5.0;
  const Vec qf = policy_posterior(F2, G, 2.5), qg = policy_posterior(F, G2, 2.5);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(qf[i], q[i], 1e-12);
    EXPECT_NEAR(qg[i], q[i], 1e-12);
  }
  const Vec q0 = policy_posterior(F, G, 0.0), only_f = softmax(Vec{-0.3, 1.2, -2.0, -0.7});
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(q0[i], only_f[i], 1e-15);
  EXPECT_EQ(kind_of([] { policy_posterior(Vec{0, NAN}, Vec{0, 0}, 1.0); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { policy_posterior(Vec{0, 0}, Vec{0, INFINITY}, 1.0); }), ErrorKind::kInvalidArgument);
}

TEST(PolicyPosterior, ArgmaxInvariantToGammaWhenGIsConstant) {
  const Vec F = {0.4, -0.1, 0.9}, G(3, 2.0);
  const size_t a = argmax(policy_posterior(F, G, 0.5));
  for (double gamma : {1.0, 4.0, 100.0}) EXPECT_EQ(argmax(policy_posterior(F, G, gamma)), a);
}

TEST(UpdateGamma, FixedPoint) {
  const Vec q = {0.2, 0.5, 0.3};
  const Precision p = update_gamma(q, q, Vec{1.0, -2.0, 0.5}, 1.7);
  EXPECT_DOUBLE_EQ(p.beta, 1.7);
  EXPECT_DOUBLE_EQ(p.gamma, 1.0 / 1.7);
}

// Mass moving toward the lower-G policy lowers beta (raises gamma):
// q = (0.8, 0.2), q0 = (0.5, 0.5), G = (-1, 0), beta_prior = 1.
TEST(UpdateGamma, ShiftTowardLowerGRaisesPrecision) {
  const Precision p = update_gamma(Vec{0.8, 0.2}, Vec{0.5, 0.5}, Vec{-1.0, 0.0}, 1.0);
  EXPECT_NEAR(p.beta, 0.7, 1e-12);
  EXPECT_NEAR(p.gamma, 1.0 / 0.7, 1e-12);
  EXPECT_EQ(update_gamma(Vec{1.0, 0.0}, Vec{0.0, 1.0}, Vec{-1e6, 0.0}, 1.0).beta, kBetaMin);
  EXPECT_EQ(update_gamma(Vec{1.0, 0.0}, Vec{0.0, 1.0}, Vec{1e6, 0.0}, 1.0).beta, kBetaMax);
}

TEST(SampleAction, DegenerateCases) {
  const std::vector<Policy> one = {{{CompositeAction{7, kUndecided}}}};
  CounterRng rng(1);
  for (auto mode : {SelectionMode::kSample, SelectionMode::kArgmax})
    EXPECT_EQ(sample_action(Vec{1.0}, one, 0, rng, mode).action, (CompositeAction{7, kUndecided}));
  const std::vector<Policy> two = {{{CompositeAction{3, kUndecided}}}, {{CompositeAction{49, 2}}}};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_action(Vec{1.0, 0.0}, two, 0, rng, SelectionMode::kSample).policy, 0u);
  EXPECT_EQ(sample_action(Vec{0.5, 0.5}, two, 0, rng, SelectionMode::kArgmax).policy, 0u);  // lowest index wins
  EXPECT_EQ(kind_of([&] { sample_action(Vec{}, {}, 0, rng, SelectionMode::kSample); }), ErrorKind::kInvalidArgument);
}

TEST(SampleAction, FrequenciesMatchThePosterior) {
  const Vec q = {0.5, 0.3, 0.15, 0.05};
  std::vector<Policy> ps;
  for (size_t i = 0; i < q.size(); ++i) ps.push_back({{CompositeAction{i, kUndecided}}});
  CounterRng rng(99);
  Vec freq(q.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[sample_action(q, ps, 0, rng, SelectionMode::kSample).policy] += 1.0 / n;
  for (size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(freq[i], q[i], 0.01);
}

TEST(StepTrial, NoReportAtTheFirstStep) {
  const MdpModel m = task_model();
  CounterRng rng(5);
  const Vec flat(10, 0.1);
  const auto levels = feature_levels(Image(28, 28));
  const StepResult r = step_trial(m, initial_beliefs(m), make_outcomes(m, kDecisionLocation, flat, kNoFeedback, levels),
                                  rng, SelectionMode::kSample);
  EXPECT_FALSE(r.done);
  for (size_t k = 0; k < m.policies.size(); ++k) {
    const bool reports = m.policies[k].actions.front().reports();
    EXPECT_EQ(r.evaluation.allowed[k], !reports);
    if (reports) EXPECT_EQ(r.beliefs.q_pi[k], 0.0);
  }
  EXPECT_TRUE(is_simplex(r.beliefs.q_pi, 1e-10));
}

TEST(StepTrial, ForcedToTheDecisionLocationAtTheHorizon) {
  const MdpModel m = task_model();
  CounterRng rng(6);
  const Vec flat(10, 0.1);
  const auto levels = feature_levels(Image(28, 28));
  BeliefState b = initial_beliefs(m);
  size_t location = kDecisionLocation;
  for (size_t t = 0; t < m.horizon; ++t) {
    const StepResult r = step_trial(m, b, make_outcomes(m, location, flat, kNoFeedback, levels), rng,
                                    SelectionMode::kArgmax);
    b = r.beliefs;
    if (t + 1 == m.horizon) {
      EXPECT_TRUE(r.done);
      EXPECT_EQ(r.selection.action, (CompositeAction{kDecisionLocation, kUndecided}));
    } else {
      ASSERT_FALSE(r.done) << "flat evidence should never be reported at step " << t;
    }
    location = r.selection.action.where;
  }
  EXPECT_EQ(kind_of([&] { infer_states(m, b, make_outcomes(m, location, flat, kNoFeedback, levels)); }),
            ErrorKind::kOutOfRange);
}

TEST(StepTrial, GoldenTrace) {
  const auto& la = testing::default_agent();
  const Dataset& d = testing::test_split();
  std::ostringstream os;
  for (size_t i : {0u, 1u, 2u}) {
    const TrialResult r = run_trial(la.agent, d.image(i), d.labels[i], i, i, 1.0, 42);
    os << i;
    for (size_t f : r.fixations) os << ' ' << f;
    os << " report=" << r.report << '\n';
  }
  EXPECT_EQ(os.str(), testing::golden("trial_trace.txt", os.str()));
}

}  // namespace
}  // namespace foveate
