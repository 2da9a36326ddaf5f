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

// The observer's model of the agent: simulate subjects, score recorded
// behaviour under candidate subjective parameters, recover those parameters
// by a Laplace approximation, and summarise behaviour.

#ifndef FOVEATE_INVERSION_HPP_
#define FOVEATE_INVERSION_HPP_

#include <array>
#include <charconv>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "foveate/agent.hpp"
#include "foveate/mnist.hpp"

namespace foveate {

inline constexpr double kSaccadeMs = 200.0;
inline constexpr double kLikelihoodFloor = 1e-12;

// ---------------------------------------------------------------------------
// Behaviour traces.

struct BehaviorTrace {
  size_t trial_id = 0;
  size_t stimulus_id = 0;
  std::vector<size_t> fixations;
  size_t report = kUndecided;
  bool correct = false;

  bool decided() const { return report != kUndecided; }
  /// Model time at the end of each fixation.
  Vec elapsed_ms() const {
    Vec t(fixations.size());
    for (size_t i = 0; i < t.size(); ++i) t[i] = kSaccadeMs * static_cast<double>(i + 1);
    return t;
  }
  bool operator==(const BehaviorTrace&) const = default;
};

inline BehaviorTrace to_trace(const TrialResult& r) {
  return {r.trial_id, r.stimulus_id, r.fixations, r.report, r.correct};
}

inline std::string format_trace(const BehaviorTrace& t) {
  std::string s = std::to_string(t.trial_id) + '\t' + std::to_string(t.stimulus_id) + "\tfix=(";
  for (size_t i = 0; i < t.fixations.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(t.fixations[i]);
  }
  s += ")\treport=";
  s += t.decided() ? std::to_string(t.report) : std::string("U");
  s += "\tcorrect=";
  s += t.correct ? '1' : '0';
  return s;
}

namespace detail {

inline size_t parse_size(std::string_view s, const char* what) {
  size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size() && !s.empty(), ErrorKind::kInvalidArgument,
          std::string("bad ") + what + " in trace line");
  return v;
}

inline std::string_view strip_prefix(std::string_view s, std::string_view prefix) {
  require(s.substr(0, prefix.size()) == prefix, ErrorKind::kInvalidArgument,
          "trace field must start with '" + std::string(prefix) + "'");
  return s.substr(prefix.size());
}

}  // namespace detail

inline BehaviorTrace parse_trace(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> f;
  for (size_t start = 0;;) {
    const size_t tab = line.find('\t', start);
    f.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  require(f.size() == 5, ErrorKind::kInvalidArgument, "trace line needs 5 tab-separated fields");
  BehaviorTrace t;
  t.trial_id = detail::parse_size(f[0], "trial id");
  t.stimulus_id = detail::parse_size(f[1], "stimulus id");
  std::string_view fix = detail::strip_prefix(f[2], "fix=(");
  require(!fix.empty() && fix.back() == ')', ErrorKind::kInvalidArgument, "fixation list must end with ')'");
  fix.remove_suffix(1);
  while (!fix.empty()) {
    const size_t comma = fix.find(',');
    const size_t loc = detail::parse_size(fix.substr(0, comma), "fixation");
    require(loc < kLocations, ErrorKind::kOutOfRange, "fixation outside the grid");
    t.fixations.push_back(loc);
    if (comma == std::string_view::npos) break;
    fix.remove_prefix(comma + 1);
    require(!fix.empty(), ErrorKind::kInvalidArgument, "trailing comma in fixation list");
  }
  const std::string_view rep = detail::strip_prefix(f[3], "report=");
  if (rep == "U") {
    t.report = kUndecided;
  } else {
    t.report = detail::parse_size(rep, "report");
    require(t.report < kClasses, ErrorKind::kOutOfRange, "report outside 0..9");
  }
  const std::string_view cor = detail::strip_prefix(f[4], "correct=");
  require(cor == "0" || cor == "1", ErrorKind::kInvalidArgument, "correct must be 0 or 1");
  t.correct = cor == "1";
  require(!(t.correct && !t.decided()), ErrorKind::kInvalidArgument, "undecided trial marked correct");
  return t;
}

inline void write_traces(std::ostream& os, std::span<const BehaviorTrace> traces) {
  for (const auto& t : traces) os << format_trace(t) << '\n';
}

inline std::vector<BehaviorTrace> read_traces(std::istream& is) {
  std::vector<BehaviorTrace> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(parse_trace(line));
  return out;
}

inline std::vector<BehaviorTrace> read_traces_file(const std::string& path) {
  std::istringstream is(detail::read_file(path));
  return read_traces(is);
}

// ---------------------------------------------------------------------------
// Simulation.

/// The agent with the subject's preference for correct feedback.
inline Agent subject_agent(const Agent& base, const SubjectiveParams& params) {
  require(params.beta > 0.0 && std::isfinite(params.beta) && std::isfinite(params.c_pref),
          ErrorKind::kInvalidArgument, "beta must be positive");
  Agent a = base;
  a.model.set_feedback_preference(params.c_pref);
  return a;
}

/// One trial per entry of `stimulus_ids`; trial ids are positions in that list.
inline std::vector<BehaviorTrace> simulate_subject(const Agent& base, const SubjectiveParams& params,
                                                   const Dataset& data, std::span<const size_t> stimulus_ids,
                                                   uint64_t seed) {
  const Agent agent = subject_agent(base, params);
  std::vector<BehaviorTrace> out;
  out.reserve(stimulus_ids.size());
  for (size_t i = 0; i < stimulus_ids.size(); ++i) {
    const size_t s = stimulus_ids[i];
    require(s < data.size(), ErrorKind::kOutOfRange, "stimulus id out of range");
    out.push_back(to_trace(run_trial(agent, data.image(s), data.labels[s], i, s, params.beta, seed)));
  }
  return out;
}

/// The first `per_class` images of each class, interleaved by class.
inline std::vector<size_t> balanced_ids(const Dataset& data, size_t per_class) {
  std::array<std::vector<size_t>, kClasses> by;
  for (size_t i = 0; i < data.size(); ++i)
    if (by[data.labels[i]].size() < per_class) by[data.labels[i]].push_back(i);
  std::vector<size_t> ids;
  for (size_t k = 0; k < per_class; ++k)
    for (size_t c = 0; c < kClasses; ++c) {
      require(k < by[c].size(), ErrorKind::kCountMismatch, "not enough images of class " + std::to_string(c));
      ids.push_back(by[c][k]);
    }
  return ids;
}

// ---------------------------------------------------------------------------
// Action likelihood.

/// What the subject faced at one choice point. Beliefs do not depend on
/// (c, beta), so the policy evaluation can be reused for any parameters:
/// only the feedback risk changes with c.
struct ReplayStep {
  std::vector<bool> allowed;
  Vec G_base;  // expected free energy without the feedback risk
  std::vector<std::array<double, 3>> feedback;
  size_t chosen = 0;
};

using ReplayTrial = std::vector<ReplayStep>;

/// Policy indices that reproduce a trace.
inline std::vector<size_t> policy_path(const MdpModel& model, const BehaviorTrace& t) {
  std::vector<size_t> path;
  for (size_t loc : t.fixations) {
    size_t k = 0;
    while (k < model.policies.size() &&
           !(model.policies[k].actions.front().where == loc && !model.policies[k].actions.front().reports()))
      ++k;
    require(k < model.policies.size(), ErrorKind::kInvalidArgument, "no policy fixates " + std::to_string(loc));
    path.push_back(k);
  }
  if (t.decided()) {
    size_t k = 0;
    while (k < model.policies.size() && model.policies[k].actions.front().report != t.report) ++k;
    require(k < model.policies.size(), ErrorKind::kInvalidArgument, "no policy reports " + std::to_string(t.report));
    path.push_back(k);
  }
  return path;
}

/// Re-runs the subject along the recorded choices and keeps every choice point.
inline ReplayTrial replay(const Agent& agent, const BehaviorTrace& trace, const Dataset& data) {
  require(trace.stimulus_id < data.size(), ErrorKind::kOutOfRange, "trace stimulus id out of range");
  const int label = data.labels[trace.stimulus_id];
  require(trace.correct == (trace.decided() && trace.report == static_cast<size_t>(label)),
          ErrorKind::kInvalidArgument, "trace correct flag disagrees with the stimulus label");
  require(trace.fixations.size() + 1 <= agent.model.horizon - 1 || !trace.decided(), ErrorKind::kInvalidArgument,
          "trace longer than the horizon");
  require(trace.decided() || trace.fixations.size() == agent.model.horizon - 1, ErrorKind::kInvalidArgument,
          "undecided trace must run to the horizon");
  const auto path = policy_path(agent.model, trace);
  const TrialResult r = run_trial(agent, data.image(trace.stimulus_id), label, trace.trial_id, trace.stimulus_id,
                                  1.0, 0, &path);
  require(r.fixations == trace.fixations && r.report == trace.report, ErrorKind::kInvalidArgument,
          "replay diverged from the recorded trace");
  ReplayTrial out;
  for (size_t t = 0; t < r.steps.size() && t < path.size(); ++t) {
    const auto& ev = r.steps[t].evaluation;
    out.push_back({ev.allowed, ev.G_without_feedback_risk, ev.feedback, path[t]});
  }
  return out;
}

inline std::vector<ReplayTrial> replay_all(const Agent& agent, std::span<const BehaviorTrace> traces,
                                           const Dataset& data) {
  std::vector<ReplayTrial> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(replay(agent, t, data));
  return out;
}

/// ln Q(chosen) at one choice point under (c, beta).
inline double choice_log_probability(const ReplayStep& s, const SubjectiveParams& p) {
  const double gamma = 1.0 / p.beta;
  Vec logits;
  double chosen = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < s.allowed.size(); ++k) {
    if (!s.allowed[k]) continue;
    const double x = -gamma * (s.G_base[k] + feedback_risk(s.feedback[k], p.c_pref));
    logits.push_back(x);
    if (k == s.chosen) chosen = x;
  }
  require(!logits.empty(), ErrorKind::kInvalidArgument, "no allowed policy");
  const double lq = chosen - log_sum_exp(logits);
  return std::max(lq, std::log(kLikelihoodFloor));
}

inline double action_likelihood(const ReplayTrial& trial, const SubjectiveParams& p) {
  double ll = 0.0;
  for (const auto& s : trial) ll += choice_log_probability(s, p);
  return ll;
}

inline double action_likelihood(std::span<const ReplayTrial> trials, const SubjectiveParams& p) {
  double ll = 0.0;
  for (const auto& t : trials) ll += action_likelihood(t, p);
  return ll;
}

/// Convenience: replay then score a single trace.
inline double action_likelihood(const Agent& agent, const BehaviorTrace& trace, const Dataset& data,
                                const SubjectiveParams& p) {
  return action_likelihood(replay(agent, trace, data), p);
}

// ---------------------------------------------------------------------------
// Inversion over theta = (c, ln beta).

struct InversionPriors {
  double c_mean = 4.0, c_sd = 2.0;
  double log_beta_mean = 0.0, log_beta_sd = 1.0;
};

struct InversionOptions {
  double fd_step = 1e-2;
  double tolerance = 1e-4;
  size_t max_iterations = 100;
  size_t max_halvings = 40;
  double jitter = 1e-6;
};

using Theta = std::array<double, 2>;
using Matrix2 = std::array<std::array<double, 2>, 2>;

struct InversionResult {
  Theta mean{};
  Matrix2 covariance{};
  bool covariance_reliable = true;
  std::vector<double> free_energy;  // objective after each iteration (first entry: start)
  std::vector<Theta> path;
  size_t iterations = 0;
  double log_evidence = 0.0;  // Laplace approximation at the optimum

  SubjectiveParams params() const { return {mean[0], std::exp(mean[1])}; }
};

inline double log_prior(const Theta& th, const InversionPriors& pr) {
  const double zc = (th[0] - pr.c_mean) / pr.c_sd, zb = (th[1] - pr.log_beta_mean) / pr.log_beta_sd;
  return -0.5 * (zc * zc + zb * zb) - std::log(2.0 * M_PI * pr.c_sd * pr.log_beta_sd);
}

namespace detail {

inline Theta fd_gradient(const std::function<double(const Theta&)>& f, const Theta& x, double h) {
  Theta g{};
  for (size_t i = 0; i < 2; ++i) {
    Theta a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline Matrix2 fd_hessian(const std::function<double(const Theta&)>& f, const Theta& x, double h) {
  Matrix2 H{};
  const double f0 = f(x);
  for (size_t i = 0; i < 2; ++i) {
    Theta a = x, b = x;
    a[i] += h;
    b[i] -= h;
    H[i][i] = (f(a) - 2.0 * f0 + f(b)) / (h * h);
  }
  Theta pp = x, pm = x, mp = x, mm = x;
  pp[0] += h, pp[1] += h;
  pm[0] += h, pm[1] -= h;
  mp[0] -= h, mp[1] += h;
  mm[0] -= h, mm[1] -= h;
  H[0][1] = H[1][0] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
  return H;
}

inline double det(const Matrix2& m) { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }

inline bool positive_definite(const Matrix2& m) { return m[0][0] > 0.0 && det(m) > 0.0; }

inline Matrix2 inverse(const Matrix2& m) {
  const double d = det(m);
  return {{{m[1][1] / d, -m[0][1] / d}, {-m[1][0] / d, m[0][0] / d}}};
}

}  // namespace detail

/// Ascends F(theta) = loglik(theta) + ln prior(theta). Directions are Newton
/// steps when the finite-difference curvature allows and prior-scaled
/// gradients otherwise; a backtracking search only accepts steps that raise F.
inline InversionResult invert(const std::function<double(const SubjectiveParams&)>& loglik,
                              const InversionPriors& priors = {}, const InversionOptions& opt = {}) {
  const std::function<double(const Theta&)> F = [&](const Theta& th) {
    if (std::abs(th[1]) > 50.0) return -std::numeric_limits<double>::infinity();
    return loglik({th[0], std::exp(th[1])}) + log_prior(th, priors);
  };
  InversionResult r;
  Theta x = {priors.c_mean, priors.log_beta_mean};
  double fx = F(x);
  require(std::isfinite(fx), ErrorKind::kInvalidArgument, "objective not finite at the prior mean");
  r.free_energy.push_back(fx);
  r.path.push_back(x);
  const double h = opt.fd_step;
  for (size_t it = 0; it < opt.max_iterations; ++it) {
    const Theta g = detail::fd_gradient(F, x, h);
    const Matrix2 H = detail::fd_hessian(F, x, h);
    Matrix2 negH = {{{-H[0][0], -H[0][1]}, {-H[1][0], -H[1][1]}}};
    Theta d;
    if (detail::positive_definite(negH)) {
      const Matrix2 S = detail::inverse(negH);
      d = {S[0][0] * g[0] + S[0][1] * g[1], S[1][0] * g[0] + S[1][1] * g[1]};
    } else {
      d = {g[0] * priors.c_sd * priors.c_sd, g[1] * priors.log_beta_sd * priors.log_beta_sd};
    }
    double step = 1.0, fy = fx;
    Theta y = x;
    bool improved = false;
    for (size_t k = 0; k < opt.max_halvings; ++k, step *= 0.5) {
      y = {x[0] + step * d[0], x[1] + step * d[1]};
      fy = F(y);
      if (std::isfinite(fy) && fy > fx) {
        improved = true;
        break;
      }
    }
    ++r.iterations;
    if (!improved) {
      r.free_energy.push_back(fx);
      r.path.push_back(x);
      break;
    }
    const double delta = fy - fx;
    x = y;
    fx = fy;
    r.free_energy.push_back(fx);
    r.path.push_back(x);
    if (std::abs(delta) < opt.tolerance) break;
  }
  r.mean = x;
  Matrix2 P = detail::fd_hessian(F, x, h);
  for (auto& row : P)
    for (double& v : row) v = -v;
  P[0][1] = P[1][0] = 0.5 * (P[0][1] + P[1][0]);
  if (!detail::positive_definite(P)) {
    P[0][0] += opt.jitter;
    P[1][1] += opt.jitter;
  }
  r.covariance_reliable = detail::positive_definite(P);
  if (r.covariance_reliable) {
    r.covariance = detail::inverse(P);
    r.covariance[0][1] = r.covariance[1][0] = 0.5 * (r.covariance[0][1] + r.covariance[1][0]);
    r.log_evidence = fx + std::log(2.0 * M_PI) - 0.5 * std::log(detail::det(P));
  } else {
    r.covariance = {{{priors.c_sd * priors.c_sd, 0.0}, {0.0, priors.log_beta_sd * priors.log_beta_sd}}};
    r.log_evidence = fx;
  }
  return r;
}

inline InversionResult invert(std::span<const ReplayTrial> trials, const InversionPriors& priors = {},
                              const InversionOptions& opt = {}) {
  return invert([&](const SubjectiveParams& p) { return action_likelihood(trials, p); }, priors, opt);
}

// ---------------------------------------------------------------------------
// Behavioural summaries.

struct BehavioralMetrics {
  size_t trials = 0;
  double accuracy = 0.0;            // undecided counts as incorrect
  double undecided = 0.0;           // fraction of trials without a report
  double mean_saccades = 0.0;
  double mean_fixation_ms = 0.0;    // 200 ms per step spent at a cell
  double pct_unique_pixels = 0.0;   // fraction of the 784 pixels ever under the fovea
};

/// Pixels covered by fixating `location` (empty for the decision location).
inline std::vector<size_t> footprint(size_t location) {
  const GridPoint c = cell_center(location);
  std::vector<size_t> px;
  for (int i : fovea_indices(grid_to_pixel(Point2{c.row, c.col})))
    if (i >= 0) px.push_back(static_cast<size_t>(i));
  return px;
}

inline BehavioralMetrics behavioral_metrics(std::span<const BehaviorTrace> traces) {
  require(!traces.empty(), ErrorKind::kInvalidArgument, "no traces");
  BehavioralMetrics m;
  m.trials = traces.size();
  double runs = 0.0, run_ms = 0.0;
  for (const auto& t : traces) {
    m.accuracy += t.correct ? 1.0 : 0.0;
    m.undecided += t.decided() ? 0.0 : 1.0;
    m.mean_saccades += static_cast<double>(t.fixations.size());
    std::set<size_t> seen;
    for (size_t i = 0; i < t.fixations.size();) {
      size_t j = i;
      while (j < t.fixations.size() && t.fixations[j] == t.fixations[i]) ++j;
      runs += 1.0;
      run_ms += kSaccadeMs * static_cast<double>(j - i);
      for (; i < j; ++i)
        for (size_t p : footprint(t.fixations[i])) seen.insert(p);
    }
    m.pct_unique_pixels += static_cast<double>(seen.size()) / static_cast<double>(kImagePixels);
  }
  const double n = static_cast<double>(traces.size());
  m.accuracy /= n;
  m.undecided /= n;
  m.mean_saccades /= n;
  m.pct_unique_pixels /= n;
  m.mean_fixation_ms = runs > 0.0 ? run_ms / runs : 0.0;
  return m;
}

struct SweepPoint {
  SubjectiveParams params;
  BehavioralMetrics metrics;
};

inline std::vector<SweepPoint> sweep(const Agent& agent, std::span<const SubjectiveParams> grid, const Dataset& data,
                                     std::span<const size_t> stimulus_ids, uint64_t seed) {
  std::vector<SweepPoint> out;
  for (const auto& p : grid)
    out.push_back({p, behavioral_metrics(simulate_subject(agent, p, data, stimulus_ids, seed))});
  return out;
}

inline constexpr const char* kMetricsHeader = "param_c,param_beta,accuracy,mean_saccades,mean_fixation_ms,pct_pixels";

/// One CSV row; pct_pixels is written in percent.
inline std::string metrics_row(const SubjectiveParams& p, const BehavioralMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6f,%.6f,%.6f,%.6f", p.c_pref, p.beta, m.accuracy, m.mean_saccades,
                m.mean_fixation_ms, 100.0 * m.pct_unique_pixels);
  return buf;
}

inline std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string s = std::string(kMetricsHeader) + '\n';
  for (const auto& pt : points) s += metrics_row(pt.params, pt.metrics) + '\n';
  return s;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::kDimensionMismatch, "spearman needs paired samples");
  const auto ranks = [](std::span<const double> v) {
    std::vector<size_t> o(v.size());
    std::iota(o.begin(), o.end(), size_t{0});
    std::sort(o.begin(), o.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    Vec r(v.size());
    for (size_t i = 0; i < o.size();) {
      size_t j = i;
      while (j < o.size() && v[o[j]] == v[o[i]]) ++j;
      for (size_t k = i; k < j; ++k) r[o[k]] = 0.5 * static_cast<double>(i + j - 1);
      i = j;
    }
    return r;
  };
  const Vec rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = sum(rx) / n, my = sum(ry) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace foveate

#endif  // FOVEATE_INVERSION_HPP_
