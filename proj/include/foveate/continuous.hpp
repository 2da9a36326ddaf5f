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

// Predictive coding over one saccade.
//
// Expectations mu = (x_o, v_o, v_h, rho, a): believed eye position and
// target (grid units), class log-weights, continuous style code, and eye
// velocity. The energy is the Gaussian free energy
//
//   F = 1/2 sum_i pi_i eps_i^2 - 1/2 sum_i ln pi_i
//
// over proprioceptive, exteroceptive, cause, state and action errors. The
// exteroceptive precision is scaled by exp(-H(softmax v_h) / ln 10); that
// scale is read off the current beliefs and held fixed when differentiating,
// so zero errors are an equilibrium.

#ifndef FOVEATE_CONTINUOUS_HPP_
#define FOVEATE_CONTINUOUS_HPP_

#include <array>
#include <cmath>
#include <vector>

#include "foveate/common.hpp"
#include "foveate/image.hpp"
#include "foveate/vision.hpp"

namespace foveate {

using Point2 = std::array<double, 2>;  // (row, col)

inline constexpr size_t kFoveaSide = 8;
inline constexpr size_t kFoveaPixels = kFoveaSide * kFoveaSide;

struct GenExpectations {
  Point2 x_o{};  // believed eye position
  Point2 v_o{};  // target cause
  Vec v_h = Vec(kLatentClasses, 0.0);
  Vec rho = Vec(kLatentContinuous, 0.0);
  Point2 a{};

  void validate() const {
    require(v_h.size() == kLatentClasses && rho.size() == kLatentContinuous, ErrorKind::kDimensionMismatch,
            "expectation sizes");
    const bool ok = all_finite(x_o) && all_finite(v_o) && all_finite(v_h) && all_finite(rho) && all_finite(a);
    require(ok, ErrorKind::kDiverged, "non-finite expectation");
  }
};

/// Log-precisions; the defaults favour fast, ballistic eye movements.
struct PrecisionConfig {
  double log_pi_p = 8.0;  // proprioception and target cause
  double log_pi_e = 4.0;  // exteroception (fovea)
  double log_pi_x = 4.0;  // eye dynamics
  double log_pi_a = 4.0;  // action
  double log_pi_v = 0.0;  // class log-weights around the descending prior

  double pi_p() const { return std::exp(log_pi_p); }
  double pi_e() const { return std::exp(log_pi_e); }
  double pi_x() const { return std::exp(log_pi_x); }
  double pi_a() const { return std::exp(log_pi_a); }
  double pi_v() const { return std::exp(log_pi_v); }

  void validate() const {
    for (double l : {log_pi_p, log_pi_e, log_pi_x, log_pi_a, log_pi_v})
      require(std::isfinite(l), ErrorKind::kInvalidArgument, "precisions must be positive and finite");
  }
};

/// Descending empirical priors: saccade target and class prior.
struct LinkDescend {
  Point2 eta_o{};
  Vec eta_h = Vec(kLatentClasses, 1.0 / kLatentClasses);
};

// ---------------------------------------------------------------------------
// Fovea geometry.

inline Point2 grid_to_pixel(const Point2& g) { return {grid_to_pixel(g[0]), grid_to_pixel(g[1])}; }

/// Flat pixel index of each fovea sample around a centre in pixel
/// coordinates; -1 where the sample falls outside the image.
inline std::array<int, kFoveaPixels> fovea_indices(const Point2& center_px) {
  std::array<int, kFoveaPixels> idx{};
  for (size_t i = 0; i < kFoveaSide; ++i)
    for (size_t j = 0; j < kFoveaSide; ++j) {
      const double r = std::floor(center_px[0] + static_cast<double>(i) - 3.5);
      const double c = std::floor(center_px[1] + static_cast<double>(j) - 3.5);
      const bool inside = r >= 0 && c >= 0 && r < kImageSide && c < kImageSide;
      idx[i * kFoveaSide + j] = inside ? static_cast<int>(r) * static_cast<int>(kImageSide) + static_cast<int>(c) : -1;
    }
  return idx;
}

struct FoveaSample {
  Vec patch = Vec(kFoveaPixels, 0.0);
  Point2 center{};  // pixel coordinates, before jitter
  Point2 jitter{};  // realized offset in pixels
};

/// 8x8 nearest-pixel samples centred at center + jitter, zero outside.
inline FoveaSample sample_fovea(const Image& stimulus, const Point2& center_px, CounterRng& rng,
                                double jitter_scale) {
  require(jitter_scale >= 0.0 && jitter_scale <= 2.0, ErrorKind::kOutOfRange, "jitter scale must be in [0, 2]");
  require(stimulus.width == kImageSide && stimulus.height == kImageSide, ErrorKind::kDimensionMismatch,
          "stimulus must be 28x28");
  FoveaSample s;
  s.center = center_px;
  if (jitter_scale > 0.0) s.jitter = {jitter_scale * rng.normal(), jitter_scale * rng.normal()};
  const auto idx = fovea_indices({center_px[0] + s.jitter[0], center_px[1] + s.jitter[1]});
  for (size_t k = 0; k < kFoveaPixels; ++k) s.patch[k] = idx[k] < 0 ? 0.0 : stimulus.pixels[static_cast<size_t>(idx[k])];
  return s;
}

// ---------------------------------------------------------------------------
// Predictions and errors.

struct SensoryInput {
  Point2 proprio{};  // sensed displacement of the target from the eye
  Vec extero = Vec(kFoveaPixels, 0.0);
};

/// Entropy-based scale on the exteroceptive precision, in (e^-1, 1].
inline double hypothesis_scale(std::span<const double> v_h) {
  const Vec w = softmax(v_h);
  return std::exp(-entropy(w) / std::log(static_cast<double>(w.size())));
}

/// Decoder outputs at the fovea for every class hypothesis (64 x 10); zero
/// rows for samples outside the image. Keeps the decoder state so gradients
/// can be pulled back.
class FoveaDecoder {
 public:
  explicit FoveaDecoder(const VaeWeights& w) : dec_(w) {}

  void forward(std::span<const double> rho, const Point2& eye_grid) {
    idx_ = fovea_indices(grid_to_pixel(eye_grid));
    rows_.clear();
    slots_.clear();
    for (size_t k = 0; k < kFoveaPixels; ++k)
      if (idx_[k] >= 0) {
        rows_.push_back(idx_[k]);
        slots_.push_back(k);
      }
    out_ = Eigen::MatrixXd::Zero(kFoveaPixels, static_cast<long>(kLatentClasses));
    if (rows_.empty()) return;
    dec_.forward(rho, rows_);
    const Eigen::MatrixXd& o = dec_.outputs();
    for (size_t r = 0; r < slots_.size(); ++r) out_.row(static_cast<long>(slots_[r])) = o.row(static_cast<long>(r));
  }

  const Eigen::MatrixXd& hypotheses() const { return out_; }

  /// d/d rho of sum_k g(k, h) * out(k, h) for g given over all 64 samples.
  Vec pull_back(const Eigen::MatrixXd& grad) const {
    if (rows_.empty()) return Vec(kLatentContinuous, 0.0);
    Eigen::MatrixXd g(static_cast<long>(rows_.size()), grad.cols());
    for (size_t r = 0; r < slots_.size(); ++r) g.row(static_cast<long>(r)) = grad.row(static_cast<long>(slots_[r]));
    return detail::as_vec(dec_.pull_back(g));
  }

 private:
  HypothesisDecoder dec_;
  std::array<int, kFoveaPixels> idx_{};
  std::vector<int> rows_;
  std::vector<size_t> slots_;
  Eigen::MatrixXd out_;
};

struct Prediction {
  Point2 y_p{};
  Vec y_e = Vec(kFoveaPixels, 0.0);
  double precision_scale = 1.0;
};

inline Prediction predict_from(const GenExpectations& mu, const FoveaDecoder& dec) {
  Prediction p;
  p.y_p = {mu.v_o[0] - mu.x_o[0], mu.v_o[1] - mu.x_o[1]};
  const Vec w = softmax(mu.v_h);
  p.y_e = detail::as_vec(dec.hypotheses() * detail::as_eigen(w));
  p.precision_scale = hypothesis_scale(mu.v_h);
  return p;
}

inline Prediction predict(const GenExpectations& mu, const VaeWeights& weights) {
  FoveaDecoder dec(weights);
  dec.forward(mu.rho, mu.x_o);
  return predict_from(mu, dec);
}

/// eps_v = [y; v] - [g; eta] (proprio, extero, target, class, code),
/// eps_x = a - f with f = v_o - x_o, eps_a = a - eta_a with eta_a the sensed
/// displacement.
struct PredictionErrors {
  Point2 proprio{};
  Vec extero = Vec(kFoveaPixels, 0.0);
  Point2 target{};
  Vec classes = Vec(kLatentClasses, 0.0);
  Vec code = Vec(kLatentContinuous, 0.0);
  Point2 state{};
  Point2 action{};

  Vec flatten() const {
    Vec out;
    out.insert(out.end(), proprio.begin(), proprio.end());
    out.insert(out.end(), extero.begin(), extero.end());
    out.insert(out.end(), target.begin(), target.end());
    out.insert(out.end(), classes.begin(), classes.end());
    out.insert(out.end(), code.begin(), code.end());
    out.insert(out.end(), state.begin(), state.end());
    out.insert(out.end(), action.begin(), action.end());
    return out;
  }
};

/// Diagonal of the precision matching PredictionErrors::flatten().
inline Vec precision_diagonal(const PrecisionConfig& pc, double extero_scale) {
  Vec d;
  auto put = [&](size_t n, double v) { d.insert(d.end(), n, v); };
  put(2, pc.pi_p());
  put(kFoveaPixels, pc.pi_e() * extero_scale);
  put(2, pc.pi_p());
  put(kLatentClasses, pc.pi_v());
  put(kLatentContinuous, 1.0);
  put(2, pc.pi_x());
  put(2, pc.pi_a());
  return d;
}

inline PredictionErrors errors_from(const SensoryInput& y, const GenExpectations& mu, const LinkDescend& eta,
                                    const Prediction& p) {
  require(y.extero.size() == kFoveaPixels, ErrorKind::kDimensionMismatch, "fovea input must have 64 samples");
  require(eta.eta_h.size() == kLatentClasses, ErrorKind::kInvalidArgument, "missing class prior");
  require_simplex(eta.eta_h, "class prior");
  PredictionErrors e;
  for (int i = 0; i < 2; ++i) {
    e.proprio[i] = y.proprio[i] - p.y_p[i];
    e.target[i] = mu.v_o[i] - eta.eta_o[i];
    const double f = mu.v_o[i] - mu.x_o[i];
    e.state[i] = mu.a[i] - f;
    e.action[i] = mu.a[i] - y.proprio[i];
  }
  for (size_t k = 0; k < kFoveaPixels; ++k) e.extero[k] = y.extero[k] - p.y_e[k];
  for (size_t h = 0; h < kLatentClasses; ++h) e.classes[h] = mu.v_h[h] - safe_log(eta.eta_h[h], 1e-12);
  e.code = mu.rho;
  return e;
}

inline PredictionErrors prediction_errors(const SensoryInput& y, const GenExpectations& mu, const LinkDescend& eta,
                                          const VaeWeights& weights) {
  return errors_from(y, mu, eta, predict(mu, weights));
}

/// 1/2 eps' Pi eps - 1/2 ln|Pi| for diagonal Pi (constants dropped).
inline double free_energy(std::span<const double> eps, std::span<const double> precision) {
  require(eps.size() == precision.size(), ErrorKind::kDimensionMismatch, "errors and precisions differ in size");
  double f = 0.0;
  for (size_t i = 0; i < eps.size(); ++i) {
    require(precision[i] > 0.0, ErrorKind::kInvalidArgument, "precision must be positive");
    f += 0.5 * precision[i] * eps[i] * eps[i] - 0.5 * std::log(precision[i]);
  }
  return f;
}

/// Free energy of an expectation; the hypothesis scale is taken from `scale`
/// when given (as held fixed by the gradient), otherwise from mu.
inline double energy(const SensoryInput& y, const GenExpectations& mu, const LinkDescend& eta,
                     const PrecisionConfig& pc, const VaeWeights& weights, double scale = -1.0) {
  const Prediction p = predict(mu, weights);
  const double s = scale > 0.0 ? scale : p.precision_scale;
  return free_energy(errors_from(y, mu, eta, p).flatten(), precision_diagonal(pc, s));
}

struct EnergyGradient {
  Point2 x_o{}, v_o{}, a{};
  Vec v_h = Vec(kLatentClasses, 0.0);
  Vec rho = Vec(kLatentContinuous, 0.0);
  double energy = 0.0;
  double scale = 1.0;
  PredictionErrors errors;
  Eigen::MatrixXd hypotheses;  // fovea decode per class at x_o
};

/// dF/dmu at fixed hypothesis scale. Fovea sampling is nearest-pixel, so the
/// exteroceptive prediction is piecewise constant in x_o and contributes no
/// gradient there.
inline EnergyGradient energy_gradient(const SensoryInput& y, const GenExpectations& mu, const LinkDescend& eta,
                                      const PrecisionConfig& pc, FoveaDecoder& dec) {
  dec.forward(mu.rho, mu.x_o);
  const Prediction p = predict_from(mu, dec);
  EnergyGradient g;
  g.scale = p.precision_scale;
  g.errors = errors_from(y, mu, eta, p);
  g.energy = free_energy(g.errors.flatten(), precision_diagonal(pc, g.scale));
  g.hypotheses = dec.hypotheses();
  const PredictionErrors& e = g.errors;
  const double pp = pc.pi_p(), px = pc.pi_x(), pa = pc.pi_a(), pe = pc.pi_e() * g.scale, pv = pc.pi_v();
  for (int i = 0; i < 2; ++i) {
    g.x_o[i] = pp * e.proprio[i] + px * e.state[i];
    g.v_o[i] = -pp * e.proprio[i] + pp * e.target[i] - px * e.state[i];
    g.a[i] = px * e.state[i] + pa * e.action[i];
  }
  // dF/dy_e_hat = -pe * eps_e; y_e_hat = sum_h w_h D_h.
  const Eigen::VectorXd de = -pe * detail::as_eigen(e.extero);
  const Vec w = softmax(mu.v_h);
  const Vec grad_w = detail::as_vec(g.hypotheses.transpose() * de);
  const Vec gl = softmax_pullback(w, grad_w);
  for (size_t h = 0; h < kLatentClasses; ++h) g.v_h[h] = gl[h] + pv * e.classes[h];
  const Eigen::MatrixXd grad_out = de * detail::as_eigen(w).transpose();
  const Vec gr = dec.pull_back(grad_out);
  for (size_t k = 0; k < kLatentContinuous; ++k) g.rho[k] = gr[k] + e.code[k];
  return g;
}

struct ContinuousConfig {
  PrecisionConfig precision;
  size_t steps = 16;
  double duration = 5.0;  // flow time of one saccade, in units of the eye's time constant
  double jitter = 1.0;    // fovea jitter, pixels
  double saccade_ms = 200.0;
  double code_curvature = 4.0;  // curvature bound of the fovea decode in rho (per unit exteroceptive precision)

  double dt() const { return duration / static_cast<double>(steps); }
};

/// One integration step, mu' = mu + dt (D mu - P dF/dmu): the motion term D mu
/// carries the eye-position belief along with the action, and P
/// preconditions each gradient by the local curvature of the quadratic terms
/// (so dt is a fraction of a Newton step). The action is settled at its
/// current optimum (fast reflex arc). The eye then moves by dt * a'.
inline GenExpectations integrate_step(const GenExpectations& mu, const SensoryInput& y, const LinkDescend& eta,
                                      const ContinuousConfig& cfg, FoveaDecoder& dec, double dt,
                                      EnergyGradient* out = nullptr) {
  require(dt > 0.0 && dt <= 1.0, ErrorKind::kInvalidArgument, "dt must be in (0, 1]");
  mu.validate();
  const PrecisionConfig& pc = cfg.precision;
  EnergyGradient g = energy_gradient(y, mu, eta, pc, dec);
  const double pp = pc.pi_p(), px = pc.pi_x(), pa = pc.pi_a(), pv = pc.pi_v();
  const double pe = pc.pi_e() * g.scale;

  // Motion term: the believed eye position moves with the current velocity
  // command (efference copy); every other expectation is static.
  GenExpectations next = mu;
  for (int i = 0; i < 2; ++i) {
    next.x_o[i] += dt * (mu.a[i] - g.x_o[i] / (pp + px));
    next.v_o[i] -= dt * g.v_o[i] / (2.0 * pp + px);
  }
  // Diagonal Gauss-Newton curvature for the class log-weights.
  const Vec w = softmax(mu.v_h);
  Eigen::VectorXd yhat = g.hypotheses * detail::as_eigen(w);
  for (size_t h = 0; h < kLatentClasses; ++h) {
    const double spread = (g.hypotheses.col(static_cast<long>(h)) - yhat).squaredNorm();
    const double curv = pv + pe * w[h] * w[h] * spread;
    next.v_h[h] -= dt * g.v_h[h] / curv;
  }
  const double curv_rho = 1.0 + pe * cfg.code_curvature;
  for (size_t k = 0; k < kLatentContinuous; ++k) next.rho[k] -= dt * g.rho[k] / curv_rho;
  // Action: minimizer of pi_x (a - f)^2 + pi_a (a - y_p)^2 at the new beliefs.
  for (int i = 0; i < 2; ++i) {
    const double f = next.v_o[i] - next.x_o[i];
    next.a[i] = (px * f + pa * y.proprio[i]) / (px + pa);
  }
  auto big = [](std::span<const double> v) {
    for (double x : v)
      if (!std::isfinite(x) || std::abs(x) > 1e6) return true;
    return false;
  };
  require(!(big(next.x_o) || big(next.v_o) || big(next.v_h) || big(next.rho) || big(next.a)), ErrorKind::kDiverged,
          "continuous integration diverged");
  if (out) *out = std::move(g);
  return next;
}

inline GenExpectations integrate_step(const GenExpectations& mu, const SensoryInput& y, const LinkDescend& eta,
                                      const ContinuousConfig& cfg, const VaeWeights& weights, double dt) {
  FoveaDecoder dec(weights);
  return integrate_step(mu, y, eta, cfg, dec, dt);
}

// ---------------------------------------------------------------------------
// One saccade.

struct SaccadeStep {
  GenExpectations mu;       // after the update
  Point2 eye{};             // true eye position (grid units) after moving
  FoveaSample fovea;        // sample that drove the update
  Vec eps_magnitude;        // |eps| per block: proprio, extero, target, classes, code, state, action
  double free_energy = 0.0;
  Vec hypothesis_loglik;    // per-class Gaussian log-likelihood ratio vs the eta mixture
};

struct SaccadeTrace {
  std::vector<SaccadeStep> steps;
  Point2 start{};
  Point2 target{};
  Point2 final_eye() const { return steps.empty() ? start : steps.back().eye; }
};

namespace detail {

inline Vec block_norms(const PredictionErrors& e) {
  auto norm = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  return {norm(e.proprio), norm(e.extero), norm(e.target), norm(e.classes), norm(e.code), norm(e.state),
          norm(e.action)};
}

}  // namespace detail

/// -1/2 pi |y - D_h|^2 + 1/2 pi |y - sum_h eta_h D_h|^2 for every class.
inline Vec hypothesis_loglik(std::span<const double> y, const Eigen::MatrixXd& hypotheses,
                             std::span<const double> eta_h, double pi_e) {
  const Eigen::VectorXd yy = detail::as_eigen(y);
  const Eigen::VectorXd mix = hypotheses * detail::as_eigen(eta_h);
  const double base = 0.5 * pi_e * (yy - mix).squaredNorm();
  Vec out(static_cast<size_t>(hypotheses.cols()));
  for (long h = 0; h < hypotheses.cols(); ++h) out[h] = -0.5 * pi_e * (yy - hypotheses.col(h)).squaredNorm() + base;
  return out;
}

/// Integrates one saccade from `start` towards eta.eta_o, re-sampling the
/// fovea at the moving eye each step.
inline SaccadeTrace run_saccade(const Image& stimulus, const Point2& start, const LinkDescend& eta,
                                const VaeWeights& weights, const ContinuousConfig& cfg, CounterRng& rng,
                                std::span<const double> initial_code = {}) {
  require(cfg.steps > 0, ErrorKind::kInvalidArgument, "need at least one integration step");
  cfg.precision.validate();
  require_simplex(eta.eta_h, "class prior");
  SaccadeTrace trace;
  trace.start = start;
  trace.target = eta.eta_o;
  GenExpectations mu;
  mu.x_o = start;
  mu.v_o = eta.eta_o;
  for (size_t h = 0; h < kLatentClasses; ++h) mu.v_h[h] = safe_log(eta.eta_h[h], 1e-12);
  if (!initial_code.empty()) {
    require(initial_code.size() == kLatentContinuous, ErrorKind::kDimensionMismatch, "code must have 10 entries");
    mu.rho.assign(initial_code.begin(), initial_code.end());
  }
  Point2 eye = start;
  FoveaDecoder dec(weights);
  const double dt = cfg.dt();
  for (size_t k = 0; k < cfg.steps; ++k) {
    SaccadeStep step;
    step.fovea = sample_fovea(stimulus, grid_to_pixel(eye), rng, cfg.jitter);
    SensoryInput y;
    y.proprio = {eta.eta_o[0] - eye[0], eta.eta_o[1] - eye[1]};
    y.extero = step.fovea.patch;
    EnergyGradient g;
    mu = integrate_step(mu, y, eta, cfg, dec, dt, &g);
    step.free_energy = g.energy;
    step.eps_magnitude = detail::block_norms(g.errors);
    step.hypothesis_loglik = hypothesis_loglik(y.extero, g.hypotheses, eta.eta_h, cfg.precision.pi_e());
    for (int i = 0; i < 2; ++i) eye[i] += dt * mu.a[i];
    step.mu = mu;
    step.eye = eye;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

}  // namespace foveate

#endif  // FOVEATE_CONTINUOUS_HPP_
