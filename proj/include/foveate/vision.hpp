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

// Inference side of the joint continuous/categorical autoencoder: weight
// file I/O, the recognition (encoder) network, the generative (decoder)
// network, hypothesis-weighted decoding and its exact gradients.

#ifndef FOVEATE_VISION_HPP_
#define FOVEATE_VISION_HPP_

#include <zlib.h>

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "foveate/common.hpp"
#include "foveate/image.hpp"
#include "foveate/priority.hpp"

namespace foveate {

enum class Activation : uint8_t { kIdentity = 0, kRelu = 1, kSigmoid = 2 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::kIdentity;

  size_t in_dim() const { return static_cast<size_t>(weight.cols()); }
  size_t out_dim() const { return static_cast<size_t>(weight.rows()); }
};

inline constexpr size_t kLatentContinuous = 10;
inline constexpr size_t kLatentClasses = 10;

/// Encoder maps 784 -> (mu, logvar, logits); decoder maps z_c (+) z_d -> 784.
struct VaeWeights {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  size_t n_c = kLatentContinuous;
  size_t n_d = kLatentClasses;

  size_t code_dim() const { return n_c + n_d; }

  void validate() const {
    require(!encoder.empty() && !decoder.empty(), ErrorKind::kDimensionMismatch, "empty encoder or decoder");
    auto chain = [](const std::vector<DenseLayer>& layers, const char* name) {
      for (size_t i = 0; i < layers.size(); ++i) {
        require(layers[i].bias.size() == static_cast<long>(layers[i].out_dim()), ErrorKind::kDimensionMismatch,
                std::string(name) + " bias size");
        if (i > 0)
          require(layers[i].in_dim() == layers[i - 1].out_dim(), ErrorKind::kDimensionMismatch,
                  std::string(name) + " layer dims do not chain at layer " + std::to_string(i));
      }
    };
    chain(encoder, "encoder");
    chain(decoder, "decoder");
    require(encoder.front().in_dim() == kImagePixels, ErrorKind::kDimensionMismatch, "encoder input must be 784");
    require(encoder.back().out_dim() == 2 * n_c + n_d, ErrorKind::kDimensionMismatch, "encoder head must be 30");
    require(decoder.front().in_dim() == code_dim(), ErrorKind::kDimensionMismatch, "decoder input must be n_c + n_d");
    require(decoder.back().out_dim() == kImagePixels, ErrorKind::kDimensionMismatch, "decoder output must be 784");
    require(decoder.back().activation == Activation::kSigmoid, ErrorKind::kDimensionMismatch,
            "final decoder activation must be sigmoid");
  }

  bool operator==(const VaeWeights& o) const {
    auto same = [](const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b) {
      if (a.size() != b.size()) return false;
      for (size_t i = 0; i < a.size(); ++i)
        if (a[i].activation != b[i].activation || a[i].weight != b[i].weight || a[i].bias != b[i].bias) return false;
      return true;
    };
    return n_c == o.n_c && n_d == o.n_d && same(encoder, o.encoder) && same(decoder, o.decoder);
  }
};

// ---------------------------------------------------------------------------
// VAEW file: "VAEW", u32 version=1, u32 layer count, then per layer u32 in,
// u32 out, u8 activation, f32 weights (out x in, row-major), f32 biases;
// trailing u32 CRC32 (zlib polynomial) of every preceding byte. Encoder
// layers come first; the decoder starts at the first layer after the
// encoder head whose input is n_c + n_d wide.

inline constexpr uint32_t kWeightsVersion = 1;

namespace detail {

inline uint32_t crc32_of(const char* data, size_t n) {
  return static_cast<uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

inline void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline double get_f32(const std::string& in, size_t& pos) {
  const uint32_t bits = get_u32(in, pos);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

inline std::string serialize_weights(const VaeWeights& w) {
  std::string out = "VAEW";
  detail::put_u32(out, kWeightsVersion);
  detail::put_u32(out, static_cast<uint32_t>(w.encoder.size() + w.decoder.size()));
  auto put_layer = [&](const DenseLayer& l) {
    detail::put_u32(out, static_cast<uint32_t>(l.in_dim()));
    detail::put_u32(out, static_cast<uint32_t>(l.out_dim()));
    out.push_back(static_cast<char>(l.activation));
    for (long r = 0; r < l.weight.rows(); ++r)
      for (long c = 0; c < l.weight.cols(); ++c) detail::put_f32(out, l.weight(r, c));
    for (long r = 0; r < l.bias.size(); ++r) detail::put_f32(out, l.bias(r));
  };
  for (const auto& l : w.encoder) put_layer(l);
  for (const auto& l : w.decoder) put_layer(l);
  detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

inline VaeWeights parse_weights(const std::string& bytes) {
  require(bytes.size() >= 4 && bytes.compare(0, 4, "VAEW") == 0, ErrorKind::kBadMagic, "weight magic is not VAEW");
  size_t pos = 4;
  require(detail::get_u32(bytes, pos) == kWeightsVersion, ErrorKind::kVersionMismatch, "unsupported weight version");
  const uint32_t count = detail::get_u32(bytes, pos);
  std::vector<DenseLayer> layers;
  for (uint32_t i = 0; i < count; ++i) {
    DenseLayer l;
    const uint32_t in = detail::get_u32(bytes, pos);
    const uint32_t out = detail::get_u32(bytes, pos);
    require(pos < bytes.size(), ErrorKind::kTruncated, "layer header truncated");
    const auto tag = static_cast<uint8_t>(bytes[pos++]);
    require(tag <= 2, ErrorKind::kDimensionMismatch, "unknown activation tag");
    require(bytes.size() >= pos + 4ull * (static_cast<size_t>(in) * out + out), ErrorKind::kTruncated,
            "layer payload truncated");
    l.activation = static_cast<Activation>(tag);
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (uint32_t r = 0; r < out; ++r)
      for (uint32_t c = 0; c < in; ++c) l.weight(r, c) = detail::get_f32(bytes, pos);
    for (uint32_t r = 0; r < out; ++r) l.bias(r) = detail::get_f32(bytes, pos);
    layers.push_back(std::move(l));
  }
  require(bytes.size() >= pos + 4, ErrorKind::kTruncated, "missing CRC32");
  const uint32_t expected = detail::crc32_of(bytes.data(), pos);
  require(detail::get_u32(bytes, pos) == expected, ErrorKind::kChecksumMismatch, "weight file CRC32 mismatch");
  require(pos == bytes.size(), ErrorKind::kDimensionMismatch, "trailing bytes after CRC32");

  VaeWeights w;
  size_t split = 0;
  while (split < layers.size() && layers[split].out_dim() != 2 * w.n_c + w.n_d) ++split;
  require(split < layers.size(), ErrorKind::kDimensionMismatch, "no encoder head of width 2*n_c + n_d");
  w.encoder.assign(layers.begin(), layers.begin() + static_cast<long>(split + 1));
  w.decoder.assign(layers.begin() + static_cast<long>(split + 1), layers.end());
  w.validate();
  return w;
}

inline VaeWeights load_weights(const std::string& path) { return parse_weights(detail::read_file(path)); }

inline void save_weights(const std::string& path, const VaeWeights& w) {
  detail::write_file(path, serialize_weights(w));
}

// ---------------------------------------------------------------------------
// Forward passes.

namespace detail {

template <typename Derived>
inline void activate(Eigen::MatrixBase<Derived>& x, Activation a) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kRelu: x = x.cwiseMax(0.0); break;
    case Activation::kSigmoid: x = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); break;
  }
}

/// d(activation)/d(pre-activation) expressed through the activation output.
inline Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& out, Activation a) {
  switch (a) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(out.rows(), out.cols());
    case Activation::kRelu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::kSigmoid: return (out.array() * (1.0 - out.array())).matrix();
  }
  return {};
}

inline Eigen::VectorXd as_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

inline Vec as_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

}  // namespace detail

struct Encoding {
  Vec mu;
  Vec logvar;
  Vec logits;
};

inline Encoding encode(const VaeWeights& w, std::span<const double> image) {
  require(image.size() == kImagePixels, ErrorKind::kDimensionMismatch, "encode expects 784 pixels");
  Eigen::VectorXd x = detail::as_eigen(image);
  for (const auto& l : w.encoder) {
    x = l.weight * x + l.bias;
    detail::activate(x, l.activation);
  }
  Encoding e;
  e.mu.assign(x.data(), x.data() + w.n_c);
  e.logvar.assign(x.data() + w.n_c, x.data() + 2 * w.n_c);
  e.logits.assign(x.data() + 2 * w.n_c, x.data() + 2 * w.n_c + w.n_d);
  return e;
}

/// Decoder output for one code z = z_c (+) z_d.
inline Vec decode(const VaeWeights& w, std::span<const double> code) {
  require(code.size() == w.code_dim(), ErrorKind::kDimensionMismatch, "decode expects n_c + n_d inputs");
  Eigen::VectorXd x = detail::as_eigen(code);
  for (const auto& l : w.decoder) {
    x = l.weight * x + l.bias;
    detail::activate(x, l.activation);
  }
  return detail::as_vec(x);
}

/// Runs the decoder for every class hypothesis at once (column h is
/// z_c (+) onehot(h)), optionally restricted to a subset of output pixels.
/// Keeps activations so gradients can be pulled back without recomputation.
class HypothesisDecoder {
 public:
  explicit HypothesisDecoder(const VaeWeights& w) : w_(&w) {}

  /// rows: output pixel indices to evaluate; empty means all 784.
  void forward(std::span<const double> z_c, std::span<const int> rows = {}) {
    require(z_c.size() == w_->n_c, ErrorKind::kDimensionMismatch, "z_c must have n_c entries");
    rows_.assign(rows.begin(), rows.end());
    const auto& layers = w_->decoder;
    acts_.resize(layers.size());
    const long n_d = static_cast<long>(w_->n_d);
    {
      const DenseLayer& l0 = layers.front();
      Eigen::VectorXd base = l0.weight.leftCols(static_cast<long>(w_->n_c)) * detail::as_eigen(z_c) + l0.bias;
      Eigen::MatrixXd pre = l0.weight.rightCols(n_d);
      pre.colwise() += base;
      acts_[0] = std::move(pre);
    }
    if (layers.size() == 1) {
      if (!rows_.empty()) acts_[0] = select_rows(acts_[0]);
    }
    detail::activate(acts_[0], layers[0].activation);
    for (size_t i = 1; i < layers.size(); ++i) {
      const DenseLayer& l = layers[i];
      const bool last = i + 1 == layers.size();
      if (last && !rows_.empty()) {
        Eigen::MatrixXd wsel(static_cast<long>(rows_.size()), l.weight.cols());
        Eigen::VectorXd bsel(static_cast<long>(rows_.size()));
        for (size_t r = 0; r < rows_.size(); ++r) {
          wsel.row(static_cast<long>(r)) = l.weight.row(rows_[r]);
          bsel(static_cast<long>(r)) = l.bias(rows_[r]);
        }
        acts_[i] = wsel * acts_[i - 1];
        acts_[i].colwise() += bsel;
      } else {
        acts_[i] = l.weight * acts_[i - 1];
        acts_[i].colwise() += l.bias;
      }
      detail::activate(acts_[i], l.activation);
    }
  }

  /// Column h: decoded pixels (restricted rows) for hypothesis h.
  const Eigen::MatrixXd& outputs() const { return acts_.back(); }

  /// Given dL/d(output) per hypothesis (rows x n_d), returns dL/dz_c summed
  /// over hypotheses.
  Eigen::VectorXd pull_back(const Eigen::MatrixXd& grad_out) const {
    const auto& layers = w_->decoder;
    Eigen::MatrixXd g = grad_out.cwiseProduct(detail::activation_slope(acts_.back(), layers.back().activation));
    for (size_t i = layers.size() - 1; i > 0; --i) {
      const bool last = i + 1 == layers.size();
      Eigen::MatrixXd up;
      if (last && !rows_.empty()) {
        up = Eigen::MatrixXd::Zero(layers[i].weight.cols(), g.cols());
        for (size_t r = 0; r < rows_.size(); ++r)
          up.noalias() += layers[i].weight.row(rows_[r]).transpose() * g.row(static_cast<long>(r));
      } else {
        up.noalias() = layers[i].weight.transpose() * g;
      }
      g = up.cwiseProduct(detail::activation_slope(acts_[i - 1], layers[i - 1].activation));
    }
    const Eigen::MatrixXd gz = layers.front().weight.leftCols(static_cast<long>(w_->n_c)).transpose() * g;
    return gz.rowwise().sum();
  }

 private:
  Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m) const {
    Eigen::MatrixXd out(static_cast<long>(rows_.size()), m.cols());
    for (size_t r = 0; r < rows_.size(); ++r) out.row(static_cast<long>(r)) = m.row(rows_[r]);
    return out;
  }

  const VaeWeights* w_;
  std::vector<int> rows_;
  std::vector<Eigen::MatrixXd> acts_;
};

inline void require_simplex(std::span<const double> p, const char* what) {
  require(is_simplex(p, 1e-10), ErrorKind::kNotNormalized, std::string(what) + " is not a simplex");
}

/// Sum over hypotheses h of class_weights[h] * decoder(z_c (+) onehot(h)).
inline Vec decode_mixture(const VaeWeights& w, std::span<const double> z_c, std::span<const double> class_weights) {
  require(class_weights.size() == w.n_d, ErrorKind::kDimensionMismatch, "class weights must have n_d entries");
  require_simplex(class_weights, "class weights");
  HypothesisDecoder dec(w);
  dec.forward(z_c);
  return detail::as_vec(dec.outputs() * detail::as_eigen(class_weights));
}

struct DecoderGrad {
  Vec z_c;     // d<mixture, residual>/dz_c
  Vec logits;  // d<mixture, residual>/d(logits whose softmax are the class weights)
};

/// Softmax Jacobian applied to a gradient with respect to the weights.
inline Vec softmax_pullback(std::span<const double> weights, std::span<const double> grad_w) {
  double mean = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) mean += weights[i] * grad_w[i];
  Vec out(weights.size());
  for (size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] * (grad_w[i] - mean);
  return out;
}

/// Exact reverse-mode gradient of <decode_mixture(z_c, w), residual>.
inline DecoderGrad decoder_grad(const VaeWeights& w, std::span<const double> z_c, std::span<const double> class_weights,
                                std::span<const double> residual) {
  require(residual.size() == kImagePixels, ErrorKind::kDimensionMismatch, "residual must have 784 entries");
  require(class_weights.size() == w.n_d, ErrorKind::kDimensionMismatch, "class weights must have n_d entries");
  HypothesisDecoder dec(w);
  dec.forward(z_c);
  const Eigen::VectorXd r = detail::as_eigen(residual);
  const Eigen::VectorXd cw = detail::as_eigen(class_weights);
  const Eigen::MatrixXd grad_out = r * cw.transpose();
  DecoderGrad g;
  g.z_c = detail::as_vec(dec.pull_back(grad_out));
  const Vec grad_w = detail::as_vec(dec.outputs().transpose() * r);
  g.logits = softmax_pullback(class_weights, grad_w);
  return g;
}

// ---------------------------------------------------------------------------
// Relaxed categorical sampling and the capacity-regularised objective.

/// softmax((logits + noise) / temperature) for explicit Gumbel noise.
inline Vec gumbel_softmax(std::span<const double> logits, std::span<const double> noise, double temperature) {
  require(temperature > 0.0, ErrorKind::kInvalidArgument, "temperature must be positive");
  require(noise.size() == logits.size(), ErrorKind::kDimensionMismatch, "noise and logits differ in size");
  Vec z(logits.size());
  for (size_t i = 0; i < z.size(); ++i) z[i] = (logits[i] + noise[i]) / temperature;
  return softmax(z);
}

inline Vec gumbel_softmax(std::span<const double> logits, double temperature, CounterRng& rng) {
  require(temperature > 0.0, ErrorKind::kInvalidArgument, "temperature must be positive");
  Vec noise(logits.size());
  for (double& g : noise) g = rng.gumbel();
  return gumbel_softmax(logits, noise, temperature);
}

/// KL(N(mu, exp(logvar)) || N(0, I)).
inline double gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  double kl = 0.0;
  for (size_t i = 0; i < mu.size(); ++i) kl += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
  return kl;
}

/// KL(softmax(logits) || uniform).
inline double categorical_kl(std::span<const double> logits) {
  const Vec q = softmax(logits);
  return std::log(static_cast<double>(q.size())) - entropy(q);
}

struct ElboTerms {
  double recon_loglik = 0.0;
  double kl_c = 0.0;
  double kl_d = 0.0;
  double loss = 0.0;
};

struct Capacity {
  double k_c = 0.0;
  double k_d = 0.0;
};

struct Gains {
  double r_c = 30.0;
  double r_d = 30.0;
};

/// One-sample estimate of the capacity-regularised objective for an image.
inline ElboTerms elbo_terms(std::span<const double> image, const VaeWeights& w, CounterRng& rng, Capacity caps,
                            Gains gains, double temperature = 0.5) {
  const Encoding e = encode(w, image);
  Vec code(w.code_dim());
  for (size_t i = 0; i < w.n_c; ++i) code[i] = e.mu[i] + std::exp(0.5 * e.logvar[i]) * rng.normal();
  const Vec z_d = gumbel_softmax(e.logits, temperature, rng);
  std::copy(z_d.begin(), z_d.end(), code.begin() + static_cast<long>(w.n_c));
  const Vec recon = decode(w, code);
  ElboTerms t;
  for (size_t p = 0; p < kImagePixels; ++p)
    t.recon_loglik += image[p] * safe_log(recon[p], 1e-12) + (1.0 - image[p]) * safe_log(1.0 - recon[p], 1e-12);
  t.kl_c = gaussian_kl(e.mu, e.logvar);
  t.kl_d = categorical_kl(e.logits);
  t.loss = -t.recon_loglik + gains.r_c * std::abs(t.kl_c - caps.k_c) + gains.r_d * std::abs(t.kl_d - caps.k_d);
  return t;
}

// Parity golden: u32 count, code_dim, pixels; then per case the f32 code
// followed by the f32 decoder output.
struct ParityCase {
  Vec code;
  Vec output;
};

inline std::vector<ParityCase> parse_parity(const std::string& bytes) {
  size_t pos = 0;
  const auto u32 = [&] {
    require(pos + 4 <= bytes.size(), ErrorKind::kTruncated, "parity header");
    uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  };
  const uint32_t n = u32(), dim = u32(), pixels = u32();
  std::vector<ParityCase> out(n);
  for (auto& c : out) {
    c.code.resize(dim);
    c.output.resize(pixels);
    for (double& v : c.code) v = detail::get_f32(bytes, pos);
    for (double& v : c.output) v = detail::get_f32(bytes, pos);
  }
  return out;
}

/// Largest absolute difference between our decoder and the golden outputs.
inline double parity_error(const VaeWeights& w, const std::vector<ParityCase>& cases) {
  double worst = 0.0;
  for (const auto& c : cases) {
    const Vec y = decode(w, c.code);
    require(y.size() == c.output.size(), ErrorKind::kDimensionMismatch, "parity output size");
    for (size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - c.output[i]));
  }
  return worst;
}

}  // namespace foveate

#endif  // FOVEATE_VISION_HPP_
