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

#include <random>

#include "foveate/vision.hpp"
#include "test_support.hpp"

namespace foveate {
namespace {

using testing::kind_of;
using testing::relu_pattern;
using testing::weights;

Vec random_vec(CounterRng& rng, size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

Vec onehot(size_t h, size_t n = kLatentClasses) {
  Vec v(n, 0.0);
  v[h] = 1.0;
  return v;
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

TEST(Weights, FixtureLoads) {
  const VaeWeights& w = weights();
  EXPECT_EQ(w.encoder.front().in_dim(), kImagePixels);
  EXPECT_EQ(w.decoder.back().out_dim(), kImagePixels);
  EXPECT_EQ(w.code_dim(), 20u);
  EXPECT_EQ(w.decoder.back().activation, Activation::kSigmoid);
}

TEST(Weights, RejectsCorruptFiles) {
  const std::string bytes = detail::read_file(fixture_path("vae.vaew"));
  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  EXPECT_EQ(kind_of([&] { parse_weights(bad); }), ErrorKind::kBadMagic);
  bad = bytes;
  bad[bytes.size() / 2] ^= 0x40;
  EXPECT_EQ(kind_of([&] { parse_weights(bad); }), ErrorKind::kChecksumMismatch);
  EXPECT_EQ(kind_of([&] { parse_weights(bytes.substr(0, bytes.size() - 100)); }), ErrorKind::kTruncated);
  bad = bytes;
  bad[4] = 7;
  EXPECT_EQ(kind_of([&] { parse_weights(bad); }), ErrorKind::kVersionMismatch);
}

TEST(Weights, RejectsBrokenDimensionChain) {
  VaeWeights w = weights();
  w.decoder[1].weight = Eigen::MatrixXd::Zero(w.decoder[1].out_dim(), 3);
  EXPECT_EQ(kind_of([&] { w.validate(); }), ErrorKind::kDimensionMismatch);
}

TEST(Weights, RoundTripsBitExactly) {
  const std::string bytes = detail::read_file(fixture_path("vae.vaew"));
  EXPECT_EQ(serialize_weights(parse_weights(bytes)), bytes);
  const auto dir = testing::scratch_dir("weights");
  save_weights((dir / "w.vaew").string(), weights());
  EXPECT_EQ(load_weights((dir / "w.vaew").string()), weights());
}

TEST(Weights, DecoderMatchesTrainerParityGolden) {
  const auto cases = parse_parity(detail::read_file(fixture_path("vae_parity.bin")));
  ASSERT_FALSE(cases.empty());
  bool has_zero = false;
  for (const auto& c : cases) has_zero |= std::all_of(c.code.begin(), c.code.end(), [](double v) { return v == 0.0; });
  EXPECT_TRUE(has_zero);
  EXPECT_LE(parity_error(weights(), cases), 1e-5);
}

TEST(Encode, ShapesAndSimplex) {
  const Dataset& d = testing::test_split();
  const Encoding e = encode(weights(), d.image(0).pixels);
  EXPECT_EQ(e.mu.size(), 10u);
  EXPECT_EQ(e.logvar.size(), 10u);
  EXPECT_EQ(e.logits.size(), 10u);
  EXPECT_TRUE(all_finite(e.logvar));
  EXPECT_TRUE(is_simplex(softmax(e.logits)));
  const Encoding again = encode(weights(), d.image(0).pixels);
  EXPECT_EQ(e.mu, again.mu);
  EXPECT_EQ(e.logits, again.logits);
  EXPECT_EQ(kind_of([] { encode(weights(), Vec(10)); }), ErrorKind::kDimensionMismatch);
}

TEST(Encode, HeldOutClassAccuracy) {
  const Dataset& d = testing::test_split();
  ASSERT_EQ(d.size(), 1000u);
  size_t hits = 0;
  for (size_t i = 0; i < d.size(); ++i) hits += argmax(encode(weights(), d.image(i).pixels).logits) == d.labels[i];
  EXPECT_GE(hits, 800u);
}

TEST(DecodeMixture, OneHotIsTheSingleDecode) {
  CounterRng rng(3);
  const Vec zc = random_vec(rng, 10);
  for (size_t h = 0; h < kLatentClasses; ++h) {
    const Vec mix = decode_mixture(weights(), zc, onehot(h));
    const Vec single = decode(weights(), concat(zc, onehot(h)));
    for (size_t p = 0; p < kImagePixels; ++p) EXPECT_NEAR(mix[p], single[p], 1e-12);
  }
}

TEST(DecodeMixture, UniformIsThePixelwiseMeanAndBlurrier) {
  CounterRng rng(4);
  const Vec zc = random_vec(rng, 10);
  const Vec mix = decode_mixture(weights(), zc, Vec(10, 0.1));
  Vec mean(kImagePixels, 0.0);
  double spread = 0.0;
  std::vector<Vec> each;
  for (size_t h = 0; h < 10; ++h) {
    each.push_back(decode(weights(), concat(zc, onehot(h))));
    for (size_t p = 0; p < kImagePixels; ++p) mean[p] += each.back()[p] / 10.0;
  }
  for (size_t p = 0; p < kImagePixels; ++p) {
    EXPECT_NEAR(mix[p], mean[p], 1e-12);
    EXPECT_GE(mix[p], 0.0);
    EXPECT_LE(mix[p], 1.0);
    for (const Vec& e : each) spread += (e[p] - mean[p]) * (e[p] - mean[p]);
  }
  EXPECT_GT(spread, 0.0);
}

TEST(DecodeMixture, AffineInClassWeights) {
  CounterRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec zc = random_vec(rng, 10);
    const Vec w1 = softmax(random_vec(rng, 10, 2.0)), w2 = softmax(random_vec(rng, 10, 2.0));
    Vec mid(10);
    for (size_t i = 0; i < 10; ++i) mid[i] = 0.5 * (w1[i] + w2[i]);
    const Vec a = decode_mixture(weights(), zc, w1), b = decode_mixture(weights(), zc, w2);
    const Vec m = decode_mixture(weights(), zc, mid);
    for (size_t p = 0; p < kImagePixels; ++p) EXPECT_NEAR(m[p], 0.5 * (a[p] + b[p]), 1e-12);
  }
}

TEST(DecodeMixture, RejectsNonSimplexWeights) {
  EXPECT_EQ(kind_of([] { decode_mixture(weights(), Vec(10), Vec(10, 0.2)); }), ErrorKind::kNotNormalized);
}

TEST(DecoderGrad, ZeroResidualGivesZeroGradient) {
  CounterRng rng(6);
  const auto g = decoder_grad(weights(), random_vec(rng, 10), Vec(10, 0.1), Vec(kImagePixels, 0.0));
  for (double v : g.z_c) EXPECT_EQ(v, 0.0);
  for (double v : g.logits) EXPECT_EQ(v, 0.0);
}

TEST(DecoderGrad, LinearDecoderClosedForm) {
  CounterRng rng(7);
  VaeWeights w;
  DenseLayer l;
  l.weight = Eigen::MatrixXd(kImagePixels, 20);
  for (long i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.normal();
  l.bias = Eigen::VectorXd::Zero(kImagePixels);
  w.decoder = {l};
  const Vec r = random_vec(rng, kImagePixels);
  const auto g = decoder_grad(w, random_vec(rng, 10), softmax(random_vec(rng, 10)), r);
  const Eigen::VectorXd expect = l.weight.leftCols(10).transpose() * detail::as_eigen(r);
  for (size_t i = 0; i < 10; ++i) EXPECT_NEAR(g.z_c[i], expect[static_cast<long>(i)], 1e-9);
}

// Central differences at h = 1e-4 on 100 random (z_c, logits, residual).
// Points whose stencil crosses a ReLU kink are redrawn: there the function
// is not differentiable and the difference quotient is not an oracle.
TEST(DecoderGrad, MatchesFiniteDifferences) {
  CounterRng rng(8);
  const double h = 1e-4;
  double worst = 0.0;
  size_t redrawn = 0;
  for (int point = 0; point < 100; ++point) {
    const Vec zc = random_vec(rng, 10), logits = random_vec(rng, 10), r = random_vec(rng, kImagePixels);
    const auto pattern = relu_pattern(weights(), zc);
    bool smooth = true;
    for (size_t i = 0; i < 10 && smooth; ++i)
      for (double sign : {-1.0, 1.0}) {
        Vec z = zc;
        z[i] += sign * h;
        smooth = smooth && relu_pattern(weights(), z) == pattern;
      }
    if (!smooth) {
      ++redrawn, --point;
      continue;
    }
    const auto g = decoder_grad(weights(), zc, softmax(logits), r);
    const auto f = [&](const Vec& z, const Vec& lg) {
      const Vec y = decode_mixture(weights(), z, softmax(lg));
      double s = 0.0;
      for (size_t p = 0; p < kImagePixels; ++p) s += y[p] * r[p];
      return s;
    };
    Vec fd_z(10), fd_l(10);
    for (size_t i = 0; i < 10; ++i) {
      Vec zp = zc, zm = zc, lp = logits, lm = logits;
      zp[i] += h, zm[i] -= h, lp[i] += h, lm[i] -= h;
      fd_z[i] = (f(zp, logits) - f(zm, logits)) / (2 * h);
      fd_l[i] = (f(zc, lp) - f(zc, lm)) / (2 * h);
    }
    const auto rel = [](const Vec& a, const Vec& b) {
      double num = 0.0, den = 0.0;
      for (size_t i = 0; i < a.size(); ++i) num += (a[i] - b[i]) * (a[i] - b[i]), den += b[i] * b[i];
      return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
    };
    worst = std::max({worst, rel(g.z_c, fd_z), rel(g.logits, fd_l)});
  }
  EXPECT_LE(worst, 1e-4);
  EXPECT_LT(redrawn, 100u);
}

TEST(Gumbel, Limits) {
  const Vec logits = {0.3, -1.0, 2.0, 0.5}, noise = {1.0, 0.2, -0.4, 0.1};
  const Vec cold = gumbel_softmax(logits, noise, 1e-3);
  EXPECT_NEAR(cold[2], 1.0, 1e-9);  // argmax of logits + noise
  const Vec flat = gumbel_softmax(Vec(5, 0.0), Vec(5, 0.0), 0.7);
  for (double v : flat) EXPECT_NEAR(v, 0.2, 1e-15);
  EXPECT_EQ(kind_of([&] { gumbel_softmax(logits, noise, 0.0); }), ErrorKind::kInvalidArgument);
}

TEST(Gumbel, AlwaysASimplex) {
  CounterRng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const Vec logits = random_vec(rng, 10, 5.0);
    EXPECT_TRUE(is_simplex(gumbel_softmax(logits, 0.1 + rng.uniform(), rng), 1e-10));
  }
}

// Sample mean against an independent estimate drawn with the standard
// library's Gumbel (extreme value) distribution.
TEST(Gumbel, MonteCarloMean) {
  const Vec logits = {1.0, 0.0, -0.5, 0.25};
  CounterRng rng(10);
  std::mt19937_64 ref_rng(10);
  std::extreme_value_distribution<double> gumbel(0.0, 1.0);
  Vec mean(4, 0.0), ref(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vec s = gumbel_softmax(logits, 1.0, rng);
    Vec noise(4);
    for (double& g : noise) g = gumbel(ref_rng);
    const Vec t = gumbel_softmax(logits, noise, 1.0);
    for (size_t k = 0; k < 4; ++k) mean[k] += s[k] / n, ref[k] += t[k] / n;
  }
  for (size_t k = 0; k < 4; ++k) EXPECT_NEAR(mean[k], ref[k], 0.01);
}

TEST(Elbo, KlClosedForms) {
  EXPECT_DOUBLE_EQ(gaussian_kl(Vec(10, 0.0), Vec(10, 0.0)), 0.0);
  Vec mu(10, 0.0);
  mu[0] = 1.0;
  EXPECT_DOUBLE_EQ(gaussian_kl(mu, Vec(10, 0.0)), 0.5);
  EXPECT_NEAR(categorical_kl(Vec(10, 0.3)), 0.0, 1e-15);
}

TEST(Elbo, LossCombinesTerms) {
  CounterRng rng(11);
  const ElboTerms t = elbo_terms(testing::test_split().image(0).pixels, weights(), rng, {1.0, 0.5}, {30.0, 30.0});
  EXPECT_LT(t.recon_loglik, 0.0);
  EXPECT_NEAR(t.loss, -t.recon_loglik + 30.0 * std::abs(t.kl_c - 1.0) + 30.0 * std::abs(t.kl_d - 0.5), 1e-9);
}

}  // namespace
}  // namespace foveate
