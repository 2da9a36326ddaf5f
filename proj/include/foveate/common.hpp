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

#ifndef FOVEATE_COMMON_HPP_
#define FOVEATE_COMMON_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace foveate {

using Vec = std::vector<double>;

enum class ErrorKind {
  kInvalidArgument,
  kBadMagic,
  kVersionMismatch,
  kDimensionMismatch,
  kTruncated,
  kCountMismatch,
  kChecksumMismatch,
  kNotNormalized,
  kOutOfRange,
  kDiverged,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kVersionMismatch: return "version mismatch";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kCountMismatch: return "count mismatch";
    case ErrorKind::kChecksumMismatch: return "checksum mismatch";
    case ErrorKind::kNotNormalized: return "not normalized";
    case ErrorKind::kOutOfRange: return "out of range";
    case ErrorKind::kDiverged: return "integration diverged";
    case ErrorKind::kIo: return "i/o error";
  }
  return "unknown";
}

/// Every failure in the library is reported as an Error carrying its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

// ---------------------------------------------------------------------------
// Small numeric helpers on probability vectors.

inline constexpr double kLogFloor = 1e-16;

inline double safe_log(double p, double floor = kLogFloor) { return std::log(std::max(p, floor)); }

inline double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline bool is_simplex(std::span<const double> p, double tol = 1e-10) {
  if (p.empty()) return false;
  for (double x : p)
    if (!(x >= -tol) || !std::isfinite(x)) return false;
  return std::abs(sum(p) - 1.0) <= tol;
}

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// softmax with -inf entries mapped to exactly zero probability.
inline Vec softmax(std::span<const double> v) {
  Vec out(v.size(), 0.0);
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  require(std::isfinite(m), ErrorKind::kInvalidArgument, "softmax needs at least one finite entry");
  double s = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    s += out[i];
  }
  for (double& x : out) x /= s;
  return out;
}

inline void normalize(Vec& p) {
  const double s = sum(p);
  require(s > 0.0 && std::isfinite(s), ErrorKind::kNotNormalized, "cannot normalize a zero vector");
  for (double& x : p) x /= s;
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

/// KL(p || q) in nats; q is floored so the result stays finite.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double d = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) d += p[i] * (std::log(p[i]) - safe_log(q[i]));
  return d;
}

inline size_t argmax(std::span<const double> v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // lowest index wins ties
  return best;
}

// ---------------------------------------------------------------------------
// Counter-based random stream.
//
// Draw k of a stream with key K is splitmix64(K + k * 0x9E3779B97F4A7C15).
// Uniforms take the top 53 bits and are centred in their bin, so they lie in
// the open interval (0, 1). Gumbel draws are -ln(-ln u); Gaussian draws use
// Box-Muller on two consecutive uniforms (cosine branch only). Streams for
// independent purposes are keyed by hashing (seed, ids...) together.

inline constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  using result_type = uint64_t;

  explicit CounterRng(uint64_t key = 0) : key_(key) {}

  /// Key for a sub-stream, e.g. derive(seed, trial_id, purpose).
  template <typename... Ids>
  static CounterRng derive(uint64_t seed, Ids... ids) {
    uint64_t key = splitmix64(seed);
    ((key = splitmix64(key ^ static_cast<uint64_t>(ids))), ...);
    return CounterRng(key);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + counter_++ * 0x9E3779B97F4A7C15ULL); }

  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double gumbel() { return -std::log(-std::log(uniform())); }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace foveate

#endif  // FOVEATE_COMMON_HPP_
