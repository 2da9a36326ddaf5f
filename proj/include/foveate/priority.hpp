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

// Class-contingent priority maps: per-pixel saliency channels, pooled onto
// the 7x7 fixation grid and quantized into feature levels 1..5.

#ifndef FOVEATE_PRIORITY_HPP_
#define FOVEATE_PRIORITY_HPP_

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "foveate/common.hpp"
#include "foveate/image.hpp"

namespace foveate {

inline constexpr size_t kFeatureLevels = 5;
inline constexpr size_t kKernelRadius = 3;  // 7x7 kernels

enum Channel : size_t { kContrast = 0, kOrientation = 1, kChannelCount = 2 };

using SaliencyMap = Image;
using Kernel = std::array<double, (2 * kKernelRadius + 1) * (2 * kKernelRadius + 1)>;

namespace detail {

inline constexpr size_t kKernelSide = 2 * kKernelRadius + 1;

inline Kernel gaussian_kernel(double sigma) {
  Kernel k{};
  double s = 0.0;
  for (size_t i = 0; i < kKernelSide; ++i)
    for (size_t j = 0; j < kKernelSide; ++j) {
      const double y = static_cast<double>(i) - kKernelRadius;
      const double x = static_cast<double>(j) - kKernelRadius;
      k[i * kKernelSide + j] = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      s += k[i * kKernelSide + j];
    }
  for (double& v : k) v /= s;
  return k;
}

/// Second derivative of a Gaussian along direction theta, made zero-mean.
inline Kernel oriented_kernel(double theta, double sigma) {
  Kernel k{};
  const double c = std::cos(theta), s = std::sin(theta);
  for (size_t i = 0; i < kKernelSide; ++i)
    for (size_t j = 0; j < kKernelSide; ++j) {
      const double y = static_cast<double>(i) - kKernelRadius;
      const double x = static_cast<double>(j) - kKernelRadius;
      const double u = x * c + y * s;
      const double g = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[i * kKernelSide + j] = g * (u * u / std::pow(sigma, 4) - 1.0 / (sigma * sigma));
    }
  double mean = 0.0;
  for (double v : k) mean += v;
  mean /= static_cast<double>(k.size());
  for (double& v : k) v -= mean;
  return k;
}

/// Correlation with edge-replicated borders, so constant images give zero response.
inline Image convolve(const Image& img, const Kernel& k) {
  Image out(img.width, img.height);
  for (size_t r = 0; r < img.height; ++r)
    for (size_t c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (size_t i = 0; i < kKernelSide; ++i)
        for (size_t j = 0; j < kKernelSide; ++j)
          acc += k[i * kKernelSide + j] *
                 img.clamped(static_cast<long>(r + i) - static_cast<long>(kKernelRadius),
                             static_cast<long>(c + j) - static_cast<long>(kKernelRadius));
      out.at(r, c) = acc;
    }
  return out;
}

inline void max_normalize(Vec& values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  if (m < 1e-12) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v = std::clamp(v / m, 0.0, 1.0);
}

}  // namespace detail

struct SaliencyParams {
  double sigma_center = 1.0;
  double sigma_surround = 3.0;
  double sigma_orientation = 1.0;
};

/// Contrast (|centre - surround| difference of Gaussians) and orientation
/// (max |response| over 0/45/90/135 degree second-derivative filters)
/// channels, each max-normalized to [0,1] unless identically zero.
inline std::array<SaliencyMap, kChannelCount> saliency(const Image& img, const SaliencyParams& p = {}) {
  require(img.width == kImageSide && img.height == kImageSide, ErrorKind::kDimensionMismatch,
          "saliency expects a 28x28 image");
  const Image center = detail::convolve(img, detail::gaussian_kernel(p.sigma_center));
  const Image surround = detail::convolve(img, detail::gaussian_kernel(p.sigma_surround));
  SaliencyMap contrast(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) contrast.pixels[i] = std::abs(center.pixels[i] - surround.pixels[i]);

  SaliencyMap orientation(img.width, img.height);
  for (int o = 0; o < 4; ++o) {
    const Image resp = detail::convolve(img, detail::oriented_kernel(o * M_PI / 4.0, p.sigma_orientation));
    for (size_t i = 0; i < resp.pixels.size(); ++i)
      orientation.pixels[i] = std::max(orientation.pixels[i], std::abs(resp.pixels[i]));
  }
  detail::max_normalize(contrast.pixels);
  detail::max_normalize(orientation.pixels);
  return {std::move(contrast), std::move(orientation)};
}

/// Uniform bins [0,0.2) -> 1 ... [0.8,1] -> 5.
inline uint8_t quantize(double value, size_t levels = kFeatureLevels) {
  require(value >= 0.0 && value <= 1.0, ErrorKind::kOutOfRange, "quantize expects a value in [0,1]");
  const auto bin = static_cast<size_t>(value * static_cast<double>(levels));
  return static_cast<uint8_t>(std::min(bin, levels - 1) + 1);
}

/// Average-pools a 28x28 map into the 7x7 grid of 4x4 cells, then
/// max-normalizes the grid (unless it is identically zero).
inline Vec pool_to_grid(const SaliencyMap& map) {
  Vec grid(kGridCells, 0.0);
  for (size_t r = 0; r < map.height; ++r)
    for (size_t c = 0; c < map.width; ++c)
      grid[(r / kCellPixels) * kGridSide + c / kCellPixels] += map.at(r, c);
  for (double& g : grid) g /= static_cast<double>(kCellPixels * kCellPixels);
  detail::max_normalize(grid);
  return grid;
}

/// Feature levels of one image at every grid cell: [channel][cell] in 1..5.
inline std::array<std::array<uint8_t, kGridCells>, kChannelCount> feature_levels(const Image& img) {
  const auto maps = saliency(img);
  std::array<std::array<uint8_t, kGridCells>, kChannelCount> out{};
  for (size_t ch = 0; ch < kChannelCount; ++ch) {
    const Vec grid = pool_to_grid(maps[ch]);
    for (size_t cell = 0; cell < kGridCells; ++cell) out[ch][cell] = quantize(grid[cell]);
  }
  return out;
}

/// Levels in 1..5 indexed [class][channel][row][col].
class PriorityAtlas {
 public:
  PriorityAtlas() = default;
  PriorityAtlas(size_t classes, size_t channels, size_t rows, size_t cols)
      : classes_(classes), channels_(channels), rows_(rows), cols_(cols), levels_(classes * channels * rows * cols, 1) {}

  size_t classes() const { return classes_; }
  size_t channels() const { return channels_; }
  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }

  uint8_t& level(size_t cls, size_t ch, size_t cell) { return levels_[index(cls, ch, cell)]; }
  uint8_t level(size_t cls, size_t ch, size_t cell) const { return levels_[index(cls, ch, cell)]; }
  const std::vector<uint8_t>& raw() const { return levels_; }

  bool operator==(const PriorityAtlas&) const = default;

  void validate() const {
    require(levels_.size() == classes_ * channels_ * rows_ * cols_, ErrorKind::kDimensionMismatch, "atlas size");
    for (uint8_t l : levels_)
      require(l >= 1 && l <= kFeatureLevels, ErrorKind::kOutOfRange, "atlas level outside 1..5");
  }

 private:
  size_t index(size_t cls, size_t ch, size_t cell) const { return (cls * channels_ + ch) * rows_ * cols_ + cell; }

  size_t classes_ = 0, channels_ = 0, rows_ = 0, cols_ = 0;
  std::vector<uint8_t> levels_;
};

inline constexpr size_t kMinExemplarsPerClass = 100;

/// Mean per-class saliency over exemplars, pooled to the grid and quantized.
inline PriorityAtlas build_atlas(const std::vector<Image>& images, const std::vector<uint8_t>& labels,
                                 size_t classes = 10) {
  require(images.size() == labels.size(), ErrorKind::kCountMismatch, "images and labels differ in count");
  std::vector<std::array<SaliencyMap, kChannelCount>> sums(
      classes, {SaliencyMap(kImageSide, kImageSide), SaliencyMap(kImageSide, kImageSide)});
  std::vector<size_t> counts(classes, 0);
  for (size_t i = 0; i < images.size(); ++i) {
    require(labels[i] < classes, ErrorKind::kOutOfRange, "label outside class range");
    const auto maps = saliency(images[i]);
    for (size_t ch = 0; ch < kChannelCount; ++ch)
      for (size_t p = 0; p < kImagePixels; ++p) sums[labels[i]][ch].pixels[p] += maps[ch].pixels[p];
    ++counts[labels[i]];
  }
  PriorityAtlas atlas(classes, kChannelCount, kGridSide, kGridSide);
  for (size_t cls = 0; cls < classes; ++cls) {
    require(counts[cls] >= kMinExemplarsPerClass, ErrorKind::kInvalidArgument,
            "class " + std::to_string(cls) + " has " + std::to_string(counts[cls]) + " exemplars, need 100");
    for (size_t ch = 0; ch < kChannelCount; ++ch) {
      for (double& v : sums[cls][ch].pixels) v /= static_cast<double>(counts[cls]);
      const Vec grid = pool_to_grid(sums[cls][ch]);
      for (size_t cell = 0; cell < kGridCells; ++cell) atlas.level(cls, ch, cell) = quantize(grid[cell]);
    }
  }
  return atlas;
}

// PATL file: "PATL", u32 version=1, u32 classes, channels, rows, cols, then
// one u8 level per cell in [class][channel][row][col] order; little-endian.

inline constexpr uint32_t kAtlasVersion = 1;

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline uint32_t get_u32(const std::string& in, size_t& pos) {
  require(pos + 4 <= in.size(), ErrorKind::kTruncated, "unexpected end of file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::kIo, "cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorKind::kIo, "write failed for " + path);
}

}  // namespace detail

inline std::string serialize_atlas(const PriorityAtlas& atlas) {
  std::string out = "PATL";
  detail::put_u32(out, kAtlasVersion);
  detail::put_u32(out, static_cast<uint32_t>(atlas.classes()));
  detail::put_u32(out, static_cast<uint32_t>(atlas.channels()));
  detail::put_u32(out, static_cast<uint32_t>(atlas.rows()));
  detail::put_u32(out, static_cast<uint32_t>(atlas.cols()));
  out.append(reinterpret_cast<const char*>(atlas.raw().data()), atlas.raw().size());
  return out;
}

inline PriorityAtlas parse_atlas(const std::string& bytes) {
  require(bytes.size() >= 4 && bytes.compare(0, 4, "PATL") == 0, ErrorKind::kBadMagic, "atlas magic is not PATL");
  size_t pos = 4;
  require(detail::get_u32(bytes, pos) == kAtlasVersion, ErrorKind::kVersionMismatch, "unsupported atlas version");
  const uint32_t classes = detail::get_u32(bytes, pos);
  const uint32_t channels = detail::get_u32(bytes, pos);
  const uint32_t rows = detail::get_u32(bytes, pos);
  const uint32_t cols = detail::get_u32(bytes, pos);
  const size_t n = static_cast<size_t>(classes) * channels * rows * cols;
  require(bytes.size() >= pos + n, ErrorKind::kTruncated, "atlas payload truncated");
  require(bytes.size() == pos + n, ErrorKind::kDimensionMismatch, "trailing bytes after atlas payload");
  PriorityAtlas atlas(classes, channels, rows, cols);
  for (size_t i = 0; i < n; ++i)
    atlas.level(i / (channels * rows * cols), (i / (rows * cols)) % channels, i % (rows * cols)) =
        static_cast<uint8_t>(bytes[pos + i]);
  atlas.validate();
  return atlas;
}

inline void save_atlas(const std::string& path, const PriorityAtlas& atlas) {
  detail::write_file(path, serialize_atlas(atlas));
}

inline PriorityAtlas load_atlas(const std::string& path) { return parse_atlas(detail::read_file(path)); }

}  // namespace foveate

#endif  // FOVEATE_PRIORITY_HPP_
