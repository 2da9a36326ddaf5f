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

#ifndef FOVEATE_IMAGE_HPP_
#define FOVEATE_IMAGE_HPP_

#include <cmath>
#include <cstddef>
#include <utility>

#include "foveate/common.hpp"

namespace foveate {

inline constexpr size_t kImageSide = 28;
inline constexpr size_t kImagePixels = kImageSide * kImageSide;

// Fixation grid: 7x7 cells of 4x4 pixels plus one decision location that
// lies off the image.
inline constexpr size_t kGridSide = 7;
inline constexpr size_t kGridCells = kGridSide * kGridSide;
inline constexpr size_t kDecisionLocation = kGridCells;  // index 49
inline constexpr size_t kLocations = kGridCells + 1;
inline constexpr size_t kCellPixels = kImageSide / kGridSide;  // 4

/// Grayscale raster, row-major, values in [0,1].
struct Image {
  size_t width = kImageSide;
  size_t height = kImageSide;
  Vec pixels = Vec(kImagePixels, 0.0);

  Image() = default;
  Image(size_t w, size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}
  Image(size_t w, size_t h, Vec values) : width(w), height(h), pixels(std::move(values)) {
    require(pixels.size() == w * h, ErrorKind::kDimensionMismatch, "pixel count does not match size");
  }

  double& at(size_t row, size_t col) { return pixels[row * width + col]; }
  double at(size_t row, size_t col) const { return pixels[row * width + col]; }

  /// Zero outside the image.
  double padded(long row, long col) const {
    if (row < 0 || col < 0 || row >= static_cast<long>(height) || col >= static_cast<long>(width)) return 0.0;
    return pixels[static_cast<size_t>(row) * width + static_cast<size_t>(col)];
  }

  /// Nearest edge pixel outside the image.
  double clamped(long row, long col) const {
    row = std::clamp(row, 0L, static_cast<long>(height) - 1);
    col = std::clamp(col, 0L, static_cast<long>(width) - 1);
    return pixels[static_cast<size_t>(row) * width + static_cast<size_t>(col)];
  }
};

/// Continuous location in grid units: (row, col); integer values are cell centres.
struct GridPoint {
  double row = 0.0;
  double col = 0.0;
};

inline GridPoint cell_center(size_t location) {
  if (location == kDecisionLocation) return {3.0, 8.0};
  return {static_cast<double>(location / kGridSide), static_cast<double>(location % kGridSide)};
}

/// Grid units to continuous pixel coordinates (pixel i covers [i, i+1)).
inline double grid_to_pixel(double g) { return static_cast<double>(kCellPixels) * g + 0.5 * kCellPixels; }

}  // namespace foveate

#endif  // FOVEATE_IMAGE_HPP_
