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

// Six-panel snapshot of a trial, written as binary PGM:
//   stimulus + fixation marker | foveated view | global decode |
//   local decode | where posterior | digit posterior bars

#ifndef FOVEATE_RENDER_HPP_
#define FOVEATE_RENDER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "foveate/inversion.hpp"

namespace foveate {

inline constexpr size_t kPanelSide = kImageSide * 8;  // 224
inline constexpr size_t kPanelGap = 4;
inline constexpr size_t kPanelCount = 6;

struct Raster {
  size_t width = 0, height = 0;
  std::vector<uint8_t> pixels;

  Raster() = default;
  Raster(size_t w, size_t h, uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}
  uint8_t& at(size_t r, size_t c) { return pixels[r * width + c]; }
  uint8_t at(size_t r, size_t c) const { return pixels[r * width + c]; }
};

inline uint8_t to_gray(double v) { return static_cast<uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); }

/// Nearest-neighbour upscale of a w x h field of [0,1] values into a panel.
inline Raster upscale(std::span<const double> values, size_t w, size_t h, size_t side = kPanelSide) {
  require(values.size() == w * h, ErrorKind::kDimensionMismatch, "field size");
  Raster r(side, side);
  for (size_t i = 0; i < side; ++i)
    for (size_t j = 0; j < side; ++j) r.at(i, j) = to_gray(values[(i * h / side) * w + j * w / side]);
  return r;
}

inline Raster stimulus_panel(const Image& stim, const Point2& eye_grid) {
  Raster r = upscale(stim.pixels, stim.width, stim.height);
  const double s = static_cast<double>(kPanelSide) / kImageSide;
  const Point2 px = grid_to_pixel(eye_grid);
  const long cr = std::lround(px[0] * s), cc = std::lround(px[1] * s);
  // Marker: a 7x7 mid-grey square with a black centre, visible on ink and paper.
  for (long dr = -3; dr <= 3; ++dr)
    for (long dc = -3; dc <= 3; ++dc) {
      const long rr = cr + dr, c2 = cc + dc;
      if (rr < 0 || c2 < 0 || rr >= static_cast<long>(kPanelSide) || c2 >= static_cast<long>(kPanelSide)) continue;
      r.at(static_cast<size_t>(rr), static_cast<size_t>(c2)) = (std::abs(dr) <= 1 && std::abs(dc) <= 1) ? 0 : 128;
    }
  return r;
}

/// Heat map of the 7x7 grid; the decision location is the strip on the right.
inline Raster where_panel(std::span<const double> where) {
  require(where.size() == kLocations, ErrorKind::kDimensionMismatch, "where posterior size");
  Raster r(kPanelSide, kPanelSide);
  const size_t cell = kPanelSide / (kGridSide + 1);  // 28 px; last column is the decision cell
  for (size_t i = 0; i < kPanelSide; ++i)
    for (size_t j = 0; j < kPanelSide; ++j) {
      const size_t gr = i / cell, gc = j / cell;
      double v;
      if (gc < kGridSide && gr < kGridSide) v = where[gr * kGridSide + gc];
      else if (gc == kGridSide) v = where[kDecisionLocation];
      else v = 0.0;
      r.at(i, j) = to_gray(v);
    }
  return r;
}

/// Ten bars, height proportional to probability.
inline Raster digit_panel(std::span<const double> digit) {
  require(digit.size() == kClasses, ErrorKind::kDimensionMismatch, "digit posterior size");
  Raster r(kPanelSide, kPanelSide);
  const size_t slot = kPanelSide / kClasses;  // 22 px
  for (size_t h = 0; h < kClasses; ++h) {
    const size_t height = static_cast<size_t>(std::lround(std::clamp(digit[h], 0.0, 1.0) * (kPanelSide - 1)));
    for (size_t i = kPanelSide - height; i < kPanelSide; ++i)
      for (size_t j = h * slot + 2; j < (h + 1) * slot - 2; ++j) r.at(i, j) = 255;
  }
  return r;
}

/// Bar heights (pixels) read back from a digit panel.
inline std::vector<size_t> bar_heights(const Raster& panel) {
  std::vector<size_t> out;
  const size_t slot = panel.width / kClasses;
  for (size_t h = 0; h < kClasses; ++h) {
    size_t n = 0;
    for (size_t i = 0; i < panel.height; ++i) n += panel.at(i, h * slot + slot / 2) > 0;
    out.push_back(n);
  }
  return out;
}

inline Raster compose(const std::vector<Raster>& panels) {
  require(panels.size() == kPanelCount, ErrorKind::kDimensionMismatch, "six panels");
  Raster out(kPanelCount * kPanelSide + (kPanelCount - 1) * kPanelGap, kPanelSide, 255);
  for (size_t k = 0; k < panels.size(); ++k) {
    require(panels[k].width == kPanelSide && panels[k].height == kPanelSide, ErrorKind::kDimensionMismatch,
            "panel size");
    const size_t x0 = k * (kPanelSide + kPanelGap);
    for (size_t i = 0; i < kPanelSide; ++i)
      for (size_t j = 0; j < kPanelSide; ++j) out.at(i, x0 + j) = panels[k].at(i, j);
  }
  return out;
}

inline std::string encode_pgm(const Raster& r) {
  std::string s = "P5\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
  return s;
}

inline Raster decode_pgm(const std::string& bytes) {
  std::istringstream is(bytes);
  std::string magic;
  size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  require(magic == "P5" && maxval == 255, ErrorKind::kBadMagic, "not an 8-bit binary PGM");
  is.get();
  Raster r(w, h);
  is.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  require(static_cast<size_t>(is.gcount()) == r.pixels.size(), ErrorKind::kTruncated, "PGM payload");
  return r;
}

/// Renders the state after step `step` of a replayed trace (default: the
/// last fixation).
inline Raster render_trace(const Agent& base, const BehaviorTrace& trace, const Dataset& data,
                           std::optional<size_t> step = std::nullopt) {
  Agent agent = base;
  agent.config.keep_saccades = true;
  require(trace.stimulus_id < data.size(), ErrorKind::kOutOfRange, "trace stimulus id out of range");
  const auto path = policy_path(agent.model, trace);
  const Image stim = data.image(trace.stimulus_id);
  const TrialResult r =
      run_trial(agent, stim, data.labels[trace.stimulus_id], trace.trial_id, trace.stimulus_id, 1.0, 0, &path);
  require(r.fixations == trace.fixations, ErrorKind::kInvalidArgument, "trace does not match its stimulus replay");
  const size_t last = r.steps.size() - 1;
  const size_t k = std::min(step.value_or(trace.fixations.empty() ? 0 : trace.fixations.size()), last);
  const StepRecord& s = r.steps[k];

  Point2 eye = {cell_center(kDecisionLocation).row, cell_center(kDecisionLocation).col};
  Image seen(kImageSide, kImageSide, 0.5);
  Vec code(kLatentContinuous, 0.0);
  for (size_t j = 1; j <= k; ++j)
    if (r.steps[j].saccade) {
      eye = r.steps[j].saccade->final_eye();
      paint_samples(seen, *r.steps[j].saccade);
      code = r.steps[j].saccade->steps.back().mu.rho;
    }

  const Vec global = decode_mixture(*agent.weights, code, s.digit_posterior);
  Vec local(kFoveaPixels, 0.0);
  const auto idx = fovea_indices(grid_to_pixel(eye));
  for (size_t q = 0; q < kFoveaPixels; ++q)
    if (idx[q] >= 0) local[q] = global[static_cast<size_t>(idx[q])];

  return compose({stimulus_panel(stim, eye), upscale(seen.pixels, kImageSide, kImageSide),
                  upscale(global, kImageSide, kImageSide), upscale(local, kFoveaSide, kFoveaSide),
                  where_panel(s.where_posterior), digit_panel(s.digit_posterior)});
}

}  // namespace foveate

#endif  // FOVEATE_RENDER_HPP_
