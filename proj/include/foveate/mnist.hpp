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

#ifndef FOVEATE_MNIST_HPP_
#define FOVEATE_MNIST_HPP_

#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "foveate/common.hpp"
#include "foveate/image.hpp"
#include "foveate/priority.hpp"

namespace foveate {

inline constexpr uint32_t kIdxImageMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelMagic = 0x00000801;

struct Dataset {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<uint8_t> pixels;  // N * rows * cols
  std::vector<uint8_t> labels;
  std::string split;

  size_t size() const { return labels.size(); }

  Image image(size_t i) const {
    Image img(cols, rows);
    const size_t n = rows * cols;
    for (size_t p = 0; p < n; ++p) img.pixels[p] = pixels[i * n + p] / 255.0;
    return img;
  }
};

namespace detail {

inline uint32_t get_be32(const std::string& in, size_t& pos) {
  require(pos + 4 <= in.size(), ErrorKind::kTruncated, "IDX header truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(in[pos + i]);
  pos += 4;
  return v;
}

}  // namespace detail

/// Parses an IDX image/label pair from memory.
inline Dataset parse_mnist(const std::string& image_bytes, const std::string& label_bytes, std::string split = "") {
  size_t pos = 0;
  require(detail::get_be32(image_bytes, pos) == kIdxImageMagic, ErrorKind::kBadMagic, "image file magic");
  const uint32_t n = detail::get_be32(image_bytes, pos);
  const uint32_t rows = detail::get_be32(image_bytes, pos);
  const uint32_t cols = detail::get_be32(image_bytes, pos);
  const size_t payload = static_cast<size_t>(n) * rows * cols;
  require(image_bytes.size() - pos >= payload, ErrorKind::kTruncated, "image payload truncated");

  size_t lpos = 0;
  require(detail::get_be32(label_bytes, lpos) == kIdxLabelMagic, ErrorKind::kBadMagic, "label file magic");
  const uint32_t n_labels = detail::get_be32(label_bytes, lpos);
  require(n_labels == n, ErrorKind::kCountMismatch,
          std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  require(label_bytes.size() - lpos >= n_labels, ErrorKind::kTruncated, "label payload truncated");

  Dataset ds;
  ds.rows = rows;
  ds.cols = cols;
  ds.split = std::move(split);
  ds.pixels.assign(image_bytes.begin() + static_cast<long>(pos), image_bytes.begin() + static_cast<long>(pos + payload));
  ds.labels.assign(label_bytes.begin() + static_cast<long>(lpos),
                   label_bytes.begin() + static_cast<long>(lpos + n_labels));
  for (uint8_t l : ds.labels) require(l <= 9, ErrorKind::kOutOfRange, "label outside 0..9");
  return ds;
}

inline Dataset load_mnist(const std::string& images_path, const std::string& labels_path, std::string split = "") {
  return parse_mnist(detail::read_file(images_path), detail::read_file(labels_path), std::move(split));
}

/// Loads "<dir>/<split>-images-idx3-ubyte" and "<dir>/<split>-labels-idx1-ubyte".
inline Dataset load_mnist_split(const std::string& dir, const std::string& split) {
  return load_mnist(dir + "/" + split + "-images-idx3-ubyte", dir + "/" + split + "-labels-idx1-ubyte", split);
}

/// Dataset root from FOVEATE_DATA_DIR, or the fallback when unset.
inline std::string data_dir(const std::string& fallback) {
  const char* env = std::getenv("FOVEATE_DATA_DIR");
  return env && *env ? std::string(env) : fallback;
}

}  // namespace foveate

#endif  // FOVEATE_MNIST_HPP_
