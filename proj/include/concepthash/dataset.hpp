// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "concepthash/image.hpp"

namespace concepthash {

struct Sample {
  Image image;
  int label = 0;
  int family = -1;
  std::vector<Landmark> landmarks;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::vector<int> labels() const;
  std::vector<int> families() const;
  bool has_family() const;
};

/// Directory layout: manifest.json plus one PNG per sample.
///
///   {"num_classes": C, "class_names": [...], "image_size": S, "channels": 1|3,
///    "items": [{"file": "000000.png", "label": y, "family": f?, "landmarks": [[x, y], ...]}]}
void save_dataset_dir(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset_dir(const std::filesystem::path& dir);

/// 8-bit PNG I/O (gray or RGB); intensities map to k / 255.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path, std::size_t channels);

}  // namespace concepthash
