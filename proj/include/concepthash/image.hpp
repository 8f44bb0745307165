// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace concepthash {

/// Planar (channel-major) image with intensities in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

  bool operator==(const Image&) const = default;
};

/// Pixel-index coordinates: x is the column, y the row; (0, 0) is the center
/// of the top-left pixel.
struct Landmark {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Landmark&) const = default;
};

}  // namespace concepthash
