// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "concepthash/dataset.hpp"

namespace concepthash {

struct AugmentConfig {
  bool enabled = true;
  double flip_probability = 0.5;
  double min_scale = 0.8;  // crop area fraction
  double max_scale = 1.0;

  void validate() const;
};

/// A square crop window in source pixels plus the flip decision.
struct AugmentParams {
  bool flip = false;
  double left = 0.0, top = 0.0, side = 0.0;
};

AugmentParams sample_augment(const AugmentConfig& cfg, std::size_t image_size, std::uint64_t seed);

/// Mirror left-right; landmark x becomes width - 1 - x.
Sample hflip(const Sample& s);

/// Bilinear resample of the square window [left, left+side) x [top, top+side)
/// back to the full image size. Pixel centers map linearly; out-of-image
/// samples clamp to the border. A full-size window at the origin is the identity.
Sample resized_crop(const Sample& s, double left, double top, double side);

/// Crop first, then flip.
Sample apply_augment(const Sample& s, const AugmentParams& params);
Sample augment(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace concepthash
