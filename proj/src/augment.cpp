// SPDX-License-Identifier: Apache-2.0
#include "concepthash/augment.hpp"

#include <algorithm>
#include <cmath>

#include "concepthash/errors.hpp"
#include "concepthash/rng.hpp"

namespace concepthash {

void AugmentConfig::validate() const {
  if (flip_probability < 0.0 || flip_probability > 1.0) throw ConfigError("augment.flip_probability: must be in [0, 1]");
  if (!(min_scale > 0.0) || min_scale > max_scale || max_scale > 1.0)
    throw ConfigError("augment: need 0 < min_scale <= max_scale <= 1");
}

AugmentParams sample_augment(const AugmentConfig& cfg, std::size_t image_size, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentParams p;
  const double s = static_cast<double>(image_size);
  const double scale = cfg.min_scale + (cfg.max_scale - cfg.min_scale) * unit(rng);
  p.side = s * std::sqrt(scale);
  p.left = (s - p.side) * unit(rng);
  p.top = (s - p.side) * unit(rng);
  p.flip = unit(rng) < cfg.flip_probability;
  return p;
}

Sample hflip(const Sample& s) {
  Sample out = s;
  const Image& src = s.image;
  for (std::size_t c = 0; c < src.channels; ++c)
    for (std::size_t y = 0; y < src.height; ++y)
      for (std::size_t x = 0; x < src.width; ++x) out.image.at(c, y, x) = src.at(c, y, src.width - 1 - x);
  for (auto& l : out.landmarks) l.x = static_cast<double>(src.width) - 1.0 - l.x;
  return out;
}

Sample resized_crop(const Sample& s, double left, double top, double side) {
  if (!(side > 0.0)) throw DataError("resized_crop: side must be positive");
  const Image& src = s.image;
  if (src.width != src.height) throw DimensionError("resized_crop: square images only");
  const double n = static_cast<double>(src.width);
  const double ratio = side / n;
  const double max_idx = n - 1.0;
  Sample out = s;
  for (std::size_t y = 0; y < src.height; ++y) {
    const double sy = std::clamp(top + (static_cast<double>(y) + 0.5) * ratio - 0.5, 0.0, max_idx);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < src.width; ++x) {
      const double sx = std::clamp(left + (static_cast<double>(x) + 0.5) * ratio - 0.5, 0.0, max_idx);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top_row = src.at(c, y0, x0) * (1.0 - fx) + src.at(c, y0, x1) * fx;
        const double bottom_row = src.at(c, y1, x0) * (1.0 - fx) + src.at(c, y1, x1) * fx;
        out.image.at(c, y, x) = top_row * (1.0 - fy) + bottom_row * fy;
      }
    }
  }
  // Inverse of the sampling map above.
  for (auto& l : out.landmarks) {
    l.x = (l.x - left + 0.5) / ratio - 0.5;
    l.y = (l.y - top + 0.5) / ratio - 0.5;
  }
  return out;
}

Sample apply_augment(const Sample& s, const AugmentParams& params) {
  Sample out = resized_crop(s, params.left, params.top, params.side);
  return params.flip ? hflip(out) : out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!cfg.enabled) return s;
  return apply_augment(s, sample_augment(cfg, s.image.width, seed));
}

}  // namespace concepthash
