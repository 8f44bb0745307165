// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "concepthash/dataset.hpp"
#include "concepthash/rng.hpp"

namespace concepthash {

/// Nominal glyph center as a fraction of the image side.
struct PartSpec {
  double cx = 0.5;
  double cy = 0.5;
};

/// Localized-glyph dataset: a class-independent background with one small
/// class-specific glyph per part. Only the glyph boxes carry label information.
struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t images_per_class = 64;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t glyph_size = 6;
  std::vector<PartSpec> parts{{0.3, 0.3}, {0.7, 0.7}};
  int jitter = 4;                     // uniform integer offset in [-jitter, jitter] per axis
  double noise = 0.03;                // per-pixel Gaussian noise std
  double background_amplitude = 0.15;
  /// Glyph designs come from this seed, so splits generated with different
  /// sample seeds share the same classes.
  std::uint64_t glyph_seed = 2024;
  /// Number of classes sharing a family id (consecutive labels).
  std::size_t classes_per_family = 2;

  /// Throws ConfigError when these settings cannot be rendered.
  void validate() const;
};

/// One glyph per (class, part): a glyph_size^2 on/off mask and an RGB-ish color.
struct Glyph {
  std::vector<bool> mask;
  std::vector<double> color;  // one entry per channel
};

struct GlyphBank {
  std::size_t parts = 0;
  std::vector<Glyph> glyphs;  // class-major: glyphs[label * parts + part]
  const Glyph& at(std::size_t label, std::size_t part) const { return glyphs[label * parts + part]; }
};

GlyphBank make_glyphs(const SyntheticSpec& spec);

/// Everything about an image except its class.
struct RenderParams {
  std::vector<int> left, top;  // glyph box top-left per part
  double phase_x = 0.0, phase_y = 0.0, freq = 1.0;
  std::uint64_t noise_seed = 0;
};

RenderParams sample_render_params(const SyntheticSpec& spec, Rng& rng);

/// Deterministic rendering; landmarks (glyph centers) are appended to `landmarks` when given.
Image render_image(const SyntheticSpec& spec, const GlyphBank& glyphs, std::size_t label, const RenderParams& params,
                   std::vector<Landmark>* landmarks = nullptr);

/// images_per_class samples of each class, interleaved by class. Fully
/// determined by (spec, seed).
Dataset synth_dataset_generate(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace concepthash
