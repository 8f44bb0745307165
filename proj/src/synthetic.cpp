// SPDX-License-Identifier: Apache-2.0
#include "concepthash/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "concepthash/errors.hpp"

namespace concepthash {

namespace {
constexpr double kGlyphOff = 0.1;

int nominal_left(const SyntheticSpec& spec, double frac) {
  const double center = frac * static_cast<double>(spec.image_size);
  return static_cast<int>(std::lround(center - static_cast<double>(spec.glyph_size) / 2.0));
}

int clamp_origin(const SyntheticSpec& spec, int v) {
  return std::clamp(v, 0, static_cast<int>(spec.image_size - spec.glyph_size));
}
}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes == 0) throw ConfigError("synthetic.num_classes: must be positive");
  if (images_per_class == 0) throw ConfigError("synthetic.images_per_class: must be positive");
  if (channels == 0) throw ConfigError("synthetic.channels: must be positive");
  if (parts.empty()) throw ConfigError("synthetic.parts: need at least one part");
  if (glyph_size == 0) throw ConfigError("synthetic.glyph_size: must be positive");
  if (glyph_size > image_size)
    throw ConfigError("synthetic: infeasible spec, glyph_size " + std::to_string(glyph_size) +
                      " exceeds image_size " + std::to_string(image_size));
  if (jitter < 0) throw ConfigError("synthetic.jitter: must be >= 0");
  if (noise < 0.0) throw ConfigError("synthetic.noise: must be >= 0");
  if (classes_per_family == 0) throw ConfigError("synthetic.classes_per_family: must be positive");
  for (const auto& p : parts)
    if (p.cx < 0.0 || p.cx > 1.0 || p.cy < 0.0 || p.cy > 1.0)
      throw ConfigError("synthetic.parts: centers must lie in [0, 1]");
}

namespace {

// Evenly spaced, saturated hues (RGB) or evenly spaced tones (other channel
// counts); part p of class c gets slot c * parts + p, so no two glyphs share
// a color.
std::vector<double> palette_color(const SyntheticSpec& spec, std::size_t c, std::size_t p, std::size_t parts) {
  const double slot = (static_cast<double>(c * parts + p) + 0.5) / static_cast<double>(spec.num_classes * parts);
  std::vector<double> color(spec.channels);
  if (spec.channels == 3) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double k = std::fmod(6.0 * slot + 5.0 - 2.0 * static_cast<double>(ch), 6.0);
      const double level = std::clamp(std::min(k, 4.0 - k), 0.0, 1.0);
      color[ch] = 0.25 + 0.75 * (1.0 - level);
    }
  } else {
    for (auto& v : color) v = 0.55 + 0.45 * slot;
  }
  return color;
}

}  // namespace

GlyphBank make_glyphs(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.glyph_seed);
  std::bernoulli_distribution coin(0.5);
  GlyphBank bank;
  bank.parts = spec.parts.size();
  const std::size_t cells = spec.glyph_size * spec.glyph_size;
  for (std::size_t c = 0; c < spec.num_classes; ++c)
    for (std::size_t p = 0; p < bank.parts; ++p) {
      Glyph g;
      g.mask.resize(cells);
      for (std::size_t i = 0; i < cells; ++i) g.mask[i] = coin(rng);
      g.color = palette_color(spec, c, p, bank.parts);
      bank.glyphs.push_back(std::move(g));
    }
  return bank;
}

RenderParams sample_render_params(const SyntheticSpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> shift(-spec.jitter, spec.jitter);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> freq(0.5, 1.5);
  RenderParams r;
  for (const auto& part : spec.parts) {
    r.left.push_back(clamp_origin(spec, nominal_left(spec, part.cx) + shift(rng)));
    r.top.push_back(clamp_origin(spec, nominal_left(spec, part.cy) + shift(rng)));
  }
  r.phase_x = phase(rng);
  r.phase_y = phase(rng);
  r.freq = freq(rng);
  r.noise_seed = rng();
  return r;
}

Image render_image(const SyntheticSpec& spec, const GlyphBank& glyphs, std::size_t label, const RenderParams& params,
                   std::vector<Landmark>* landmarks) {
  if (label >= spec.num_classes) throw DataError("render_image: label out of range");
  if (params.left.size() != spec.parts.size() || params.top.size() != spec.parts.size())
    throw DimensionError("render_image: render params do not match part count");
  const std::size_t s = spec.image_size, g = spec.glyph_size;
  Image img(spec.channels, s, s);
  const double w = 2.0 * std::numbers::pi * params.freq / static_cast<double>(s);

  // Shared background: a low-frequency plaid plus noise, independent of the label.
  Rng noise_rng(params.noise_seed);
  std::normal_distribution<double> noise(0.0, spec.noise);
  for (std::size_t c = 0; c < spec.channels; ++c)
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double wave = std::sin(w * static_cast<double>(x) + params.phase_x + static_cast<double>(c)) *
                            std::cos(w * static_cast<double>(y) + params.phase_y);
        img.at(c, y, x) = 0.45 + spec.background_amplitude * wave;
      }

  for (std::size_t p = 0; p < spec.parts.size(); ++p) {
    const Glyph& glyph = glyphs.at(label, p);
    const auto left = static_cast<std::size_t>(params.left[p]);
    const auto top = static_cast<std::size_t>(params.top[p]);
    for (std::size_t gy = 0; gy < g; ++gy)
      for (std::size_t gx = 0; gx < g; ++gx)
        for (std::size_t c = 0; c < spec.channels; ++c)
          img.at(c, top + gy, left + gx) = glyph.mask[gy * g + gx] ? glyph.color[c] : kGlyphOff;
    if (landmarks != nullptr)
      landmarks->push_back({static_cast<double>(left) + (static_cast<double>(g) - 1.0) / 2.0,
                            static_cast<double>(top) + (static_cast<double>(g) - 1.0) / 2.0});
  }

  // Noise is drawn in a fixed order regardless of the label.
  for (auto& v : img.pixels) v = std::clamp(v + noise(noise_rng), 0.0, 1.0);
  return img;
}

Dataset synth_dataset_generate(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const GlyphBank glyphs = make_glyphs(spec);
  Dataset data;
  data.num_classes = spec.num_classes;
  for (std::size_t c = 0; c < spec.num_classes; ++c) data.class_names.push_back("glyph_class_" + std::to_string(c));
  const std::size_t total = spec.num_classes * spec.images_per_class;
  data.samples.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i % spec.num_classes;
    Rng rng(derive_seed(seed, i));
    const RenderParams params = sample_render_params(spec, rng);
    Sample s;
    s.image = render_image(spec, glyphs, label, params, &s.landmarks);
    s.label = static_cast<int>(label);
    s.family = static_cast<int>(label / spec.classes_per_family);
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace concepthash
