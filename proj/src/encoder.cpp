// SPDX-License-Identifier: Apache-2.0
#include "concepthash/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "concepthash/errors.hpp"

namespace concepthash {

namespace {

constexpr double kAdapterScaleInit = 0.1;

Tensor init_normal(ParameterStore& store, Rng& rng, const std::string& name, Shape shape, double stddev) {
  auto values = truncated_normal_vector(rng, shape_size(shape), stddev);
  return store.add(name, std::move(shape), std::move(values));
}

Tensor init_const(ParameterStore& store, const std::string& name, Shape shape, double value) {
  const auto n = shape_size(shape);
  return store.add(name, std::move(shape), std::vector<double>(n, value));
}

LayerNormParams init_norm(ParameterStore& store, const std::string& name, std::size_t d) {
  return {init_const(store, name + ".gamma", {d}, 1.0), init_const(store, name + ".beta", {d}, 0.0)};
}

AdapterParams init_adapter(ParameterStore& store, Rng& rng, const std::string& name, std::size_t d,
                           std::size_t d_down, double stddev) {
  AdapterParams a;
  a.norm = init_norm(store, name + ".norm", d);
  a.down = init_normal(store, rng, name + ".down", {d, d_down}, stddev);
  a.up = init_normal(store, rng, name + ".up", {d_down, d}, stddev);
  a.scale = init_const(store, name + ".scale", {1}, kAdapterScaleInit);
  return a;
}

}  // namespace

void EncoderConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("encoder." + field + ": " + why);
  };
  if (patch_size == 0) fail("patch_size", "must be positive");
  if (image_size == 0) fail("image_size", "must be positive");
  if (image_size % patch_size != 0) fail("image_size", "must be divisible by patch_size");
  if (channels == 0) fail("channels", "must be positive");
  if (dim == 0) fail("dim", "must be positive");
  if (heads == 0) fail("heads", "must be positive");
  if (dim % heads != 0) fail("dim", "must be divisible by heads");
  if (mlp_ratio == 0) fail("mlp_ratio", "must be positive");
  if (num_concepts == 0) fail("num_concepts", "must be at least 1 (every sub-code needs a concept)");
  if (adapter_enabled && adapter_dim == 0) fail("adapter_dim", "must be positive when adapters are enabled");
  if (!(pixel_std > 0.0)) fail("pixel_std", "must be positive");
  if (!(init_std > 0.0)) fail("init_std", "must be positive");
}

std::vector<double> extract_patches(std::span<const Image> images, const EncoderConfig& cfg) {
  const std::size_t p = cfg.patch_size, g = cfg.grid(), pd = cfg.patch_dim();
  const double mean = cfg.pixel_mean, inv_std = 1.0 / cfg.pixel_std;
  std::vector<double> out(images.size() * cfg.num_patches() * pd);
  std::size_t row = 0;
  for (const Image& img : images) {
    if (img.channels != cfg.channels || img.height != cfg.image_size || img.width != cfg.image_size)
      throw DimensionError("image is " + std::to_string(img.channels) + "x" + std::to_string(img.height) + "x" +
                           std::to_string(img.width) + ", encoder expects " + std::to_string(cfg.channels) + "x" +
                           std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
    for (std::size_t gy = 0; gy < g; ++gy)
      for (std::size_t gx = 0; gx < g; ++gx, ++row) {
        double* dst = out.data() + row * pd;
        for (std::size_t c = 0; c < cfg.channels; ++c)
          for (std::size_t py = 0; py < p; ++py)
            for (std::size_t px = 0; px < p; ++px) *dst++ = (img.at(c, gy * p + py, gx * p + px) - mean) * inv_std;
      }
  }
  return out;
}

// --- fused attention ops --------------------------------------------------

Tensor attention_probs(const Tensor& qkv, std::size_t batch, std::size_t seq, std::size_t heads,
                       std::optional<std::size_t> ordered_keys) {
  const std::size_t width = qkv.cols();
  if (qkv.rows() != batch * seq || width % 3 != 0 || (width / 3) % heads != 0)
    throw DimensionError("attention_probs: qkv shape " + shape_string(qkv.shape()));
  const std::size_t fixed = std::min(ordered_keys.value_or(seq), seq);
  std::vector<double> tail(seq - fixed);
  const std::size_t d = width / 3, dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto v = qkv.values();
  std::vector<double> out(batch * heads * seq * seq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      double* block = out.data() + (b * heads + h) * seq * seq;
      for (std::size_t s = 0; s < seq; ++s) {
        const double* q = v.data() + (b * seq + s) * width + h * dh;
        double* row = block + s * seq;
        double mx = -INFINITY;
        for (std::size_t t = 0; t < seq; ++t) {
          const double* k = v.data() + (b * seq + t) * width + d + h * dh;
          double dot = 0.0;
          for (std::size_t j = 0; j < dh; ++j) dot += q[j] * k[j];
          row[t] = dot * scale;
          mx = std::max(mx, row[t]);
        }
        double total = 0.0;
        for (std::size_t t = 0; t < seq; ++t) row[t] = std::exp(row[t] - mx);
        for (std::size_t t = 0; t < fixed; ++t) total += row[t];
        std::copy(row + fixed, row + seq, tail.begin());
        std::sort(tail.begin(), tail.end());
        for (double e : tail) total += e;
        for (std::size_t t = 0; t < seq; ++t) row[t] /= total;
      }
    }
  auto qi = qkv.impl().get();
  return make_result({batch, heads, seq, seq}, std::move(out), {&qkv},
                     [qi, batch, seq, heads, d, dh, width, scale](const TensorImpl& o) {
                       double* g = qi->grad_target();
                       if (!g) return;
                       const double* v = qi->values.data();
                       std::vector<double> dscore(seq);
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t h = 0; h < heads; ++h) {
                           const std::size_t off = (b * heads + h) * seq * seq;
                           for (std::size_t s = 0; s < seq; ++s) {
                             const double* p = o.values.data() + off + s * seq;
                             const double* dp = o.grad.data() + off + s * seq;
                             double dot = 0.0;
                             for (std::size_t t = 0; t < seq; ++t) dot += p[t] * dp[t];
                             for (std::size_t t = 0; t < seq; ++t) dscore[t] = p[t] * (dp[t] - dot) * scale;
                             const std::size_t qrow = (b * seq + s) * width + h * dh;
                             for (std::size_t t = 0; t < seq; ++t) {
                               const std::size_t krow = (b * seq + t) * width + d + h * dh;
                               const double ds = dscore[t];
                               for (std::size_t j = 0; j < dh; ++j) {
                                 g[qrow + j] += ds * v[krow + j];
                                 g[krow + j] += ds * v[qrow + j];
                               }
                             }
                           }
                         }
                     });
}

Tensor attention_apply(const Tensor& probs, const Tensor& qkv, std::size_t batch, std::size_t seq,
                       std::size_t heads, std::optional<std::size_t> ordered_keys) {
  const std::size_t width = qkv.cols(), d = width / 3, dh = d / heads;
  if (probs.shape() != Shape{batch, heads, seq, seq} || qkv.rows() != batch * seq)
    throw DimensionError("attention_apply: probs " + shape_string(probs.shape()) + ", qkv " +
                         shape_string(qkv.shape()));
  const std::size_t fixed = std::min(ordered_keys.value_or(seq), seq);
  auto pv = probs.values();
  auto v = qkv.values();
  std::vector<double> out(batch * seq * d, 0.0);
  std::vector<std::size_t> tail(seq - fixed);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < seq; ++s) {
        const double* p = pv.data() + ((b * heads + h) * seq + s) * seq;
        double* dst = out.data() + (b * seq + s) * d + h * dh;
        auto value_row = [&](std::size_t t) { return v.data() + (b * seq + t) * width + 2 * d + h * dh; };
        for (std::size_t t = 0; t < fixed; ++t) {
          const double* val = value_row(t);
          for (std::size_t j = 0; j < dh; ++j) dst[j] += p[t] * val[j];
        }
        // Trailing keys in an order fixed by (probability, value) content.
        std::iota(tail.begin(), tail.end(), fixed);
        std::sort(tail.begin(), tail.end(), [&](std::size_t x, std::size_t y) {
          if (p[x] != p[y]) return p[x] < p[y];
          return std::lexicographical_compare(value_row(x), value_row(x) + dh, value_row(y), value_row(y) + dh);
        });
        for (std::size_t t : tail) {
          const double* val = value_row(t);
          for (std::size_t j = 0; j < dh; ++j) dst[j] += p[t] * val[j];
        }
      }
  auto pi = probs.impl().get();
  auto qi = qkv.impl().get();
  return make_result({batch * seq, d}, std::move(out), {&probs, &qkv},
                     [pi, qi, batch, seq, heads, d, dh, width](const TensorImpl& o) {
                       double* gp = pi->grad_target();
                       double* gq = qi->grad_target();
                       const double* v = qi->values.data();
                       const double* p = pi->values.data();
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t h = 0; h < heads; ++h)
                           for (std::size_t s = 0; s < seq; ++s) {
                             const std::size_t prow = ((b * heads + h) * seq + s) * seq;
                             const double* go = o.grad.data() + (b * seq + s) * d + h * dh;
                             for (std::size_t t = 0; t < seq; ++t) {
                               const std::size_t vrow = (b * seq + t) * width + 2 * d + h * dh;
                               if (gp) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < dh; ++j) acc += go[j] * v[vrow + j];
                                 gp[prow + t] += acc;
                               }
                               if (gq) {
                                 const double w = p[prow + t];
                                 for (std::size_t j = 0; j < dh; ++j) gq[vrow + j] += w * go[j];
                               }
                             }
                           }
                     });
}

Tensor concept_attention(const Tensor& probs, std::size_t num_patches, std::size_t num_concepts) {
  if (probs.rank() != 4 || probs.dim(2) != probs.dim(3) || probs.dim(2) != num_patches + num_concepts)
    throw DimensionError("concept_attention: probs shape " + shape_string(probs.shape()));
  const std::size_t batch = probs.dim(0), heads = probs.dim(1), seq = probs.dim(2);
  const double inv_heads = 1.0 / static_cast<double>(heads);
  auto pv = probs.values();
  std::vector<double> out(batch * num_concepts * num_patches, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < num_concepts; ++i) {
        const double* src = pv.data() + ((b * heads + h) * seq + num_patches + i) * seq;
        double* dst = out.data() + (b * num_concepts + i) * num_patches;
        for (std::size_t j = 0; j < num_patches; ++j) dst[j] += src[j] * inv_heads;
      }
  auto pi = probs.impl().get();
  return make_result({batch, num_concepts, num_patches}, std::move(out), {&probs},
                     [pi, batch, heads, seq, num_patches, num_concepts, inv_heads](const TensorImpl& o) {
                       double* g = pi->grad_target();
                       if (!g) return;
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t h = 0; h < heads; ++h)
                           for (std::size_t i = 0; i < num_concepts; ++i) {
                             double* dst = g + ((b * heads + h) * seq + num_patches + i) * seq;
                             const double* src = o.grad.data() + (b * num_concepts + i) * num_patches;
                             for (std::size_t j = 0; j < num_patches; ++j) dst[j] += src[j] * inv_heads;
                           }
                     });
}

// --- encoder --------------------------------------------------------------

VitEncoder::VitEncoder(const EncoderConfig& cfg, ParameterStore& store, Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.dim, hidden = cfg_.dim * cfg_.mlp_ratio;
  patch_weight_ = init_normal(store, rng, prefix + ".patch_embed.weight", {cfg_.patch_dim(), d}, cfg_.init_std);
  patch_bias_ = init_const(store, prefix + ".patch_embed.bias", {d}, 0.0);
  pos_embed_ = init_normal(store, rng, prefix + ".pos_embed", {cfg_.num_patches(), d}, cfg_.init_std);
  concept_tokens_ = init_normal(store, rng, prefix + ".concept_tokens", {cfg_.num_concepts, d}, cfg_.init_std);
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    const std::string name = prefix + ".block." + std::to_string(l);
    BlockParams b;
    b.norm1 = init_norm(store, name + ".norm1", d);
    b.qkv_weight = init_normal(store, rng, name + ".msa.qkv.weight", {d, 3 * d}, cfg_.init_std);
    b.qkv_bias = init_const(store, name + ".msa.qkv.bias", {3 * d}, 0.0);
    b.proj_weight = init_normal(store, rng, name + ".msa.proj.weight", {d, d}, cfg_.init_std);
    b.proj_bias = init_const(store, name + ".msa.proj.bias", {d}, 0.0);
    b.norm2 = init_norm(store, name + ".norm2", d);
    b.fc1_weight = init_normal(store, rng, name + ".mlp.fc1.weight", {d, hidden}, cfg_.init_std);
    b.fc1_bias = init_const(store, name + ".mlp.fc1.bias", {hidden}, 0.0);
    b.fc2_weight = init_normal(store, rng, name + ".mlp.fc2.weight", {hidden, d}, cfg_.init_std);
    b.fc2_bias = init_const(store, name + ".mlp.fc2.bias", {d}, 0.0);
    if (cfg_.adapter_enabled) {
      b.adapter_attn = init_adapter(store, rng, name + ".adapter_attn", d, cfg_.adapter_dim, cfg_.init_std);
      b.adapter_mlp = init_adapter(store, rng, name + ".adapter_mlp", d, cfg_.adapter_dim, cfg_.init_std);
    }
    blocks_.push_back(std::move(b));
  }
  if (cfg_.final_norm) final_norm_ = init_norm(store, prefix + ".norm", d);
}

Tensor VitEncoder::patch_embed(std::span<const Image> images) const {
  const std::size_t rows = images.size() * cfg_.num_patches();
  Tensor patches = Tensor::from({rows, cfg_.patch_dim()}, extract_patches(images, cfg_));
  return add_rows(linear(patches, patch_weight_, patch_bias_), pos_embed_);
}

Tensor VitEncoder::build_input_sequence(const Tensor& patches, std::size_t batch) const {
  const std::size_t hw = cfg_.num_patches();
  if (patches.cols() != concept_tokens_.cols())
    throw DimensionError("build_input_sequence: patch width " + std::to_string(patches.cols()) +
                         " vs concept width " + std::to_string(concept_tokens_.cols()));
  if (patches.rows() != batch * hw)
    throw DimensionError("build_input_sequence: expected " + std::to_string(batch * hw) + " patch rows");
  std::vector<Tensor> parts;
  parts.reserve(2 * batch);
  for (std::size_t b = 0; b < batch; ++b) {
    parts.push_back(batch == 1 ? patches : slice_rows(patches, b * hw, (b + 1) * hw));
    parts.push_back(concept_tokens_);
  }
  return concat_rows(parts);
}

AttentionOutput VitEncoder::msa_forward(std::size_t layer, const Tensor& z, std::size_t batch) const {
  const BlockParams& b = blocks_.at(layer);
  Tensor qkv = linear(z, b.qkv_weight, b.qkv_bias);
  Tensor probs = attention_probs(qkv, batch, cfg_.seq_len(), cfg_.heads, cfg_.num_patches());
  Tensor mixed = attention_apply(probs, qkv, batch, cfg_.seq_len(), cfg_.heads, cfg_.num_patches());
  return {linear(mixed, b.proj_weight, b.proj_bias), probs};
}

Tensor VitEncoder::adapter_forward(const AdapterParams& adapter, const Tensor& z) const {
  if (!adapter.down.defined()) throw ContractError("adapter_forward: adapters are disabled");
  Tensor normed = layer_norm(z, adapter.norm.gamma, adapter.norm.beta);
  return scale_by(matmul(gelu(matmul(normed, adapter.down)), adapter.up), adapter.scale);
}

AttentionOutput VitEncoder::block_forward(std::size_t layer, const Tensor& z, std::size_t batch) const {
  const BlockParams& b = blocks_.at(layer);
  auto [attn_out, probs] = msa_forward(layer, layer_norm(z, b.norm1.gamma, b.norm1.beta), batch);
  Tensor mid = add(attn_out, z);
  if (cfg_.adapter_enabled) mid = add(adapter_forward(b.adapter_attn, attn_out), mid);
  Tensor hidden = gelu(linear(layer_norm(mid, b.norm2.gamma, b.norm2.beta), b.fc1_weight, b.fc1_bias));
  Tensor mlp_out = linear(hidden, b.fc2_weight, b.fc2_bias);
  Tensor out = add(mlp_out, mid);
  if (cfg_.adapter_enabled) out = add(adapter_forward(b.adapter_mlp, mlp_out), out);
  return {out, probs};
}

EncoderOutput VitEncoder::encode(std::span<const Image> images) const {
  const std::size_t batch = images.size();
  if (batch == 0) throw DimensionError("encode: empty batch");
  const std::size_t hw = cfg_.num_patches(), m = cfg_.num_concepts, s = cfg_.seq_len();
  Tensor z = build_input_sequence(patch_embed(images), batch);
  Tensor last_probs;
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    auto out = block_forward(l, z, batch);
    z = out.output;
    last_probs = out.probs;
  }
  std::vector<Tensor> concepts;
  concepts.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) concepts.push_back(slice_rows(z, b * s + hw, (b + 1) * s));
  EncoderOutput result;
  Tensor features = concat_rows(concepts);
  if (cfg_.final_norm) features = layer_norm(features, final_norm_.gamma, final_norm_.beta);
  result.concept_features = reshape(features, {batch, m, cfg_.dim});
  result.attention = last_probs.defined() ? concept_attention(last_probs, hw, m) : Tensor::zeros({batch, m, hw});
  return result;
}

}  // namespace concepthash
