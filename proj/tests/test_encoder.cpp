// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "concepthash/encoder.hpp"
#include "concepthash/errors.hpp"
#include "test_util.hpp"

using namespace concepthash;

namespace {

// Plain dense row-major matrices and straight-line kernels used as oracles.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  static Mat of(const Tensor& t, std::size_t r, std::size_t c) {
    Mat m(r, c);
    std::copy(t.values().begin(), t.values().end(), m.v.begin());
    return m;
  }
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j)
      for (std::size_t t = 0; t < a.cols; ++t) c(i, j) += a(i, t) * b(t, j);
  return c;
}

Mat plus(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < c.v.size(); ++i) c.v[i] += b.v[i];
  return c;
}

Mat add_bias(Mat a, const Tensor& bias) {
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) a(i, j) += bias[j];
  return a;
}

Mat affine(const Mat& x, const Tensor& w, const Tensor& b) { return add_bias(mm(x, Mat::of(w, x.cols, b.size())), b); }

Mat ln(const Mat& x, const LayerNormParams& p) {
  Mat y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double m = 0.0, var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) m += x(i, j);
    m /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) var += (x(i, j) - m) * (x(i, j) - m);
    var /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) y(i, j) = (x(i, j) - m) / std::sqrt(var + 1e-5) * p.gamma[j] + p.beta[j];
  }
  return y;
}

Mat gelu_m(Mat x) {
  for (auto& e : x.v) e = 0.5 * e * (1.0 + std::erf(e / std::numbers::sqrt2));
  return x;
}

struct AttnOracle {
  Mat out;                        // S x D, after projection
  std::vector<double> probs;      // heads x S x S
};

AttnOracle msa_oracle(const Mat& z, const BlockParams& b, std::size_t heads) {
  const std::size_t s = z.rows, d = z.cols, dh = d / heads;
  const Mat qkv = affine(z, b.qkv_weight, b.qkv_bias);
  AttnOracle r;
  r.probs.assign(heads * s * s, 0.0);
  Mat mixed(s, d);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> logits(s);
      for (std::size_t t = 0; t < s; ++t) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dh; ++j) dot += qkv(i, h * dh + j) * qkv(t, d + h * dh + j);
        logits[t] = dot / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (auto& l : logits) total += (l = std::exp(l - mx));
      for (std::size_t t = 0; t < s; ++t) {
        const double p = logits[t] / total;
        r.probs[(h * s + i) * s + t] = p;
        for (std::size_t j = 0; j < dh; ++j) mixed(i, h * dh + j) += p * qkv(t, 2 * d + h * dh + j);
      }
    }
  r.out = affine(mixed, b.proj_weight, b.proj_bias);
  return r;
}

Mat adapter_oracle(const Mat& z, const AdapterParams& a) {
  Mat h = gelu_m(mm(ln(z, a.norm), Mat::of(a.down, a.down.rows(), a.down.cols())));
  Mat out = mm(h, Mat::of(a.up, a.up.rows(), a.up.cols()));
  for (auto& e : out.v) e *= a.scale[0];
  return out;
}

// The four block update rules, transcribed literally.
Mat block_oracle(const Mat& z_prev, const BlockParams& b, std::size_t heads, bool adapters) {
  const Mat z_hat = msa_oracle(ln(z_prev, b.norm1), b, heads).out;
  Mat z_hathat = plus(z_hat, z_prev);
  if (adapters) z_hathat = plus(adapter_oracle(z_hat, b.adapter_attn), z_hathat);
  const Mat z_tilde = affine(gelu_m(affine(ln(z_hathat, b.norm2), b.fc1_weight, b.fc1_bias)), b.fc2_weight, b.fc2_bias);
  Mat out = plus(z_tilde, z_hathat);
  if (adapters) out = plus(adapter_oracle(z_tilde, b.adapter_mlp), out);
  return out;
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.image_size = 16;
  c.patch_size = 8;
  c.channels = 3;
  c.depth = 2;
  c.dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.num_concepts = 3;
  c.adapter_dim = 4;
  c.init_std = 0.3;
  return c;
}

Image random_image(const EncoderConfig& c, std::uint64_t seed) {
  Image img(c.channels, c.image_size, c.image_size);
  img.pixels = testutil::random_values(img.pixels.size(), seed, 0.0, 1.0);
  return img;
}

void set_all(ParameterStore& store, const std::string& prefix, double value) {
  for (auto& p : store.all())
    if (p.name.rfind(prefix, 0) == 0)
      for (auto& v : p.tensor.mutable_values()) v = value;
}

void copy_shared(const ParameterStore& from, ParameterStore& to) {
  for (auto& p : to.all()) {
    if (!from.contains(p.name)) continue;
    auto src = from.get(p.name).tensor.values();
    std::copy(src.begin(), src.end(), p.tensor.mutable_values().begin());
  }
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.grid() == 2);
  CHECK(c.num_patches() == 4);
  CHECK(c.seq_len() == 7);

  EncoderConfig bad = c;
  bad.image_size = 20;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.num_concepts = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.adapter_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.adapter_enabled = false;
  CHECK_NOTHROW(bad.validate());

  EncoderConfig desk;
  CHECK(desk.image_size == 32);
  CHECK(desk.num_patches() == 16);
  CHECK(desk.depth == 4);
  CHECK(desk.dim == 64);
  CHECK(desk.adapter_dim == 16);
  CHECK(EncoderConfig::kFullScaleAdapterDim == 384);
}

TEST_CASE("patch_embed") {
  SUBCASE("16x16 image with patch 4 gives 16 tokens") {
    EncoderConfig c = tiny_config();
    c.patch_size = 4;
    ParameterStore store;
    Rng rng(1);
    VitEncoder enc(c, store, rng);
    const Image img = random_image(c, 2);
    const Tensor t = enc.patch_embed(std::span(&img, 1));
    CHECK(t.shape() == Shape{16, c.dim});
  }
  SUBCASE("zero weights and zero positions give zeros") {
    EncoderConfig c = tiny_config();
    ParameterStore store;
    Rng rng(1);
    VitEncoder enc(c, store, rng);
    set_all(store, "encoder.patch_embed", 0.0);
    set_all(store, "encoder.pos_embed", 0.0);
    const Image img(c.channels, c.image_size, c.image_size, 0.0);
    for (double v : testutil::to_vector(enc.patch_embed(std::span(&img, 1)))) CHECK(v == 0.0);
  }
  SUBCASE("each row is W flatten(patch) + bias + pos") {
    EncoderConfig c = tiny_config();
    ParameterStore store;
    Rng rng(3);
    VitEncoder enc(c, store, rng);
    set_all(store, "encoder.patch_embed.bias", 0.25);
    const Image img = random_image(c, 4);
    const Tensor t = enc.patch_embed(std::span(&img, 1));
    const Tensor w = store.get("encoder.patch_embed.weight").tensor;
    const Tensor pos = store.get("encoder.pos_embed").tensor;
    const std::size_t p = c.patch_size;
    for (std::size_t gy = 0; gy < 2; ++gy)
      for (std::size_t gx = 0; gx < 2; ++gx) {
        std::vector<double> flat;
        for (std::size_t ch = 0; ch < c.channels; ++ch)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x)
              flat.push_back((img.at(ch, gy * p + y, gx * p + x) - c.pixel_mean) / c.pixel_std);
        const std::size_t row = gy * 2 + gx;
        for (std::size_t j = 0; j < c.dim; ++j) {
          double e = 0.25 + pos.at(row, j);
          for (std::size_t k = 0; k < flat.size(); ++k) e += flat[k] * w.at(k, j);
          CHECK(t.at(row, j) == doctest::Approx(e).epsilon(1e-13));
        }
      }
  }
  SUBCASE("mismatched image size is rejected") {
    EncoderConfig c = tiny_config();
    ParameterStore store;
    Rng rng(1);
    VitEncoder enc(c, store, rng);
    const Image img(c.channels, 8, 8);
    CHECK_THROWS_AS(enc.patch_embed(std::span(&img, 1)), DimensionError);
    const Image gray(1, c.image_size, c.image_size);
    CHECK_THROWS_AS(enc.patch_embed(std::span(&gray, 1)), DimensionError);
  }
}

TEST_CASE("build_input_sequence appends the concept tokens after the patches") {
  EncoderConfig c = tiny_config();
  ParameterStore store;
  Rng rng(5);
  VitEncoder enc(c, store, rng);
  const Tensor patches = testutil::random_leaf({2 * 4, c.dim}, 6);
  const Tensor seq = enc.build_input_sequence(patches, 2);
  REQUIRE(seq.shape() == Shape{2 * 7, c.dim});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < c.dim; ++j) {
      for (std::size_t i = 0; i < 4; ++i) CHECK(seq.at(b * 7 + i, j) == patches.at(b * 4 + i, j));
      for (std::size_t m = 0; m < 3; ++m) CHECK(seq.at(b * 7 + 4 + m, j) == enc.concept_tokens().at(m, j));
    }
  CHECK_THROWS_AS(enc.build_input_sequence(testutil::random_leaf({8, c.dim + 1}, 7), 2), DimensionError);
}

TEST_CASE("msa_forward matches a brute-force attention oracle") {
  EncoderConfig c = tiny_config();
  ParameterStore store;
  Rng rng(8);
  VitEncoder enc(c, store, rng);
  const std::size_t s = c.seq_len();
  const Tensor z = testutil::random_leaf({s, c.dim}, 9);
  const auto out = enc.msa_forward(0, z, 1);
  const auto oracle = msa_oracle(Mat::of(z, s, c.dim), enc.block(0), c.heads);
  for (std::size_t i = 0; i < oracle.out.v.size(); ++i)
    CHECK(out.output[i] == doctest::Approx(oracle.out.v[i]).epsilon(1e-12));
  REQUIRE(out.probs.shape() == Shape{1, c.heads, s, s});
  for (std::size_t i = 0; i < oracle.probs.size(); ++i)
    CHECK(out.probs[i] == doctest::Approx(oracle.probs[i]).epsilon(1e-12));
}

TEST_CASE("attention_probs special cases") {
  SUBCASE("a single token attends to itself") {
    const Tensor qkv = testutil::random_leaf({1, 12}, 10);
    const Tensor p = attention_probs(qkv, 1, 1, 2);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 1.0);
  }
  SUBCASE("identical tokens give uniform rows") {
    const auto row = testutil::random_values(12, 11);
    std::vector<double> v;
    for (int i = 0; i < 5; ++i) v.insert(v.end(), row.begin(), row.end());
    const Tensor p = attention_probs(Tensor::from({5, 12}, v), 1, 5, 2);
    for (double e : p.values()) CHECK(e == doctest::Approx(0.2).epsilon(1e-14));
  }
  SUBCASE("shifting every key by the same vector leaves the probabilities unchanged") {
    // q . (k + w) = q . k + q . w: the same offset for every key of a query row.
    const std::size_t s = 6, d = 8;
    auto v = testutil::random_values(s * 3 * d, 12, -2.0, 2.0);
    const Tensor base = attention_probs(Tensor::from({s, 3 * d}, v), 1, s, 2);
    const auto w = testutil::random_values(d, 13, -3.0, 3.0);
    for (std::size_t t = 0; t < s; ++t)
      for (std::size_t j = 0; j < d; ++j) v[t * 3 * d + d + j] += w[j];
    const Tensor shifted = attention_probs(Tensor::from({s, 3 * d}, v), 1, s, 2);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base[i] - shifted[i]) <= 1e-12);
  }
}

TEST_CASE("trailing keys are summed in a content order") {
  const std::size_t seq = 6, heads = 2, width = 12;  // D = 4, two trailing keys
  const auto base = testutil::random_values(seq * width, 40);
  std::vector<double> swapped = base;
  std::swap_ranges(swapped.begin() + 4 * width, swapped.begin() + 5 * width, swapped.begin() + 5 * width);
  const Tensor a = Tensor::from({seq, width}, base), b = Tensor::from({seq, width}, swapped);

  const Tensor pa = attention_probs(a, 1, seq, heads, 4), pb = attention_probs(b, 1, seq, heads, 4);
  const Tensor plain = attention_probs(a, 1, seq, heads);
  auto slot = [](std::size_t t) { return t == 4 ? 5 : t == 5 ? 4 : t; };
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t s = 0; s < seq; ++s)
      for (std::size_t t = 0; t < seq; ++t) {
        const std::size_t i = (h * seq + s) * seq + t;
        CHECK(pb[(h * seq + slot(s)) * seq + slot(t)] == pa[i]);
        CHECK(std::abs(plain[i] - pa[i]) <= 1e-15);
      }
  const Tensor oa = attention_apply(pa, a, 1, seq, heads, 4), ob = attention_apply(pb, b, 1, seq, heads, 4);
  for (std::size_t s = 0; s < seq; ++s)
    for (std::size_t j = 0; j < 4; ++j) CHECK(ob[slot(s) * 4 + j] == oa[s * 4 + j]);
}

TEST_CASE("adapter_forward") {
  EncoderConfig c = tiny_config();
  ParameterStore store;
  Rng rng(14);
  VitEncoder enc(c, store, rng);
  const Tensor z = testutil::random_leaf({5, c.dim}, 15);
  const AdapterParams& a = enc.block(1).adapter_mlp;

  const Tensor out = enc.adapter_forward(a, z);
  const Mat oracle = adapter_oracle(Mat::of(z, 5, c.dim), a);
  for (std::size_t i = 0; i < oracle.v.size(); ++i) CHECK(out[i] == doctest::Approx(oracle.v[i]).epsilon(1e-12));

  set_all(store, "encoder.block.1.adapter_mlp.scale", 0.0);
  for (double v : testutil::to_vector(enc.adapter_forward(a, z))) CHECK(v == 0.0);
  set_all(store, "encoder.block.1.adapter_mlp.scale", 0.1);
  set_all(store, "encoder.block.1.adapter_mlp.up", 0.0);
  for (double v : testutil::to_vector(enc.adapter_forward(a, z))) CHECK(v == 0.0);
}

TEST_CASE("block_forward follows the four block update rules") {
  for (bool adapters : {true, false}) {
    CAPTURE(adapters);
    EncoderConfig c = tiny_config();
    c.adapter_enabled = adapters;
    ParameterStore store;
    Rng rng(16);
    VitEncoder enc(c, store, rng);
    // Non-trivial norms so that gamma/beta placement is exercised.
    for (auto& p : store.all())
      if (p.name.find("gamma") != std::string::npos || p.name.find("beta") != std::string::npos) {
        auto vals = testutil::random_values(p.tensor.size(), p.tensor.size() + p.name.size(), 0.5, 1.5);
        std::copy(vals.begin(), vals.end(), p.tensor.mutable_values().begin());
      }
    const std::size_t s = c.seq_len();
    const Tensor z = testutil::random_leaf({s, c.dim}, 17);
    const auto out = enc.block_forward(1, z, 1);
    const Mat oracle = block_oracle(Mat::of(z, s, c.dim), enc.block(1), c.heads, adapters);
    for (std::size_t i = 0; i < oracle.v.size(); ++i)
      CHECK(out.output[i] == doctest::Approx(oracle.v[i]).epsilon(1e-11));
  }
}

TEST_CASE("adapters with s = 0 reproduce the adapter-free block") {
  EncoderConfig on = tiny_config();
  EncoderConfig off = on;
  off.adapter_enabled = false;
  ParameterStore store_on, store_off;
  Rng r1(18), r2(19);
  VitEncoder enc_on(on, store_on, r1);
  VitEncoder enc_off(off, store_off, r2);
  copy_shared(store_on, store_off);
  for (auto& p : store_on.all())
    if (p.name.find(".scale") != std::string::npos) p.tensor.mutable_values()[0] = 0.0;
  const Image img = random_image(on, 20);
  const auto a = enc_on.encode(std::span(&img, 1));
  const auto b = enc_off.encode(std::span(&img, 1));
  for (std::size_t i = 0; i < a.concept_features.size(); ++i)
    CHECK(a.concept_features[i] == doctest::Approx(b.concept_features[i]).epsilon(1e-14));
}

TEST_CASE("zero residual branches return the input tokens") {
  EncoderConfig c = tiny_config();
  c.adapter_enabled = false;
  c.final_norm = false;
  ParameterStore store;
  Rng rng(21);
  VitEncoder enc(c, store, rng);
  const std::size_t s = c.seq_len();

  set_all(store, "encoder.block.", 0.0);
  const Tensor z = testutil::random_leaf({s, c.dim}, 22);
  const auto out = enc.block_forward(0, z, 1);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(out.output[i] == z[i]);

  const Image img = random_image(c, 23);
  const auto e = enc.encode(std::span(&img, 1));
  for (std::size_t i = 0; i < enc.concept_tokens().size(); ++i) CHECK(e.concept_features[i] == enc.concept_tokens()[i]);
}

TEST_CASE("depth 0 encodes to the concept tokens") {
  EncoderConfig c = tiny_config();
  c.depth = 0;
  c.final_norm = false;
  ParameterStore store;
  Rng rng(24);
  VitEncoder enc(c, store, rng);
  const Image img = random_image(c, 25);
  const auto e = enc.encode(std::span(&img, 1));
  CHECK(e.concept_features.shape() == Shape{1, 3, c.dim});
  CHECK(e.attention.shape() == Shape{1, 3, 4});
  for (std::size_t i = 0; i < enc.concept_tokens().size(); ++i) CHECK(e.concept_features[i] == enc.concept_tokens()[i]);
}

TEST_CASE("encode shapes, attention rows and determinism") {
  EncoderConfig c = tiny_config();
  std::vector<Image> images{random_image(c, 26), random_image(c, 27)};
  ParameterStore s1, s2;
  Rng r1(28), r2(28);
  VitEncoder e1(c, s1, r1), e2(c, s2, r2);
  const auto a = e1.encode(images);
  const auto b = e2.encode(images);
  CHECK(a.concept_features.shape() == Shape{2, c.num_concepts, c.dim});
  CHECK(a.attention.shape() == Shape{2, c.num_concepts, c.num_patches()});
  for (std::size_t i = 0; i < a.concept_features.size(); ++i) CHECK(a.concept_features[i] == b.concept_features[i]);
  for (std::size_t i = 0; i < a.attention.size(); ++i) CHECK(a.attention[i] == b.attention[i]);

  // Each concept row of the head-averaged slice is a partial sum of a
  // probability row: nonnegative and at most 1.
  for (std::size_t r = 0; r < 2 * c.num_concepts; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < c.num_patches(); ++j) {
      CHECK(a.attention[r * c.num_patches() + j] >= 0.0);
      total += a.attention[r * c.num_patches() + j];
    }
    CHECK(total <= 1.0 + 1e-12);
    CHECK(total > 0.0);
  }

  // Full probability rows sum to one per head.
  const Tensor seq = e1.build_input_sequence(e1.patch_embed(images), 2);
  const auto probs = e1.msa_forward(0, seq, 2).probs;
  const std::size_t s = c.seq_len();
  for (std::size_t r = 0; r < 2 * c.heads * s; ++r) {
    double total = 0.0;
    for (std::size_t t = 0; t < s; ++t) total += probs[r * s + t];
    CHECK(std::abs(total - 1.0) <= 1e-10);
  }
}

TEST_CASE("concept_attention averages heads over the patch columns without renormalizing") {
  const std::size_t hw = 2, m = 1, s = 3;
  // B = 1, heads = 2; row 2 (the concept query) is [0.2 0.3 0.5] and [0.4 0.4 0.2].
  std::vector<double> p(2 * s * s, 0.0);
  const double r0[] = {0.2, 0.3, 0.5}, r1[] = {0.4, 0.4, 0.2};
  std::copy(r0, r0 + 3, p.begin() + 2 * s);
  std::copy(r1, r1 + 3, p.begin() + s * s + 2 * s);
  const Tensor a = concept_attention(Tensor::from({1, 2, s, s}, p), hw, m);
  CHECK(a.shape() == Shape{1, 1, 2});
  CHECK(a[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.35).epsilon(1e-15));
}

TEST_CASE("permuting concept tokens permutes features and attention") {
  EncoderConfig c = tiny_config();
  ParameterStore store;
  Rng rng(29);
  VitEncoder enc(c, store, rng);
  std::vector<Image> images{random_image(c, 30), random_image(c, 31)};
  const auto before = enc.encode(images);

  const std::size_t perm[] = {2, 0, 1};  // new row i holds old row perm[i]
  auto tokens = store.get("encoder.concept_tokens").tensor.mutable_values();
  const std::vector<double> old(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < 3; ++i)
    std::copy(old.begin() + perm[i] * c.dim, old.begin() + (perm[i] + 1) * c.dim, tokens.begin() + i * c.dim);
  const auto after = enc.encode(images);

  double worst = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < c.dim; ++j)
        worst = std::max(worst, std::abs(after.concept_features[(b * 3 + i) * c.dim + j] -
                                         before.concept_features[(b * 3 + perm[i]) * c.dim + j]));
      for (std::size_t j = 0; j < 4; ++j)
        worst = std::max(worst, std::abs(after.attention[(b * 3 + i) * 4 + j] - before.attention[(b * 3 + perm[i]) * 4 + j]));
    }
  // Concept keys are summed in a content-determined order, so this is bitwise.
  CHECK(worst == 0.0);
}

TEST_CASE("encoder gradients match finite differences") {
  EncoderConfig c = tiny_config();
  c.depth = 1;
  ParameterStore store;
  Rng rng(32);
  VitEncoder enc(c, store, rng);
  std::vector<Image> images{random_image(c, 33), random_image(c, 34)};
  const auto weights = testutil::random_values(2 * 3 * c.dim, 35);
  const auto attn_weights = testutil::random_values(2 * 3 * 4, 36);
  auto objective = [&](const Tensor&) {
    const auto e = enc.encode(images);
    return add(weighted_sum(e.concept_features, weights), scale(weighted_sum(e.attention, attn_weights), 10.0));
  };
  for (const char* name : {"encoder.concept_tokens", "encoder.block.0.msa.qkv.weight", "encoder.block.0.adapter_attn.down",
                           "encoder.block.0.adapter_mlp.scale", "encoder.pos_embed", "encoder.norm.gamma"}) {
    CAPTURE(name);
    const auto report = grad_check(objective, store.get(name).tensor);
    CAPTURE(report.max_rel_error);
    CHECK(report.passed);
  }
}
