// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <iterator>

#include "concepthash/binary_io.hpp"
#include "concepthash/checkpoint.hpp"
#include "concepthash/errors.hpp"
#include "test_util.hpp"

using namespace concepthash;

namespace {

ModelConfig small_config(CenterMode mode) {
  ModelConfig cfg;
  cfg.encoder.image_size = 16;
  cfg.encoder.patch_size = 8;
  cfg.encoder.depth = 1;
  cfg.encoder.dim = 8;
  cfg.encoder.heads = 2;
  cfg.encoder.mlp_ratio = 2;
  cfg.encoder.num_concepts = 2;
  cfg.encoder.adapter_dim = 4;
  cfg.encoder.init_std = 0.05;
  cfg.bits = 8;
  cfg.classes = 3;
  cfg.center_mode = mode;
  return cfg;
}

std::vector<char> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round trip for every center mode") {
  const auto dir = testutil::scratch_dir("checkpoint_rt");
  const TextEmbeddingFile emb = load_text_embeddings(testutil::fixture("fake_c3_d8.chem"));
  for (CenterMode mode : {CenterMode::language, CenterMode::random_orthogonal, CenterMode::learnable}) {
    CAPTURE(to_string(mode));
    ConceptHashModel model(small_config(mode), 11, &emb);
    round_parameters_to_f32(model.parameters());
    const nlohmann::json extra{{"epochs", 3}};
    save_checkpoint(dir / "m.chck", model, 11, extra);
    const LoadedCheckpoint back = load_checkpoint(dir / "m.chck");
    CHECK(back.seed == 11);
    CHECK(back.extra == extra);
    const ModelConfig& cfg = back.model->config();
    CHECK(cfg.center_mode == mode);
    CHECK(cfg.bits == 8);
    CHECK(cfg.encoder.init_std == 0.05);
    const auto& a = model.parameters().all();
    const auto& b = back.model->parameters().all();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(a[i].trainable == b[i].trainable);
      CHECK(testutil::to_vector(a[i].tensor) == testutil::to_vector(b[i].tensor));
    }
    CHECK(model.parameters().checksum() == back.model->parameters().checksum());

    // Same codes from the reloaded model.
    Image img(3, 16, 16);
    img.pixels = testutil::random_values(img.pixels.size(), 3, 0.0, 1.0);
    const std::vector<Image> one{img};
    CHECK(model.encode(one) == back.model->encode(one));
  }
}

TEST_CASE("f32 rounding is idempotent and close") {
  ParameterStore store;
  store.add("w", {3}, {0.1, 1.0 / 3.0, -2.5});
  round_parameters_to_f32(store);
  const auto once = testutil::to_vector(store.get("w").tensor);
  CHECK(once[0] == static_cast<double>(0.1f));
  CHECK(once[2] == -2.5);
  round_parameters_to_f32(store);
  CHECK(testutil::to_vector(store.get("w").tensor) == once);
}

TEST_CASE("malformed checkpoints are rejected") {
  const auto dir = testutil::scratch_dir("checkpoint_bad");
  ConceptHashModel model(small_config(CenterMode::random_orthogonal), 2);
  save_checkpoint(dir / "m.chck", model, 2);
  const auto good = read_all(dir / "m.chck");

  auto bytes = good;
  bytes[1] = 'X';
  write_all(dir / "magic.chck", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.chck"), BadMagicError);

  write_all(dir / "short_header.chck", std::vector<char>(good.begin(), good.begin() + 30));
  CHECK_THROWS_AS(load_checkpoint(dir / "short_header.chck"), TruncatedError);

  write_all(dir / "short_data.chck", std::vector<char>(good.begin(), good.end() - 6));
  CHECK_THROWS_AS(load_checkpoint(dir / "short_data.chck"), TruncatedError);

  bytes = good;
  bytes.push_back(0);
  write_all(dir / "trailing.chck", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "trailing.chck"), CountMismatchError);

  bytes = good;
  bytes[4] = 9;
  write_all(dir / "version.chck", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "version.chck"), DataError);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.chck"), DataError);
}

TEST_CASE("model config json") {
  ModelConfig cfg = small_config(CenterMode::learnable);
  const auto j = model_config_to_json(cfg);
  const ModelConfig back = model_config_from_json(j);
  CHECK(model_config_to_json(back) == j);
  auto broken = j;
  broken["K"] = "sixteen";
  CHECK_THROWS_AS(model_config_from_json(broken), ConfigError);
}

TEST_CASE("file checksum") {
  const auto dir = testutil::scratch_dir("checkpoint_sum");
  write_all(dir / "a", {'a'});
  write_all(dir / "empty", {});
  // FNV-1a 64 reference values.
  CHECK(file_checksum(dir / "empty") == "cbf29ce484222325");
  CHECK(file_checksum(dir / "a") == "af63dc4c8601ec8c");
}
