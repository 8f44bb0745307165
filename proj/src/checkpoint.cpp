// SPDX-License-Identifier: Apache-2.0
#include "concepthash/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <utility>

#include "concepthash/binary_io.hpp"
#include "concepthash/errors.hpp"

namespace concepthash {

using nlohmann::json;

namespace {
constexpr std::pair<const char*, std::size_t EncoderConfig::*> kEncoderFields[] = {
    {"image_size", &EncoderConfig::image_size}, {"patch_size", &EncoderConfig::patch_size},
    {"channels", &EncoderConfig::channels},     {"depth", &EncoderConfig::depth},
    {"dim", &EncoderConfig::dim},               {"heads", &EncoderConfig::heads},
    {"mlp_ratio", &EncoderConfig::mlp_ratio},   {"num_concepts", &EncoderConfig::num_concepts},
    {"adapter_dim", &EncoderConfig::adapter_dim},
};
}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  const EncoderConfig& e = cfg.encoder;
  return {{"K", cfg.bits},
          {"classes", cfg.classes},
          {"center_mode", to_string(cfg.center_mode)},
          {"encoder",
           {{"image_size", e.image_size},
            {"patch_size", e.patch_size},
            {"channels", e.channels},
            {"depth", e.depth},
            {"dim", e.dim},
            {"heads", e.heads},
            {"mlp_ratio", e.mlp_ratio},
            {"num_concepts", e.num_concepts},
            {"adapter_dim", e.adapter_dim},
            {"adapter_enabled", e.adapter_enabled},
            {"final_norm", e.final_norm},
            {"pixel_mean", e.pixel_mean},
            {"pixel_std", e.pixel_std},
            {"init_std", e.init_std}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  std::string field;
  try {
    field = "K";
    cfg.bits = j.at("K").get<std::size_t>();
    field = "classes";
    cfg.classes = j.at("classes").get<std::size_t>();
    field = "center_mode";
    cfg.center_mode = parse_center_mode(j.at("center_mode").get<std::string>());
    const json& e = j.at("encoder");
    for (const auto& [key, member] : kEncoderFields) {
      field = std::string("encoder.") + key;
      cfg.encoder.*member = e.at(key).get<std::size_t>();
    }
    field = "encoder.adapter_enabled";
    cfg.encoder.adapter_enabled = e.at("adapter_enabled").get<bool>();
    field = "encoder.final_norm";
    cfg.encoder.final_norm = e.at("final_norm").get<bool>();
    field = "encoder.pixel_mean";
    cfg.encoder.pixel_mean = e.at("pixel_mean").get<double>();
    field = "encoder.pixel_std";
    cfg.encoder.pixel_std = e.at("pixel_std").get<double>();
    field = "encoder.init_std";
    cfg.encoder.init_std = e.at("init_std").get<double>();
  } catch (const json::exception& ex) {
    throw ConfigError("checkpoint model config, field " + field + ": " + ex.what());
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const ConceptHashModel& model, std::uint64_t seed,
                     const json& extra) {
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters().all()) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.tensor.shape()},
                        {"offset", offset},
                        {"count", p.tensor.size()},
                        {"trainable", p.trainable}});
    offset += p.tensor.size();
  }
  const json header = {
      {"model", model_config_to_json(model.config())}, {"seed", seed}, {"extra", extra}, {"parameters", manifest}};
  const std::string text = header.dump();

  ByteWriter out;
  out.raw(Checkpoint::kMagic, 4);
  out.u32(Checkpoint::kVersion);
  out.u64(text.size());
  out.raw(text.data(), text.size());
  for (const auto& p : model.parameters().all())
    for (double v : p.tensor.values()) out.f32(static_cast<float>(v));
  write_file_bytes(path, out.bytes());
}

namespace {
LoadedCheckpoint restore(const json& header, ByteReader& in, const std::string& where);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), Checkpoint::kMagic, 4) != 0)
    throw BadMagicError(where + ": bad magic (expected \"CHCK\")");
  ByteReader in(bytes);
  in.skip(4);
  const auto version = in.u32();
  if (version != Checkpoint::kVersion) throw DataError(where + ": unsupported version " + std::to_string(version));
  const auto header_len = in.u64();
  if (header_len > in.remaining()) throw TruncatedError(where + ": header extends past end of file");
  json header;
  try {
    header = json::parse(in.string(static_cast<std::size_t>(header_len)));
  } catch (const json::exception& e) {
    throw DataError(where + ": unreadable header: " + e.what());
  }

  try {
    return restore(header, in, where);
  } catch (const json::exception& e) {
    throw DataError(where + ": malformed header: " + e.what());
  }
}

namespace {

LoadedCheckpoint restore(const json& header, ByteReader& in, const std::string& where) {
  LoadedCheckpoint out;
  const ModelConfig cfg = model_config_from_json(header.at("model"));
  out.seed = header.value("seed", std::uint64_t{0});
  out.extra = header.value("extra", json::object());
  const json& manifest = header.at("parameters");

  // Language mode needs an embedding table of the right shape; its values
  // are overwritten below like every other parameter.
  TextEmbeddingFile placeholder;
  if (cfg.center_mode == CenterMode::language) {
    for (const auto& entry : manifest)
      if (entry.at("name") == "centers.text_embeddings") {
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2) throw DataError(where + ": text embedding parameter is not a matrix");
        placeholder.classes = shape[0];
        placeholder.dim = shape[1];
        placeholder.matrix.assign(shape[0] * shape[1], 0.0F);
        placeholder.class_names.assign(shape[0], "");
      }
    if (placeholder.classes == 0) throw DataError(where + ": language mode without text embeddings");
  }
  out.model = std::make_unique<ConceptHashModel>(cfg, out.seed, &placeholder);

  auto& params = out.model->parameters().all();
  if (manifest.size() != params.size())
    throw CountMismatchError(where + ": " + std::to_string(manifest.size()) + " parameters stored, model has " +
                             std::to_string(params.size()));
  const std::size_t data_start = in.position();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& entry = manifest[i];
    auto& p = params[i];
    if (entry.at("name").get<std::string>() != p.name || entry.at("shape").get<Shape>() != p.tensor.shape())
      throw DataError(where + ": parameter " + std::to_string(i) + " is " + entry.at("name").get<std::string>() +
                      ", expected " + p.name + " " + shape_string(p.tensor.shape()));
    const auto offset = entry.at("offset").get<std::size_t>();
    if (in.position() != data_start + 4 * offset) throw DataError(where + ": non-contiguous parameter offsets");
    for (double& v : p.tensor.mutable_values()) v = static_cast<double>(in.f32());
  }
  if (in.remaining() != 0) throw CountMismatchError(where + ": trailing bytes after parameter data");
  return out;
}

}  // namespace

void round_parameters_to_f32(ParameterStore& store) {
  for (auto& p : store.all())
    for (double& v : p.tensor.mutable_values()) v = static_cast<double>(static_cast<float>(v));
}

std::string file_checksum(const std::filesystem::path& path) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char b : read_file_bytes(path)) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace concepthash
