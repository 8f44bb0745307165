// SPDX-License-Identifier: Apache-2.0
#include "concepthash/run_config.hpp"

#include <fstream>

#include "concepthash/errors.hpp"

namespace concepthash {

using nlohmann::json;

std::filesystem::path RunConfig::checkpoint_path() const {
  if (!paths.checkpoint.empty()) return paths.checkpoint;
  return std::filesystem::path(paths.output_dir) / "model.chck";
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate();
  if (model.center_mode == CenterMode::language && paths.embeddings.empty())
    throw ConfigError("paths.embeddings: required when center_mode is \"language\"");
  if (uses_synthetic()) {
    synthetic.spec.validate();
    if (synthetic.spec.num_classes != model.classes)
      throw ConfigError("classes: " + std::to_string(model.classes) + " but synthetic.num_classes is " +
                        std::to_string(synthetic.spec.num_classes));
    if (synthetic.spec.image_size != model.encoder.image_size)
      throw ConfigError("synthetic.image_size: must equal encoder.image_size");
    if (synthetic.spec.channels != model.encoder.channels)
      throw ConfigError("synthetic.channels: must equal encoder.channels");
  }
  if (paths.output_dir.empty()) throw ConfigError("paths.output_dir: must not be empty");
}

json run_config_to_json(const RunConfig& c) {
  const auto& e = c.model.encoder;
  const auto& s = c.synthetic.spec;
  json parts = json::array();
  for (const auto& p : s.parts) parts.push_back({p.cx, p.cy});
  return {
      {"seed", c.seed},
      {"K", c.model.bits},
      {"M", e.num_concepts},
      {"classes", c.model.classes},
      {"center_mode", to_string(c.model.center_mode)},
      {"encoder",
       {{"image_size", e.image_size},
        {"patch_size", e.patch_size},
        {"channels", e.channels},
        {"depth", e.depth},
        {"dim", e.dim},
        {"heads", e.heads},
        {"mlp_ratio", e.mlp_ratio},
        {"adapter_dim", e.adapter_dim},
        {"adapter_enabled", e.adapter_enabled},
        {"final_norm", e.final_norm},
        {"pixel_mean", e.pixel_mean},
        {"pixel_std", e.pixel_std},
        {"init_std", e.init_std}}},
      {"loss",
       {{"tau", c.loss.tau},
        {"enable_quan", c.loss.enable_quan},
        {"enable_csd", c.loss.enable_csd},
        {"enable_cd", c.loss.enable_cd},
        {"weight_clf", c.loss.weight_clf},
        {"weight_quan", c.loss.weight_quan},
        {"weight_csd", c.loss.weight_csd},
        {"weight_cd", c.loss.weight_cd},
        {"csd_mode", to_string(c.loss.csd_mode)}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"momentum", c.train.momentum},
        {"weight_decay", c.train.weight_decay},
        {"warmup_epochs", c.train.warmup_epochs},
        {"eval_every", c.eval_every},
        {"augment",
         {{"enabled", c.train.augment.enabled},
          {"flip_probability", c.train.augment.flip_probability},
          {"min_scale", c.train.augment.min_scale},
          {"max_scale", c.train.augment.max_scale}}}}},
      {"synthetic",
       {{"num_classes", s.num_classes},
        {"images_per_class", s.images_per_class},
        {"image_size", s.image_size},
        {"channels", s.channels},
        {"glyph_size", s.glyph_size},
        {"parts", parts},
        {"jitter", s.jitter},
        {"noise", s.noise},
        {"background_amplitude", s.background_amplitude},
        {"glyph_seed", s.glyph_seed},
        {"classes_per_family", s.classes_per_family},
        {"train_seed", c.synthetic.train_seed},
        {"test_seed", c.synthetic.test_seed},
        {"test_images_per_class", c.synthetic.test_images_per_class}}},
      {"paths",
       {{"dataset", c.paths.dataset},
        {"test_dataset", c.paths.test_dataset},
        {"embeddings", c.paths.embeddings},
        {"checkpoint", c.paths.checkpoint},
        {"output_dir", c.paths.output_dir}}},
  };
}

namespace {

// Every key of `doc` must exist in `reference` (leaf arrays are opaque).
void check_known_keys(const json& doc, const json& reference, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError((prefix.empty() ? std::string("config") : prefix) + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string field = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError(field + ": unknown field");
    if (reference.at(key).is_object()) check_known_keys(value, reference.at(key), field);
  }
}

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  template <typename T>
  void get(const std::string& dotted, T& out) const {
    const json* node = &doc_;
    std::size_t start = 0;
    while (true) {
      const auto dot = dotted.find('.', start);
      node = &node->at(dotted.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (node->is_number_integer() && node->get<long long>() < 0) throw ConfigError(dotted + ": must be >= 0");
        if (!node->is_number_integer()) throw ConfigError(dotted + ": expected a non-negative integer");
      }
      out = node->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(dotted + ": " + e.what());
    }
  }

 private:
  const json& doc_;
};

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  const RunConfig defaults;
  json merged = run_config_to_json(defaults);
  check_known_keys(doc, merged, "");
  merged.merge_patch(doc);

  RunConfig c;
  Reader r(merged);
  r.get("seed", c.seed);
  r.get("K", c.model.bits);
  r.get("M", c.model.encoder.num_concepts);
  r.get("classes", c.model.classes);
  std::string mode;
  r.get("center_mode", mode);
  try {
    c.model.center_mode = parse_center_mode(mode);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("center_mode: ") + e.what());
  }
  auto& e = c.model.encoder;
  r.get("encoder.image_size", e.image_size);
  r.get("encoder.patch_size", e.patch_size);
  r.get("encoder.channels", e.channels);
  r.get("encoder.depth", e.depth);
  r.get("encoder.dim", e.dim);
  r.get("encoder.heads", e.heads);
  r.get("encoder.mlp_ratio", e.mlp_ratio);
  r.get("encoder.adapter_dim", e.adapter_dim);
  r.get("encoder.adapter_enabled", e.adapter_enabled);
  r.get("encoder.final_norm", e.final_norm);
  r.get("encoder.pixel_mean", e.pixel_mean);
  r.get("encoder.pixel_std", e.pixel_std);
  r.get("encoder.init_std", e.init_std);

  r.get("loss.tau", c.loss.tau);
  r.get("loss.enable_quan", c.loss.enable_quan);
  r.get("loss.enable_csd", c.loss.enable_csd);
  r.get("loss.enable_cd", c.loss.enable_cd);
  r.get("loss.weight_clf", c.loss.weight_clf);
  r.get("loss.weight_quan", c.loss.weight_quan);
  r.get("loss.weight_csd", c.loss.weight_csd);
  r.get("loss.weight_cd", c.loss.weight_cd);
  std::string csd;
  r.get("loss.csd_mode", csd);
  c.loss.csd_mode = parse_csd_mode(csd);

  r.get("train.epochs", c.train.epochs);
  r.get("train.batch_size", c.train.batch_size);
  r.get("train.lr", c.train.lr);
  r.get("train.momentum", c.train.momentum);
  r.get("train.weight_decay", c.train.weight_decay);
  r.get("train.warmup_epochs", c.train.warmup_epochs);
  r.get("train.eval_every", c.eval_every);
  r.get("train.augment.enabled", c.train.augment.enabled);
  r.get("train.augment.flip_probability", c.train.augment.flip_probability);
  r.get("train.augment.min_scale", c.train.augment.min_scale);
  r.get("train.augment.max_scale", c.train.augment.max_scale);
  c.train.seed = c.seed;

  auto& s = c.synthetic.spec;
  r.get("synthetic.num_classes", s.num_classes);
  r.get("synthetic.images_per_class", s.images_per_class);
  r.get("synthetic.image_size", s.image_size);
  r.get("synthetic.channels", s.channels);
  r.get("synthetic.glyph_size", s.glyph_size);
  r.get("synthetic.jitter", s.jitter);
  r.get("synthetic.noise", s.noise);
  r.get("synthetic.background_amplitude", s.background_amplitude);
  r.get("synthetic.glyph_seed", s.glyph_seed);
  r.get("synthetic.classes_per_family", s.classes_per_family);
  r.get("synthetic.train_seed", c.synthetic.train_seed);
  r.get("synthetic.test_seed", c.synthetic.test_seed);
  r.get("synthetic.test_images_per_class", c.synthetic.test_images_per_class);
  std::vector<std::vector<double>> parts;
  r.get("synthetic.parts", parts);
  s.parts.clear();
  for (const auto& p : parts) {
    if (p.size() != 2) throw ConfigError("synthetic.parts: each part is [cx, cy]");
    s.parts.push_back({p[0], p[1]});
  }

  r.get("paths.dataset", c.paths.dataset);
  r.get("paths.test_dataset", c.paths.test_dataset);
  r.get("paths.embeddings", c.paths.embeddings);
  r.get("paths.checkpoint", c.paths.checkpoint);
  r.get("paths.output_dir", c.paths.output_dir);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file " + path.string() + " cannot be opened");
  try {
    return run_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + assignment + ": expected key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("--set " + assignment + ": empty path component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig resolve_run_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config file " + config_path.string() + " cannot be opened");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + config_path.string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = run_config_from_json(doc);
  cfg.validate();
  return cfg;
}

}  // namespace concepthash
