// SPDX-License-Identifier: Apache-2.0
#include "concepthash/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "concepthash/checkpoint.hpp"
#include "concepthash/errors.hpp"

namespace concepthash {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << fmt(values[r * cols + c]);
    out << '\n';
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<Image> images_of(const Dataset& data) {
  std::vector<Image> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(s.image);
  return out;
}

}  // namespace

DataSplits load_data(const RunConfig& cfg) {
  DataSplits d;
  if (cfg.uses_synthetic()) {
    d.train = synth_dataset_generate(cfg.synthetic.spec, cfg.synthetic.train_seed);
    if (cfg.synthetic.test_images_per_class > 0) {
      SyntheticSpec test_spec = cfg.synthetic.spec;
      test_spec.images_per_class = cfg.synthetic.test_images_per_class;
      d.test = synth_dataset_generate(test_spec, cfg.synthetic.test_seed);
    }
  } else {
    d.train = load_dataset_dir(cfg.paths.dataset);
    if (!cfg.paths.test_dataset.empty()) d.test = load_dataset_dir(cfg.paths.test_dataset);
  }
  return d;
}

json epoch_metrics_json(const EpochMetrics& m) {
  json terms = json::array({"clf"});
  json j = {{"epoch", m.epoch}, {"lr", m.lr}, {"loss", m.loss}, {"clf", m.clf}};
  if (m.has_quan) {
    j["quan"] = m.quan;
    terms.push_back("quan");
  }
  if (m.has_csd) {
    j["csd"] = m.csd;
    terms.push_back("csd");
  }
  if (m.has_cd) {
    j["cd"] = m.cd;
    terms.push_back("cd");
  }
  j["terms"] = terms;
  j["steps"] = m.steps;
  return j;
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  DataSplits data = load_data(cfg);
  std::optional<TextEmbeddingFile> embeddings;
  if (cfg.model.center_mode == CenterMode::language) embeddings = load_text_embeddings(cfg.paths.embeddings);

  ConceptHashModel model(cfg.model, cfg.seed, embeddings ? &*embeddings : nullptr);
  check_compatible(model, data.train);
  if (data.test) check_compatible(model, *data.test);

  auto test_map = [&]() {
    if (!data.test) return kNaN;
    const CodeDatabase gallery = build_code_database(model, data.train);
    const CodeDatabase queries = build_code_database(model, *data.test);
    return map_at_r(queries, gallery);
  };

  TrainOutcome outcome;
  const std::filesystem::path out_dir = cfg.paths.output_dir;
  std::filesystem::create_directories(out_dir);
  outcome.metrics_log = out_dir / "metrics.jsonl";
  outcome.checkpoint = cfg.checkpoint_path();
  outcome.initial_map = test_map();
  outcome.initial_correlation = mean_attention_correlation(model, data.train);
  if (progress)
    *progress << "epoch 0 (init): test mAP " << outcome.initial_map << ", attention correlation "
              << outcome.initial_correlation << '\n';

  std::ofstream log(outcome.metrics_log, std::ios::trunc);
  if (!log) throw DataError("cannot write " + outcome.metrics_log.string());
  SgdMomentum optimizer(model.parameters(), cfg.train.momentum, cfg.train.weight_decay);
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    EpochMetrics m = train_epoch(model, data.train, cfg.loss, cfg.train, epoch, optimizer);
    if (!std::isfinite(m.loss)) throw ContractError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    json line = epoch_metrics_json(m);
    if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) line["test_mAP"] = finite_or_null(test_map());
    log << line.dump() << '\n' << std::flush;
    if (progress) *progress << line.dump() << '\n' << std::flush;
    outcome.epochs.push_back(m);
  }

  json extra = run_config_to_json(cfg);
  extra.erase("paths");
  save_checkpoint(outcome.checkpoint, model, cfg.seed, {{"run_config", extra}});
  outcome.checkpoint_checksum = file_checksum(outcome.checkpoint);

  round_parameters_to_f32(model.parameters());
  outcome.final_map = test_map();
  outcome.final_correlation = mean_attention_correlation(model, data.train);
  outcome.final_localization = data.test ? mean_localization_error(model, *data.test) : kNaN;

  write_json(out_dir / "summary.json", {{"initial_test_mAP", finite_or_null(outcome.initial_map)},
                                        {"final_test_mAP", finite_or_null(outcome.final_map)},
                                        {"initial_attention_correlation", outcome.initial_correlation},
                                        {"final_attention_correlation", outcome.final_correlation},
                                        {"final_localization_error", finite_or_null(outcome.final_localization)},
                                        {"epochs", outcome.epochs.size()},
                                        {"checkpoint", outcome.checkpoint.string()},
                                        {"checkpoint_checksum", outcome.checkpoint_checksum}});
  if (progress)
    *progress << "final: test mAP " << outcome.final_map << ", attention correlation " << outcome.final_correlation
              << ", checkpoint " << outcome.checkpoint.string() << " (" << outcome.checkpoint_checksum << ")\n";
  return outcome;
}

std::size_t cmd_encode(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                       const std::filesystem::path& out, std::optional<std::size_t> expected_bits) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  if (expected_bits && *expected_bits != ck.model->config().bits)
    throw DimensionError("--bits " + std::to_string(*expected_bits) + " but checkpoint has K = " +
                         std::to_string(ck.model->config().bits));
  const Dataset data = load_dataset_dir(dataset);
  const CodeDatabase db = build_code_database(*ck.model, data);
  write_code_database(out, db);
  return db.size();
}

json cmd_eval(const EvalRequest& req) {
  if (req.queries.empty() || req.queries.size() != req.galleries.size())
    throw ConfigError("eval: need matching --query/--gallery pairs");
  json results = json::array();
  for (std::size_t i = 0; i < req.queries.size(); ++i) {
    const CodeDatabase q = read_code_database(req.queries[i]);
    const CodeDatabase g = read_code_database(req.galleries[i]);
    if (q.bits != g.bits)
      throw DimensionError("eval: query K = " + std::to_string(q.bits) + ", gallery K = " + std::to_string(g.bits));
    json entry = {{"K", q.bits}, {"queries", q.size()}, {"gallery", g.size()}, {"mAP", map_at_r(q, g, req.r)}};
    entry["family_mAP"] = req.family ? json(family_map(q, g, req.r)) : json(nullptr);
    results.push_back(std::move(entry));
  }
  json report = {{"mAP", results[0]["mAP"]},
                 {"family_mAP", results[0]["family_mAP"]},
                 {"R", req.r == 0 ? json("full") : json(req.r)},
                 {"results", results},
                 {"localization_error", nullptr},
                 {"correlation", nullptr},
                 {"mean_off_diagonal_correlation", nullptr}};

  if (!req.checkpoint.empty()) {
    if (req.attention_dataset.empty()) throw ConfigError("eval: --checkpoint needs --dataset for attention metrics");
    LoadedCheckpoint ck = load_checkpoint(req.checkpoint);
    const Dataset data = load_dataset_dir(req.attention_dataset);
    check_compatible(*ck.model, data);
    const std::size_t m = ck.model->config().num_concepts();
    const auto maps = ck.model->attention_maps(images_of(data));
    const auto corr = attention_correlation(Tensor::from({data.size(), m, ck.model->config().encoder.num_patches()}, maps));
    json matrix = json::array();
    for (std::size_t r = 0; r < m; ++r) matrix.push_back(std::vector<double>(corr.begin() + r * m, corr.begin() + (r + 1) * m));
    report["correlation"] = matrix;
    report["mean_off_diagonal_correlation"] = mean_off_diagonal(corr, m);
    report["localization_error"] = finite_or_null(mean_localization_error(*ck.model, data));
    if (!req.correlation_csv.empty()) write_csv(req.correlation_csv, corr, m, m);
  }
  if (!req.report.empty()) write_json(req.report, report);
  return report;
}

Image upsample_attention(std::span<const double> map, std::size_t grid, std::size_t size) {
  if (map.size() != grid * grid || grid == 0) throw DimensionError("upsample_attention: map is not grid x grid");
  Image img(1, size, size);
  const double ratio = static_cast<double>(grid) / static_cast<double>(size);
  const double max_idx = static_cast<double>(grid - 1);
  for (std::size_t y = 0; y < size; ++y) {
    const double sy = std::clamp((static_cast<double>(y) + 0.5) * ratio - 0.5, 0.0, max_idx);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, grid - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < size; ++x) {
      const double sx = std::clamp((static_cast<double>(x) + 0.5) * ratio - 0.5, 0.0, max_idx);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, grid - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = map[y0 * grid + x0] * (1 - fx) + map[y0 * grid + x1] * fx;
      const double bottom = map[y1 * grid + x0] * (1 - fx) + map[y1 * grid + x1] * fx;
      img.at(0, y, x) = top * (1 - fy) + bottom * fy;
    }
  }
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double low = *lo, span = *hi - *lo;
  for (auto& v : img.pixels) v = span > 0.0 ? (v - low) / span : 0.0;
  return img;
}

std::size_t cmd_attn(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                     const std::filesystem::path& out, std::size_t max_images) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  Dataset data = load_dataset_dir(dataset);
  if (max_images > 0 && data.samples.size() > max_images) data.samples.resize(max_images);
  check_compatible(*ck.model, data);
  const auto& enc = ck.model->config().encoder;
  const std::size_t m = enc.num_concepts, hw = enc.num_patches();
  const auto maps = ck.model->attention_maps(images_of(data));
  std::filesystem::create_directories(out);
  std::size_t written = 0;
  char name[64];
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t c = 0; c < m; ++c) {
      const std::span<const double> map(maps.data() + (i * m + c) * hw, hw);
      std::snprintf(name, sizeof(name), "image_%04zu_concept_%zu.png", i, c);
      write_png(out / name, upsample_attention(map, enc.grid(), enc.image_size));
      ++written;
    }
  const auto corr = attention_correlation(Tensor::from({data.size(), m, hw}, maps));
  write_csv(out / "correlation.csv", corr, m, m);
  return written;
}

json cmd_centers(const CentersRequest& req) {
  NoGradGuard no_grad;
  Tensor o;
  CenterMode mode;
  json warnings = json::array();
  if (!req.checkpoint.empty()) {
    LoadedCheckpoint ck = load_checkpoint(req.checkpoint);
    mode = ck.model->config().center_mode;
    if (req.mode && *req.mode != mode)
      throw ConfigError("--mode " + to_string(*req.mode) + " but the checkpoint was trained with " + to_string(mode));
    o = ck.model->centers().centers().detach();
  } else {
    if (!req.mode) throw ConfigError("centers: --mode is required without a checkpoint");
    mode = *req.mode;
    ParameterStore store;
    Rng rng(derive_seed(req.seed, 3));
    switch (mode) {
      case CenterMode::language: {
        if (req.embeddings.empty()) throw ConfigError("centers: language mode needs --embeddings");
        const auto emb = load_text_embeddings(req.embeddings);
        o = ClassCenters::language(emb, req.bits, store, rng).centers().detach();
        break;
      }
      case CenterMode::random_orthogonal:
        if (req.classes == 0) throw ConfigError("centers: random mode needs --classes");
        o = ClassCenters::random_orthogonal(req.classes, req.bits, derive_seed(req.seed, 3), store).centers().detach();
        break;
      case CenterMode::learnable:
        if (req.classes == 0) throw ConfigError("centers: learnable mode needs --classes");
        o = ClassCenters::learnable(req.classes, req.bits, store, rng).centers().detach();
        break;
    }
  }
  const std::size_t c = o.dim(0), k = o.dim(1);
  const Tensor signs = binarize_centers(o);
  if (std::all_of(o.values().begin(), o.values().end(), [](double v) { return v == 0.0; }))
    warnings.push_back("all centers are zero (degenerate projection); sign(o) is +1 everywhere");

  std::vector<HashCode> codes;
  for (std::size_t i = 0; i < c; ++i) codes.push_back(HashCode::from_signs(signs.values().subspan(i * k, k)));
  const Tensor cos = cosine_matrix(o, o);
  std::vector<double> hamming(c * c);
  double ham_sum = 0.0, cos_sum = 0.0;
  std::size_t ham_min = k;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t d = hamming_distance(codes[i], codes[j]);
      hamming[i * c + j] = static_cast<double>(d);
      if (i != j) {
        ham_sum += static_cast<double>(d);
        cos_sum += cos.at(i, j);
        ham_min = std::min(ham_min, d);
      }
    }
  const double pairs = c > 1 ? static_cast<double>(c * (c - 1)) : 1.0;
  json cos_rows = json::array(), ham_rows = json::array();
  for (std::size_t i = 0; i < c; ++i) {
    cos_rows.push_back(std::vector<double>(cos.values().begin() + i * c, cos.values().begin() + (i + 1) * c));
    ham_rows.push_back(std::vector<double>(hamming.begin() + i * c, hamming.begin() + (i + 1) * c));
  }
  json stats = {{"mode", to_string(mode)},
                {"classes", c},
                {"K", k},
                {"pairwise_cosine", cos_rows},
                {"pairwise_hamming", ham_rows},
                {"mean_offdiag_cosine", c > 1 ? json(cos_sum / pairs) : json(nullptr)},
                {"mean_offdiag_hamming", c > 1 ? json(ham_sum / pairs) : json(nullptr)},
                {"min_offdiag_hamming", c > 1 ? json(ham_min) : json(nullptr)},
                {"warnings", warnings}};
  if (!req.out.empty()) {
    write_csv(req.out / "centers.csv", o.values(), c, k);
    write_csv(req.out / "centers_sign.csv", signs.values(), c, k);
    write_json(req.out / "center_stats.json", stats);
  }
  return stats;
}

void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out) {
  if (!cfg.uses_synthetic()) throw ConfigError("synth: paths.dataset is set; nothing to generate");
  DataSplits d = load_data(cfg);
  save_dataset_dir(out / "train", d.train);
  if (d.test) save_dataset_dir(out / "test", *d.test);
}

}  // namespace concepthash
