// SPDX-License-Identifier: Apache-2.0
// concepthash: train | encode | eval | attn | centers | synth | config

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "concepthash/commands.hpp"
#include "concepthash/errors.hpp"

namespace ch = concepthash;

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kInternalError = 4 };

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool no_quan = false, no_csd = false, no_cd = false;
  std::string center_mode;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "Run config (JSON)");
  cmd->add_option("--seed", o.seed, "Override the run seed");
  cmd->add_option("--set", o.sets, "Override a config field: key.path=value (repeatable)");
  cmd->add_flag("--no-quan", o.no_quan, "Disable the quantization term");
  cmd->add_flag("--no-csd", o.no_csd, "Disable the concept spatial diversity term");
  cmd->add_flag("--no-cd", o.no_cd, "Disable the concept discrimination term");
  cmd->add_option("--center-mode", o.center_mode, "Class centers: language | random | learnable");
}

ch::RunConfig resolve(const RunOptions& o) {
  std::vector<std::string> sets = o.sets;
  if (o.seed) sets.push_back("seed=" + std::to_string(*o.seed));
  if (o.no_quan) sets.emplace_back("loss.enable_quan=false");
  if (o.no_csd) sets.emplace_back("loss.enable_csd=false");
  if (o.no_cd) sets.emplace_back("loss.enable_cd=false");
  if (!o.center_mode.empty()) sets.push_back("center_mode=\"" + o.center_mode + "\"");
  return ch::resolve_run_config(o.config, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ConceptHash: concept-token hashing, retrieval and interpretability metrics"};
  app.require_subcommand(1);

  RunOptions train_opts;
  auto* train = app.add_subcommand("train", "Train a model and write checkpoint + metrics");
  add_run_options(train, train_opts);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "Do not print per-epoch progress");

  RunOptions config_opts;
  auto* config = app.add_subcommand("config", "Print the fully resolved run config");
  add_run_options(config, config_opts);

  RunOptions synth_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write the synthetic train/test splits as dataset directories");
  add_run_options(synth, synth_opts);
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::string enc_ckpt, enc_data, enc_out;
  std::optional<std::size_t> enc_bits;
  auto* encode = app.add_subcommand("encode", "Encode a dataset directory into a code database");
  encode->add_option("--checkpoint", enc_ckpt)->required();
  encode->add_option("--dataset", enc_data)->required();
  encode->add_option("--out", enc_out)->required();
  encode->add_option("--bits", enc_bits, "Expected K (checked against the checkpoint)");

  ch::EvalRequest eval_req;
  std::vector<std::string> eval_q, eval_g;
  std::string eval_ckpt, eval_data, eval_report, eval_csv;
  auto* eval = app.add_subcommand("eval", "mAP@R / family mAP report over code databases");
  eval->add_option("--query", eval_q, "Query code database (repeat per bit length)")->required();
  eval->add_option("--gallery", eval_g, "Gallery code database, parallel to --query")->required();
  eval->add_flag("--family", eval_req.family, "Also report family-level mAP");
  eval->add_option("--R", eval_req.r, "Top-R cutoff (default: full gallery)");
  eval->add_option("--checkpoint", eval_ckpt, "Model for attention metrics");
  eval->add_option("--dataset", eval_data, "Dataset directory for attention metrics");
  eval->add_option("--out", eval_report, "Report path (JSON); printed to stdout as well");
  eval->add_option("--correlation-csv", eval_csv, "Correlation matrix CSV path");

  std::string attn_ckpt, attn_data, attn_out;
  std::size_t attn_max = 0;
  auto* attn = app.add_subcommand("attn", "Export per-concept attention heatmaps + correlation CSV");
  attn->add_option("--checkpoint", attn_ckpt)->required();
  attn->add_option("--dataset", attn_data)->required();
  attn->add_option("--out", attn_out)->required();
  attn->add_option("--max-images", attn_max, "Limit the number of images (0 = all)");

  ch::CentersRequest centers_req;
  std::string centers_mode, centers_ckpt, centers_emb, centers_out;
  auto* centers = app.add_subcommand("centers", "Export class centers and pairwise statistics");
  centers->add_option("--checkpoint", centers_ckpt);
  centers->add_option("--embeddings", centers_emb);
  centers->add_option("--mode", centers_mode, "language | random | learnable");
  centers->add_option("--bits", centers_req.bits);
  centers->add_option("--classes", centers_req.classes);
  centers->add_option("--seed", centers_req.seed);
  centers->add_option("--out", centers_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) {
      const auto cfg = resolve(train_opts);
      ch::cmd_train(cfg, quiet ? nullptr : &std::cerr);
    } else if (*config) {
      std::cout << ch::run_config_to_json(resolve(config_opts)).dump(2) << '\n';
    } else if (*synth) {
      ch::cmd_synth(resolve(synth_opts), synth_out);
    } else if (*encode) {
      const auto n = ch::cmd_encode(enc_ckpt, enc_data, enc_out, enc_bits);
      std::cerr << "encoded " << n << " images into " << enc_out << '\n';
    } else if (*eval) {
      eval_req.queries.assign(eval_q.begin(), eval_q.end());
      eval_req.galleries.assign(eval_g.begin(), eval_g.end());
      eval_req.checkpoint = eval_ckpt;
      eval_req.attention_dataset = eval_data;
      eval_req.report = eval_report;
      eval_req.correlation_csv = eval_csv;
      std::cout << ch::cmd_eval(eval_req).dump(2) << '\n';
    } else if (*attn) {
      const auto n = ch::cmd_attn(attn_ckpt, attn_data, attn_out, attn_max);
      std::cerr << "wrote " << n << " heatmaps to " << attn_out << '\n';
    } else if (*centers) {
      if (!centers_mode.empty()) centers_req.mode = ch::parse_center_mode(centers_mode);
      centers_req.checkpoint = centers_ckpt;
      centers_req.embeddings = centers_emb;
      centers_req.out = centers_out;
      const auto stats = ch::cmd_centers(centers_req);
      for (const auto& w : stats.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
      std::cout << stats.dump(2) << '\n';
    }
    return kOk;
  } catch (const ch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ch::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ch::DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}
