// geocsp: command-line front end for the pre-train / fine-tune / evaluate pipeline.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "csp/checkpoint.hpp"
#include "csp/cluster.hpp"
#include "csp/config.hpp"
#include "csp/errors.hpp"
#include "csp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace csp;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "flat key = value config file");
  cmd->add_option("--seed", opts.seed, "global seed (overrides the config)");
  cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
  cmd->add_option("--set", opts.sets, "override one config key, key=value")->take_all();
}

TrainConfig resolve(const CommonOptions& opts) {
  KeyValues kv;
  if (!opts.config_path.empty()) kv = read_key_values(opts.config_path);
  for (const std::string& item : opts.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + item + "'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  if (opts.seed) kv["seed"] = std::to_string(*opts.seed);
  return TrainConfig::from_key_values(kv);
}

Dataset training_data(const TrainConfig& cfg, const std::string& data_path) {
  if (!data_path.empty()) return load_dataset(data_path);
  if (!cfg.train_path.empty()) return load_dataset(cfg.train_path);
  return generate_data(cfg).train;
}

Dataset eval_data(const TrainConfig& cfg, const std::string& data_path) {
  if (!data_path.empty()) return load_dataset(data_path);
  if (!cfg.eval_path.empty()) return load_dataset(cfg.eval_path);
  return generate_data(cfg).eval;
}

RunReport base_report(const TrainConfig& cfg, const std::string& stage) {
  RunReport report;
  report.seed = cfg.seed;
  report.config_hash = hex_hash(cfg.hash());
  report.stage = stage;
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive pre-training of location encoders on geo-tagged data"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string data_path, checkpoint_path, input_path;
  std::optional<double> resolution;
  std::optional<std::size_t> clusters;

  auto* gen = app.add_subcommand("gen-data", "generate synthetic train/eval datasets");
  auto* pre = app.add_subcommand("pretrain", "contrastive or MSE pre-training of the location encoder");
  auto* fine = app.add_subcommand("finetune", "stratified few-shot fine-tuning");
  auto* ev = app.add_subcommand("eval", "Top-1 of image, location and combined predictions");
  auto* grid = app.add_subcommand("export-grid", "embed a regular lon/lat grid");
  auto* clus = app.add_subcommand("cluster", "Ward clustering of an embedding table");
  auto* exp = app.add_subcommand("run-experiment", "data, pre-train, fine-tune per ratio, eval");
  for (auto* cmd : {gen, pre, fine, ev, grid, clus, exp}) add_common(cmd, opts);
  pre->add_option("--data", data_path, "dataset file (default: data.train or generated)");
  fine->add_option("--data", data_path, "labeled pool to sample from (default: data.train or generated)");
  fine->add_option("--checkpoint", checkpoint_path, "pre-trained checkpoint; omit for supervised-only");
  ev->add_option("--data", data_path, "eval dataset (default: data.eval or generated)");
  ev->add_option("--checkpoint", checkpoint_path, "fine-tuned checkpoint")->required();
  grid->add_option("--checkpoint", checkpoint_path, "encoder checkpoint")->required();
  grid->add_option("--resolution", resolution, "grid spacing in degrees (default: export.resolution_deg)");
  clus->add_option("--input", input_path, "embedding table from export-grid")->required();
  clus->add_option("-k,--clusters", clusters, "cluster count (default: cluster.k)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    TrainConfig cfg = resolve(opts);
    const fs::path out = opts.out;

    if (gen->parsed()) {
      const DataSplits data = generate_data(cfg);
      fs::create_directories(out);
      save_dataset(out / "train.txt", data.train);
      save_dataset(out / "eval.txt", data.eval);
    } else if (pre->parsed()) {
      const Dataset data = training_data(cfg, data_path);
      const PretrainResult result = pretrain(cfg, data.without_labels());
      RunReport report = base_report(cfg, "pretrain");
      report.pretrain_losses = result.epoch_losses;
      fs::create_directories(out);
      save_checkpoint(out / "pretrain.ckpt", result.checkpoint);
      write_run_report(out, report);
    } else if (fine->parsed()) {
      std::optional<Checkpoint> start;
      if (!checkpoint_path.empty()) start = load_checkpoint(checkpoint_path);
      const Dataset pool = training_data(cfg, data_path);
      Rng sample_rng = stream(cfg.seed, Stream::kStratified);
      const Dataset labeled = stratified_sample(pool, cfg.ratio, sample_rng);
      FinetuneResult result = finetune(cfg, start, labeled);
      RunReport report = base_report(cfg, "finetune");
      report.ratio = cfg.ratio;
      report.labeled_examples = labeled.size();
      report.finetune_losses = std::move(result.encoder_losses);
      report.head_losses = std::move(result.head_losses);
      fs::create_directories(out);
      save_checkpoint(out / "finetune.ckpt", result.checkpoint);
      write_run_report(out, report);
    } else if (ev->parsed()) {
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      const Dataset data = eval_data(cfg, data_path);
      RunReport report = base_report(cfg, "eval");
      report.top1 = evaluate(ckpt, data);
      write_run_report(out, report);
      std::cout << "top1.image = " << report.top1->image << "\ntop1.location = "
                << report.top1->location << "\ntop1.combined = " << report.top1->combined << '\n';
    } else if (grid->parsed()) {
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      const EmbeddingTable table =
          grid_embeddings(ckpt.encoder, resolution.value_or(cfg.grid_resolution_deg));
      fs::create_directories(out);
      write_embedding_table(out / "grid.txt", table);
    } else if (clus->parsed()) {
      const EmbeddingTable table = read_embedding_table(input_path);
      const std::vector<int> ids = ward_cluster(
          table.embeddings, clusters.value_or(static_cast<std::size_t>(cfg.clusters)));
      fs::create_directories(out);
      write_cluster_table(out / "clusters.txt", table.locations, ids);
    } else if (exp->parsed()) {
      const ExperimentResult result = run_experiment(cfg, out);
      for (const ExperimentCell& cell : result.cells) {
        std::cout << cell_name(cell.ratio) << ": combined top1 = " << cell.report.top1->combined
                  << '\n';
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
