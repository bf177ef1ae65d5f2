#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csp/checkpoint.hpp"
#include "csp/config.hpp"
#include "csp/dataset.hpp"
#include "csp/rng.hpp"

namespace csp {

/// Named random streams; every stage draws from its own stream so changing
/// one stage never shifts another's randomness.
enum class Stream : std::uint64_t {
  kDataSpec = 1,
  kTrainData,
  kEvalData,
  kEncoderInit,
  kProjectionInit,
  kPretrainBatches,
  kObjective,
  kStratified,
  kClassInit,
  kFinetune,
  kHeadInit,
  kHead,
};

Rng stream(std::uint64_t seed, Stream s, std::uint64_t cell = 0);

struct DataSplits {
  Dataset train;
  Dataset eval;
};

/// Loads data.train / data.eval when set, otherwise generates both from
/// the benchmark shape.
DataSplits prepare_data(const TrainConfig& cfg);
DataSplits generate_data(const TrainConfig& cfg);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;
};

/// Contrastive (nce/mc) or MSE pre-training over encoder and W(); features
/// stay frozen. Labels in `data` are ignored.
PretrainResult pretrain(const TrainConfig& cfg, const Dataset& data);

struct FinetuneResult {
  Checkpoint checkpoint;
  std::vector<double> encoder_losses;
  std::vector<double> head_losses;
};

/// Presence-absence fine-tuning of (encoder, T) and a cross-entropy head,
/// trained independently. Without a checkpoint the encoder starts from
/// random init (supervised-only baseline).
FinetuneResult finetune(const TrainConfig& cfg, const std::optional<Checkpoint>& start,
                        const Dataset& labeled, std::uint64_t cell = 0);

struct Accuracies {
  double image = 0.0;
  double location = 0.0;
  double combined = 0.0;
};

/// Top-1 of the image head, the location posterior and their product.
Accuracies evaluate(const Checkpoint& ckpt, const Dataset& eval);

struct RunReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string stage;
  std::optional<double> ratio;
  std::size_t labeled_examples = 0;
  std::vector<double> pretrain_losses;
  std::vector<double> finetune_losses;
  std::vector<double> head_losses;
  std::optional<Accuracies> top1;
  std::map<std::string, double> timings;  // seconds per stage

  /// Deterministic fields only; timings go to a sidecar file.
  KeyValues to_key_values() const;
  std::string timings_text() const;
};

/// Writes report.txt and timings.txt into `dir`.
void write_run_report(const std::filesystem::path& dir, const RunReport& report);

struct ExperimentCell {
  double ratio;
  RunReport report;
  Checkpoint checkpoint;
};

struct ExperimentResult {
  std::optional<PretrainResult> pretrained;
  std::vector<ExperimentCell> cells;
};

/// data -> pretrain -> stratified finetune per ratio -> eval, in memory.
ExperimentResult run_experiment(const TrainConfig& cfg, const DataSplits& data);

/// Same, writing train/eval data, checkpoints and one report per cell
/// under `out`. Nothing is written unless every stage succeeds.
ExperimentResult run_experiment(const TrainConfig& cfg, const std::filesystem::path& out);

std::string cell_name(double ratio);

}  // namespace csp
