#include "csp/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "csp/adam.hpp"
#include "csp/errors.hpp"
#include "csp/objectives.hpp"
#include "csp/supervised.hpp"

namespace csp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
}

}  // namespace

Rng stream(std::uint64_t seed, Stream s, std::uint64_t cell) {
  return Rng::derive(Rng::mix(seed) ^ static_cast<std::uint64_t>(s), cell);
}

DataSplits generate_data(const TrainConfig& cfg) {
  Rng spec_rng = stream(cfg.seed, Stream::kDataSpec);
  const SyntheticSpec spec = make_benchmark_spec(cfg.shape, spec_rng);
  Rng train_rng = stream(cfg.seed, Stream::kTrainData);
  Rng eval_rng = stream(cfg.seed, Stream::kEvalData);
  DataSplits out{generate_synthetic(spec, cfg.train_size, train_rng),
                 generate_synthetic(spec, cfg.eval_size, eval_rng)};
  out.train.seed = out.eval.seed = cfg.seed;
  out.train.provenance = "synthetic train";
  out.eval.provenance = "synthetic eval";
  return out;
}

DataSplits prepare_data(const TrainConfig& cfg) {
  if (cfg.train_path.empty() && cfg.eval_path.empty()) return generate_data(cfg);
  if (cfg.train_path.empty() || cfg.eval_path.empty()) {
    throw ConfigError("data.train and data.eval must be set together");
  }
  DataSplits out{load_dataset(cfg.train_path), load_dataset(cfg.eval_path)};
  if (out.train.feature_dim() != out.eval.feature_dim()) {
    throw DimensionMismatchError("train and eval feature dimensions differ");
  }
  return out;
}

PretrainResult pretrain(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (data.size() < 2) throw UsageError("pre-training needs at least 2 examples");
  Rng init_rng = stream(cfg.seed, Stream::kEncoderInit);
  Rng proj_rng = stream(cfg.seed, Stream::kProjectionInit);
  Rng batch_rng = stream(cfg.seed, Stream::kPretrainBatches);
  Rng objective_rng = stream(cfg.seed, Stream::kObjective);

  PretrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.encoder = LocationEncoderParams::init(cfg.encoder, init_rng);
  if (!cfg.pretrain_enabled) return result;

  const auto d = static_cast<std::size_t>(cfg.encoder.output_dim);
  const bool mse = cfg.contrastive.loss == LossKind::kMse;
  LinearLayer head = mse ? LinearLayer::init(d, data.feature_dim(), proj_rng)
                         : LinearLayer::init(data.feature_dim(), d, proj_rng);

  std::vector<Matrix*> trainable = ckpt.encoder.parameters();
  const std::size_t encoder_count = trainable.size();
  trainable.push_back(&head.weight);
  trainable.push_back(&head.bias);
  AdamState state(trainable);

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto& batch : minibatches(data, static_cast<std::size_t>(cfg.batch_size), batch_rng)) {
      Tape tape;
      const std::vector<Var> vars = bind_all(tape, trainable);
      const std::span<const Var> all(vars);
      const EncoderBinding enc = encoder_binding(all.first(encoder_count));
      const LinearBinding lin{vars[encoder_count], vars[encoder_count + 1]};
      const auto locs = data.locations(batch);
      const Matrix features = data.features(batch);
      Var loss;
      switch (cfg.contrastive.loss) {
        case LossKind::kMse:
          loss = mse_objective(tape, enc, ckpt.encoder, lin, locs, features, objective_rng);
          break;
        case LossKind::kNce:
          loss = csp_nce_objective(tape, enc, ckpt.encoder, lin, locs, features, cfg.contrastive,
                                   objective_rng);
          break;
        case LossKind::kMc:
          loss = csp_mc_objective(tape, enc, ckpt.encoder, lin, locs, features, cfg.contrastive,
                                  objective_rng);
          break;
      }
      tape.backward(loss);
      adam_step(trainable, gradients(tape, vars), state, cfg.pretrain_lr);
      total += tape.value(loss)[0];
      ++steps;
    }
    result.epoch_losses.push_back(total / static_cast<double>(steps));
  }
  if (mse) {
    ckpt.regressor = std::move(head);
  } else {
    ckpt.projection = std::move(head);
  }
  return result;
}

FinetuneResult finetune(const TrainConfig& cfg, const std::optional<Checkpoint>& start,
                        const Dataset& labeled, std::uint64_t cell) {
  cfg.validate();
  if (labeled.empty()) throw UsageError("fine-tuning needs a nonempty labeled subset");
  if (!labeled.labeled()) throw UsageError("fine-tuning needs labels");
  FinetuneResult result;
  Checkpoint& ckpt = result.checkpoint;
  if (start) {
    ckpt = *start;
  } else {
    Rng init_rng = stream(cfg.seed, Stream::kEncoderInit);
    ckpt.encoder = LocationEncoderParams::init(cfg.encoder, init_rng);
  }
  const int q = labeled.num_classes();
  Rng class_rng = stream(cfg.seed, Stream::kClassInit, cell);
  ClassEmbeddingMatrix T =
      init_class_embeddings(static_cast<std::size_t>(ckpt.encoder.config.output_dim), q, class_rng);
  Rng finetune_rng = stream(cfg.seed, Stream::kFinetune, cell);
  result.encoder_losses =
      finetune_location_encoder(ckpt.encoder, T, labeled, cfg.supervised, finetune_rng).epoch_losses;
  ckpt.class_embeddings = std::move(T);

  Rng head_init = stream(cfg.seed, Stream::kHeadInit, cell);
  ClassifierHead head = LinearLayer::init(labeled.feature_dim(), static_cast<std::size_t>(q), head_init);
  Rng head_rng = stream(cfg.seed, Stream::kHead, cell);
  result.head_losses = train_classifier_head(labeled, head, cfg.head, head_rng).epoch_losses;
  ckpt.head = std::move(head);
  return result;
}

Accuracies evaluate(const Checkpoint& ckpt, const Dataset& eval) {
  if (!ckpt.class_embeddings || !ckpt.head) {
    throw UsageError("evaluation needs a fine-tuned checkpoint (class embeddings and head)");
  }
  if (!eval.labeled()) throw UsageError("evaluation needs a labeled dataset");
  if (eval.empty()) throw UsageError("evaluation dataset is empty");
  const ClassEmbeddingMatrix& T = *ckpt.class_embeddings;
  const ClassifierHead& head = *ckpt.head;
  if (head.in_dim() != eval.feature_dim()) {
    throw DimensionMismatchError("checkpoint head expects " + std::to_string(head.in_dim()) +
                                 " features, dataset has " + std::to_string(eval.feature_dim()));
  }
  if (static_cast<int>(T.cols()) != eval.num_classes() ||
      static_cast<int>(head.out_dim()) != eval.num_classes()) {
    throw DimensionMismatchError("checkpoint has " + std::to_string(T.cols()) +
                                 " classes, dataset has " + std::to_string(eval.num_classes()));
  }
  std::vector<std::size_t> all(eval.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Matrix loc_post = location_posterior_batch(eval.locations(all), ckpt.encoder, T);
  std::size_t image_hits = 0, loc_hits = 0, combined_hits = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const GeoTaggedExample& ex = eval[i];
    const Vector img = image_posterior(ex.feature, head);
    const auto loc = loc_post.row_span(i);
    const int y = *ex.label;
    image_hits += static_cast<int>(argmax(img)) == y;
    loc_hits += static_cast<int>(argmax(loc)) == y;
    combined_hits += combine_posteriors(loc, img) == y;
  }
  const double n = static_cast<double>(eval.size());
  return {static_cast<double>(image_hits) / n, static_cast<double>(loc_hits) / n,
          static_cast<double>(combined_hits) / n};
}

KeyValues RunReport::to_key_values() const {
  KeyValues kv;
  kv["seed"] = std::to_string(seed);
  kv["config_hash"] = config_hash;
  kv["stage"] = stage;
  if (ratio) kv["finetune.ratio"] = format_double(*ratio);
  if (labeled_examples) kv["finetune.labeled_examples"] = std::to_string(labeled_examples);
  if (!pretrain_losses.empty()) kv["loss.pretrain"] = join(pretrain_losses);
  if (!finetune_losses.empty()) kv["loss.finetune"] = join(finetune_losses);
  if (!head_losses.empty()) kv["loss.head"] = join(head_losses);
  if (top1) {
    kv["top1.image"] = format_double(top1->image);
    kv["top1.location"] = format_double(top1->location);
    kv["top1.combined"] = format_double(top1->combined);
  }
  return kv;
}

std::string RunReport::timings_text() const {
  std::ostringstream out;
  for (const auto& [stage_name, secs] : timings) out << "time." << stage_name << " = " << secs << '\n';
  return out.str();
}

void write_run_report(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.txt", format_key_values(report.to_key_values()));
  write_text(dir / "timings.txt", report.timings_text());
}

std::string cell_name(double ratio) { return "lambda_" + format_double(ratio); }

ExperimentResult run_experiment(const TrainConfig& cfg, const DataSplits& data) {
  cfg.validate();
  ExperimentResult result;
  const std::string hash = hex_hash(cfg.hash());
  std::optional<Checkpoint> start;
  double pretrain_secs = 0.0;
  if (cfg.pretrain_enabled) {
    const auto t0 = Clock::now();
    result.pretrained = pretrain(cfg, data.train.without_labels());
    pretrain_secs = seconds_since(t0);
    start = result.pretrained->checkpoint;
  }
  for (std::size_t c = 0; c < cfg.ratios.size(); ++c) {
    const double ratio = cfg.ratios[c];
    Rng sample_rng = stream(cfg.seed, Stream::kStratified, c);
    const Dataset labeled = stratified_sample(data.train, ratio, sample_rng);
    const auto t0 = Clock::now();
    FinetuneResult tuned = finetune(cfg, start, labeled, c);
    const double finetune_secs = seconds_since(t0);
    const auto t1 = Clock::now();
    const Accuracies acc = evaluate(tuned.checkpoint, data.eval);

    RunReport report;
    report.seed = cfg.seed;
    report.config_hash = hash;
    report.stage = "run-experiment";
    report.ratio = ratio;
    report.labeled_examples = labeled.size();
    if (result.pretrained) report.pretrain_losses = result.pretrained->epoch_losses;
    report.finetune_losses = std::move(tuned.encoder_losses);
    report.head_losses = std::move(tuned.head_losses);
    report.top1 = acc;
    if (cfg.pretrain_enabled) report.timings["pretrain"] = pretrain_secs;
    report.timings["finetune"] = finetune_secs;
    report.timings["eval"] = seconds_since(t1);
    result.cells.push_back({ratio, std::move(report), std::move(tuned.checkpoint)});
  }
  return result;
}

ExperimentResult run_experiment(const TrainConfig& cfg, const std::filesystem::path& out) {
  cfg.validate();
  const DataSplits data = prepare_data(cfg);
  ExperimentResult result = run_experiment(cfg, data);
  std::filesystem::create_directories(out);
  save_dataset(out / "train.txt", data.train);
  save_dataset(out / "eval.txt", data.eval);
  if (result.pretrained) save_checkpoint(out / "pretrain.ckpt", result.pretrained->checkpoint);
  for (const ExperimentCell& cell : result.cells) {
    const auto dir = out / cell_name(cell.ratio);
    write_run_report(dir, cell.report);
    save_checkpoint(dir / "finetune.ckpt", cell.checkpoint);
  }
  return result;
}

}  // namespace csp
