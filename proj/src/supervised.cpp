#include "csp/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csp/adam.hpp"
#include "csp/errors.hpp"
#include "csp/objectives.hpp"
#include "csp/ops.hpp"

namespace csp {

ClassEmbeddingMatrix init_class_embeddings(std::size_t dim, int num_classes, Rng& rng) {
  if (dim == 0 || num_classes < 1) throw ConfigError("class embeddings need d >= 1 and Q >= 1");
  Matrix t(dim, static_cast<std::size_t>(num_classes));
  for (double& v : t.data()) v = rng.normal(0.0, 1e-4);
  return t;
}

void SupervisedConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("presence-absence beta must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("fine-tuning learning rate must be > 0");
  if (epochs < 0) throw ConfigError("fine-tuning epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("fine-tuning batch size must be >= 1");
}

void HeadTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("head learning rate must be > 0");
  if (epochs < 0) throw ConfigError("head epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("head batch size must be >= 1");
}

Var presence_absence_loss(Tape& tape, const EncoderBinding& encoder,
                          const LocationEncoderParams& params, Var class_embeddings,
                          std::span<const GeoLocation> locs, std::span<const int> labels,
                          double beta, Rng& rng) {
  if (locs.size() != labels.size()) throw ShapeError("one label per location is required");
  if (locs.empty()) throw UsageError("presence-absence loss needs a nonempty batch");
  const Matrix& t = tape.value(class_embeddings);
  const std::size_t q = t.cols();
  if (t.rows() != static_cast<std::size_t>(params.config.output_dim)) {
    throw ShapeError("class embedding matrix must be d x Q");
  }
  const std::size_t n = locs.size();
  // Rows [0, n) are the labeled locations, rows [n, 2n) the random ones.
  std::vector<GeoLocation> all(locs.begin(), locs.end());
  for (std::size_t i = 0; i < n; ++i) all.push_back(uniform_sphere_sample(rng));
  Var emb = encode_batch(tape, encoder, params, all, Mode::kTrain, &rng);
  Var scores = matmul(tape, emb, class_embeddings);  // 2n x Q

  std::vector<std::size_t> positives, negatives;
  positives.reserve(n);
  negatives.reserve(n * (2 * q - 1));
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= q) {
      throw UsageError("label " + std::to_string(y) + " outside [0, Q)");
    }
    positives.push_back(i * q + static_cast<std::size_t>(y));
    for (std::size_t c = 0; c < q; ++c) {
      if (c != static_cast<std::size_t>(y)) negatives.push_back(i * q + c);
    }
  }
  for (std::size_t i = n; i < 2 * n; ++i) {
    for (std::size_t c = 0; c < q; ++c) negatives.push_back(i * q + c);
  }
  return binary_nce(tape, scores, positives, negatives, beta);
}

TrainingTrace finetune_location_encoder(LocationEncoderParams& params, ClassEmbeddingMatrix& T,
                                        const Dataset& labeled, const SupervisedConfig& cfg,
                                        Rng& rng) {
  cfg.validate();
  if (!labeled.labeled()) throw UsageError("fine-tuning needs a labeled dataset");
  if (labeled.empty()) throw UsageError("fine-tuning needs a nonempty labeled subset");
  std::vector<Matrix*> trainable = params.parameters();
  trainable.push_back(&T);
  AdamState state(trainable);
  TrainingTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::size_t steps = 0;
    // A lone labeled example still trains; the pair-count floor only
    // applies to contrastive batches.
    auto batches = labeled.size() == 1
                       ? std::vector<std::vector<std::size_t>>{{0}}
                       : minibatches(labeled, static_cast<std::size_t>(cfg.batch_size), rng);
    for (const auto& batch : batches) {
      Tape tape;
      const std::vector<Var> vars = bind_all(tape, trainable);
      const EncoderBinding enc = encoder_binding(std::span(vars).first(vars.size() - 1));
      const auto locs = labeled.locations(batch);
      const auto labels = labeled.labels(batch);
      Var loss = presence_absence_loss(tape, enc, params, vars.back(), locs, labels, cfg.beta, rng);
      tape.backward(loss);
      adam_step(trainable, gradients(tape, vars), state, cfg.learning_rate);
      total += tape.value(loss)[0];
      ++steps;
    }
    trace.epoch_losses.push_back(steps ? total / static_cast<double>(steps) : 0.0);
  }
  return trace;
}

TrainingTrace train_classifier_head(const Dataset& labeled, ClassifierHead& head,
                                    const HeadTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!labeled.labeled()) throw UsageError("head training needs a labeled dataset");
  if (labeled.empty()) throw UsageError("head training needs a nonempty dataset");
  if (head.in_dim() != labeled.feature_dim() ||
      head.out_dim() != static_cast<std::size_t>(labeled.num_classes())) {
    throw ShapeError("classifier head must map d_I -> Q");
  }
  std::vector<Matrix*> trainable = head.parameters();
  AdamState state(trainable);
  TrainingTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::size_t steps = 0;
    auto batches = labeled.size() == 1
                       ? std::vector<std::vector<std::size_t>>{{0}}
                       : minibatches(labeled, static_cast<std::size_t>(cfg.batch_size), rng);
    for (const auto& batch : batches) {
      Tape tape;
      const std::vector<Var> vars = bind_all(tape, trainable);
      Var logits = forward(tape, LinearBinding{vars[0], vars[1]},
                           tape.constant(labeled.features(batch)));
      const auto labels = labeled.labels(batch);
      Var loss = cross_entropy(tape, logits, labels);
      tape.backward(loss);
      adam_step(trainable, gradients(tape, vars), state, cfg.learning_rate);
      total += tape.value(loss)[0];
      ++steps;
    }
    trace.epoch_losses.push_back(steps ? total / static_cast<double>(steps) : 0.0);
  }
  return trace;
}

Matrix location_posterior_batch(std::span<const GeoLocation> locs,
                                const LocationEncoderParams& params,
                                const ClassEmbeddingMatrix& T) {
  if (T.rows() != static_cast<std::size_t>(params.config.output_dim)) {
    throw ShapeError("class embedding matrix must be d x Q");
  }
  Matrix scores = matmul(encode_batch(locs, params, Mode::kEval, nullptr), T);
  for (double& v : scores.data()) v = sigmoid(v);
  return scores;
}

Vector location_posterior(const GeoLocation& loc, const LocationEncoderParams& params,
                          const ClassEmbeddingMatrix& T) {
  return location_posterior_batch(std::span(&loc, 1), params, T).data();
}

Vector image_posterior(std::span<const double> feature, const ClassifierHead& head) {
  if (feature.size() != head.in_dim()) {
    throw ShapeError("feature length " + std::to_string(feature.size()) +
                     " does not match the head input " + std::to_string(head.in_dim()));
  }
  return softmax_rows(head.apply(Matrix::row(feature))).data();
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

int combine_posteriors(std::span<const double> location, std::span<const double> image) {
  if (location.size() != image.size()) throw ShapeError("posteriors must have the same length");
  Vector product(location.size());
  for (std::size_t i = 0; i < product.size(); ++i) product[i] = location[i] * image[i];
  return static_cast<int>(argmax(product));
}

int combined_predict(const GeoLocation& loc, std::span<const double> feature,
                     const LocationEncoderParams& params, const ClassEmbeddingMatrix& T,
                     const ClassifierHead& head) {
  return combine_posteriors(location_posterior(loc, params, T), image_posterior(feature, head));
}

double evaluate_top1(const Dataset& ds,
                     const std::function<int(const GeoTaggedExample&)>& predictor) {
  if (!ds.labeled()) throw UsageError("Top-1 evaluation needs a labeled dataset");
  if (ds.empty()) throw UsageError("Top-1 evaluation needs a nonempty dataset");
  std::size_t hits = 0;
  for (const auto& ex : ds.examples()) hits += predictor(ex) == *ex.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

}  // namespace csp
