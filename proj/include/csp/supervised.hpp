#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "csp/dataset.hpp"
#include "csp/linear.hpp"
#include "csp/location_encoder.hpp"
#include "csp/rng.hpp"
#include "csp/tape.hpp"

namespace csp {

/// Class embedding matrix T (d x Q); column y scores class y at a location.
using ClassEmbeddingMatrix = Matrix;

/// Zero-mean Gaussian entries with standard deviation 1e-4.
ClassEmbeddingMatrix init_class_embeddings(std::size_t dim, int num_classes, Rng& rng);

struct SupervisedConfig {
  double beta = 1.0;              // positive weight
  double learning_rate = 0.0005;  // eta_super
  int epochs = 30;
  int batch_size = 32;

  void validate() const;
};

struct HeadTrainConfig {
  double learning_rate = 0.01;
  int epochs = 200;
  int batch_size = 32;

  void validate() const;
};

/// beta * l(P^y, empty) + l(empty, N^y u N^R) with score e(x) . T[:, y].
/// One uniform sphere location per example forms N^R against every class.
Var presence_absence_loss(Tape& tape, const EncoderBinding& encoder,
                          const LocationEncoderParams& params, Var class_embeddings,
                          std::span<const GeoLocation> locs, std::span<const int> labels,
                          double beta, Rng& rng);

struct TrainingTrace {
  std::vector<double> epoch_losses;
};

/// Adam on (encoder, T) with the presence-absence loss; the positional
/// encoding config is left untouched.
TrainingTrace finetune_location_encoder(LocationEncoderParams& params, ClassEmbeddingMatrix& T,
                                        const Dataset& labeled, const SupervisedConfig& cfg,
                                        Rng& rng);

/// Linear probe over frozen features with mean softmax cross-entropy.
TrainingTrace train_classifier_head(const Dataset& labeled, ClassifierHead& head,
                                    const HeadTrainConfig& cfg, Rng& rng);

/// sigma(e(x) . T[:, y]) for every y, eval-mode encoding.
Vector location_posterior(const GeoLocation& loc, const LocationEncoderParams& params,
                          const ClassEmbeddingMatrix& T);
/// Batched variant; row i belongs to locs[i].
Matrix location_posterior_batch(std::span<const GeoLocation> locs,
                                const LocationEncoderParams& params,
                                const ClassEmbeddingMatrix& T);

/// softmax(g(F(I))).
Vector image_posterior(std::span<const double> feature, const ClassifierHead& head);

/// argmax of the elementwise product, lowest index on ties.
int combine_posteriors(std::span<const double> location, std::span<const double> image);
std::size_t argmax(std::span<const double> values);

int combined_predict(const GeoLocation& loc, std::span<const double> feature,
                     const LocationEncoderParams& params, const ClassEmbeddingMatrix& T,
                     const ClassifierHead& head);

/// Fraction of examples where predictor(example) equals the label.
double evaluate_top1(const Dataset& ds, const std::function<int(const GeoTaggedExample&)>& predictor);

}  // namespace csp
