#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csp/linear.hpp"
#include "csp/location_encoder.hpp"
#include "csp/ops.hpp"
#include "csp/rng.hpp"
#include "csp/tape.hpp"

namespace csp {

/// One (left, right) embedding pair. `anchor` groups negatives with their
/// positive for the multi-class loss.
struct Pair {
  RowRef left;
  RowRef right;
  bool positive = false;
  std::size_t anchor = 0;
};

struct PairSet {
  std::vector<Pair> pairs;
  Similarity similarity = Similarity::kCosine;

  std::size_t positive_count() const;
  std::size_t negative_count() const;
  /// Positives of `a` followed by negatives of `b`, keeping anchors.
  static PairSet merge(const PairSet& a, const PairSet& b);
  /// Same pairs with every positive dropped (the empty-positive-set form).
  PairSet negatives_only() const;
};

enum class LossKind { kNce, kMc, kMse };

/// Which pair-construction methods contribute: B (in-batch negatives),
/// L (random negative locations), D (dropout positives/negatives).
struct Components {
  bool in_batch = true;
  bool negative_locations = true;
  bool simcse = true;

  static Components parse(const std::string& letters);
  std::string to_string() const;
  bool any() const { return in_batch || negative_locations || simcse; }
  friend bool operator==(const Components&, const Components&) = default;
};

struct ContrastiveConfig {
  LossKind loss = LossKind::kMc;
  Components components;
  double alpha1 = 1.0;  // MC weight of L
  double alpha2 = 1.0;  // MC weight of D
  double beta1 = 1.0;   // NCE weight of L
  double beta2 = 1.0;   // NCE weight of D
  double tau0 = 1.0;
  double tau1 = 1.0;
  double tau2 = 1.0;
  int num_negative_locations = 1;  // C

  void validate() const;
};

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

// ---------------------------------------------------------------------------
// Pair construction.

/// P^X on the diagonal, N^B off it (anchor = row of loc_emb). N >= 2.
PairSet build_inbatch_pairs(const Tape& tape, Var loc_emb, Var img_emb);

/// N^L from precomputed negative-location embeddings: row i*C + j is the
/// j-th sample for image i. No positives.
PairSet build_negative_location_pairs(const Tape& tape, Var neg_loc_emb, Var img_emb,
                                      std::size_t per_image);

/// Samples C fresh sphere locations per image, encodes them in train mode
/// and pairs them with the images. Returns the pairs and the new embedding.
struct NegativeLocationSample {
  PairSet pairs;
  Var embeddings;
  std::vector<GeoLocation> locations;
};
NegativeLocationSample build_negative_location_pairs(Tape& tape, const EncoderBinding& binding,
                                                     const LocationEncoderParams& params,
                                                     Var img_emb, std::size_t per_image,
                                                     Rng& rng);

/// P^D / N^D from two passes over the same batch. N >= 2.
PairSet build_simcse_pairs(const Tape& tape, Var first_pass, Var second_pass);

struct SimcseSample {
  PairSet pairs;
  Var first_pass;
  Var second_pass;
};
/// Runs both train-mode passes (independent mask streams) and pairs them.
SimcseSample build_simcse_pairs(Tape& tape, const EncoderBinding& binding,
                                const LocationEncoderParams& params,
                                std::span<const GeoLocation> locs, Rng& rng);

// ---------------------------------------------------------------------------
// Losses.

/// -mean_P log sigma(s) - mean_N log(1 - sigma(s)). An empty side drops its
/// term; both empty is a UsageError.
Var nce_loss(Tape& tape, const PairSet& pairs);

/// Same loss over precomputed scores (flat indices into `scores`);
/// `positive_weight` scales the positive term.
Var binary_nce(Tape& tape, Var scores, std::span<const std::size_t> positives,
               std::span<const std::size_t> negatives, double positive_weight = 1.0);

/// Mean over positives of -log softmax of the positive among the negatives
/// sharing its anchor, at temperature tau.
Var mc_loss(Tape& tape, const PairSet& pairs, double tau);

/// Embeddings one pre-training step needs. Optional members are present
/// when the matching component is enabled.
struct BatchEmbeddings {
  Var locations;  // N x d, train-mode pass
  Var images;     // N x d, W(F(I))
  std::optional<Var> negative_locations;  // (N*C) x d
  std::optional<Var> second_pass;         // N x d, second dropout pass
  std::size_t negatives_per_image = 0;
};

BatchEmbeddings embed_batch(Tape& tape, const EncoderBinding& encoder,
                            const LocationEncoderParams& params, const LinearBinding& projection,
                            std::span<const GeoLocation> locs, const Matrix& features,
                            const ContrastiveConfig& cfg, Rng& rng);

/// l_B + beta1 l(empty, N^L) + beta2 l(P^D, N^D), enabled components only.
Var combine_nce(Tape& tape, const BatchEmbeddings& emb, const ContrastiveConfig& cfg);
/// l(P^X, N^B, tau0) + alpha1 l(P^X, N^L, tau1) + alpha2 l(P^D, N^D, tau2).
Var combine_mc(Tape& tape, const BatchEmbeddings& emb, const ContrastiveConfig& cfg);

Var csp_nce_objective(Tape& tape, const EncoderBinding& encoder,
                      const LocationEncoderParams& params, const LinearBinding& projection,
                      std::span<const GeoLocation> locs, const Matrix& features,
                      const ContrastiveConfig& cfg, Rng& rng);
Var csp_mc_objective(Tape& tape, const EncoderBinding& encoder,
                     const LocationEncoderParams& params, const LinearBinding& projection,
                     std::span<const GeoLocation> locs, const Matrix& features,
                     const ContrastiveConfig& cfg, Rng& rng);

/// Mean squared error between regressor(e(x)) (d -> d_I) and the frozen
/// features.
Var mse_objective(Tape& tape, const EncoderBinding& encoder, const LocationEncoderParams& params,
                  const LinearBinding& regressor, std::span<const GeoLocation> locs,
                  const Matrix& features, Rng& rng);

}  // namespace csp
