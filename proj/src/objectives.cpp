#include "csp/objectives.hpp"

#include <string>

#include "csp/errors.hpp"

namespace csp {

std::size_t PairSet::positive_count() const {
  std::size_t n = 0;
  for (const Pair& p : pairs) n += p.positive ? 1 : 0;
  return n;
}

std::size_t PairSet::negative_count() const { return pairs.size() - positive_count(); }

PairSet PairSet::merge(const PairSet& a, const PairSet& b) {
  if (a.similarity != b.similarity) throw UsageError("cannot merge pair sets with different similarities");
  PairSet out;
  out.similarity = a.similarity;
  for (const Pair& p : a.pairs) {
    if (p.positive) out.pairs.push_back(p);
  }
  for (const Pair& p : b.pairs) {
    if (!p.positive) out.pairs.push_back(p);
  }
  return out;
}

PairSet PairSet::negatives_only() const {
  PairSet out;
  out.similarity = similarity;
  for (const Pair& p : pairs) {
    if (!p.positive) out.pairs.push_back(p);
  }
  return out;
}

Components Components::parse(const std::string& letters) {
  Components c{false, false, false};
  for (char ch : letters) {
    switch (ch) {
      case 'B': c.in_batch = true; break;
      case 'L': c.negative_locations = true; break;
      case 'D': c.simcse = true; break;
      default:
        throw ConfigError("unknown loss component '" + std::string(1, ch) +
                          "' (expected letters from B, L, D)");
    }
  }
  return c;
}

std::string Components::to_string() const {
  std::string s;
  if (in_batch) s += 'B';
  if (negative_locations) s += 'L';
  if (simcse) s += 'D';
  return s;
}

void ContrastiveConfig::validate() const {
  if (loss == LossKind::kMse) return;
  if (!components.any()) throw ConfigError("all contrastive loss components are disabled");
  for (double tau : {tau0, tau1, tau2}) {
    if (!(tau > 0.0)) throw ConfigError("temperatures must be > 0");
  }
  for (double w : {alpha1, alpha2, beta1, beta2}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  if (components.negative_locations && num_negative_locations < 1) {
    throw ConfigError("negative-location count C must be >= 1 when L is enabled");
  }
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "nce") return LossKind::kNce;
  if (name == "mc") return LossKind::kMc;
  if (name == "mse") return LossKind::kMse;
  throw ConfigError("unknown loss '" + name + "' (expected nce, mc or mse)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kNce: return "nce";
    case LossKind::kMc: return "mc";
    case LossKind::kMse: return "mse";
  }
  return "?";
}

// ---------------------------------------------------------------------------

namespace {

PairSet cross_pairs(const Tape& tape, Var left, Var right, const char* what) {
  const std::size_t n = tape.value(left).rows();
  if (tape.value(right).rows() != n) throw ShapeError(std::string(what) + ": batch sizes differ");
  if (n < 2) throw UsageError(std::string(what) + ": needs a batch of at least 2");
  PairSet set;
  set.pairs.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      set.pairs.push_back({RowRef{left, i}, RowRef{right, j}, i == j, i});
    }
  }
  return set;
}

}  // namespace

PairSet build_inbatch_pairs(const Tape& tape, Var loc_emb, Var img_emb) {
  return cross_pairs(tape, loc_emb, img_emb, "in-batch pairs");
}

PairSet build_negative_location_pairs(const Tape& tape, Var neg_loc_emb, Var img_emb,
                                      std::size_t per_image) {
  const std::size_t n = tape.value(img_emb).rows();
  if (per_image < 1) throw ConfigError("negative-location count C must be >= 1");
  if (tape.value(neg_loc_emb).rows() != n * per_image) {
    throw ShapeError("negative-location embeddings must have N*C rows");
  }
  PairSet set;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < per_image; ++j) {
      set.pairs.push_back({RowRef{neg_loc_emb, i * per_image + j}, RowRef{img_emb, i}, false, i});
    }
  }
  return set;
}

NegativeLocationSample build_negative_location_pairs(Tape& tape, const EncoderBinding& binding,
                                                     const LocationEncoderParams& params,
                                                     Var img_emb, std::size_t per_image,
                                                     Rng& rng) {
  if (per_image < 1) throw ConfigError("negative-location count C must be >= 1");
  const std::size_t n = tape.value(img_emb).rows();
  NegativeLocationSample out;
  out.locations.reserve(n * per_image);
  for (std::size_t i = 0; i < n * per_image; ++i) out.locations.push_back(uniform_sphere_sample(rng));
  out.embeddings = encode_batch(tape, binding, params, out.locations, Mode::kTrain, &rng);
  out.pairs = build_negative_location_pairs(tape, out.embeddings, img_emb, per_image);
  return out;
}

PairSet build_simcse_pairs(const Tape& tape, Var first_pass, Var second_pass) {
  return cross_pairs(tape, first_pass, second_pass, "SimCSE pairs");
}

SimcseSample build_simcse_pairs(Tape& tape, const EncoderBinding& binding,
                                const LocationEncoderParams& params,
                                std::span<const GeoLocation> locs, Rng& rng) {
  SimcseSample out;
  out.first_pass = encode_batch(tape, binding, params, locs, Mode::kTrain, &rng);
  out.second_pass = encode_batch(tape, binding, params, locs, Mode::kTrain, &rng);
  out.pairs = build_simcse_pairs(tape, out.first_pass, out.second_pass);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Var similarities(Tape& tape, const PairSet& set) {
  std::vector<RowRef> left, right;
  left.reserve(set.pairs.size());
  right.reserve(set.pairs.size());
  for (const Pair& p : set.pairs) {
    left.push_back(p.left);
    right.push_back(p.right);
  }
  return pair_similarity(tape, left, right, set.similarity);
}

}  // namespace

Var binary_nce(Tape& tape, Var scores, std::span<const std::size_t> positives,
               std::span<const std::size_t> negatives, double positive_weight) {
  if (positives.empty() && negatives.empty()) {
    throw UsageError("NCE loss needs at least one positive or negative pair");
  }
  std::optional<Var> total;
  if (!positives.empty()) {
    Var term = mean(tape, log_sigmoid(tape, gather(tape, scores, positives)));
    total = scale(tape, term, -positive_weight);
  }
  if (!negatives.empty()) {
    // log(1 - sigma(s)) = log sigma(-s)
    Var term = mean(tape, log_sigmoid(tape, scale(tape, gather(tape, scores, negatives), -1.0)));
    term = scale(tape, term, -1.0);
    total = total ? add(tape, *total, term) : term;
  }
  return *total;
}

Var nce_loss(Tape& tape, const PairSet& set) {
  if (set.pairs.empty()) throw UsageError("NCE loss needs at least one positive or negative pair");
  std::vector<std::size_t> pos, neg;
  for (std::size_t p = 0; p < set.pairs.size(); ++p) {
    (set.pairs[p].positive ? pos : neg).push_back(p);
  }
  return binary_nce(tape, similarities(tape, set), pos, neg);
}

Var mc_loss(Tape& tape, const PairSet& set, double tau) {
  if (!(tau > 0.0)) throw ConfigError("MC loss temperature must be > 0");
  // Negatives by anchor, in pair order.
  std::size_t max_anchor = 0;
  for (const Pair& p : set.pairs) max_anchor = std::max(max_anchor, p.anchor);
  std::vector<std::vector<std::size_t>> negatives_of(set.pairs.empty() ? 0 : max_anchor + 1);
  for (std::size_t p = 0; p < set.pairs.size(); ++p) {
    if (!set.pairs[p].positive) negatives_of[set.pairs[p].anchor].push_back(p);
  }
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t p = 0; p < set.pairs.size(); ++p) {
    if (!set.pairs[p].positive) continue;
    std::vector<std::size_t> g{p};
    const auto& negs = negatives_of[set.pairs[p].anchor];
    g.insert(g.end(), negs.begin(), negs.end());
    groups.push_back(std::move(g));
  }
  if (groups.empty()) throw UsageError("MC loss needs at least one positive pair");
  Var log_probs = grouped_log_softmax_first(tape, similarities(tape, set), groups, tau);
  return scale(tape, mean(tape, log_probs), -1.0);
}

// ---------------------------------------------------------------------------

BatchEmbeddings embed_batch(Tape& tape, const EncoderBinding& encoder,
                            const LocationEncoderParams& params, const LinearBinding& projection,
                            std::span<const GeoLocation> locs, const Matrix& features,
                            const ContrastiveConfig& cfg, Rng& rng) {
  cfg.validate();
  if (features.rows() != locs.size()) throw ShapeError("feature rows must match the batch size");
  BatchEmbeddings emb;
  emb.locations = encode_batch(tape, encoder, params, locs, Mode::kTrain, &rng);
  emb.images = forward(tape, projection, tape.constant(features));
  if (tape.value(emb.images).cols() != tape.value(emb.locations).cols()) {
    throw ShapeError("projection output width must equal the location embedding width");
  }
  if (cfg.components.simcse) {
    emb.second_pass = encode_batch(tape, encoder, params, locs, Mode::kTrain, &rng);
  }
  if (cfg.components.negative_locations) {
    const auto c = static_cast<std::size_t>(cfg.num_negative_locations);
    auto sample = build_negative_location_pairs(tape, encoder, params, emb.images, c, rng);
    emb.negative_locations = sample.embeddings;
    emb.negatives_per_image = c;
  }
  return emb;
}

namespace {

Var accumulate_term(Tape& tape, std::optional<Var> total, Var term, double weight) {
  Var weighted = weight == 1.0 ? term : scale(tape, term, weight);
  return total ? add(tape, *total, weighted) : weighted;
}

void require_parts(const BatchEmbeddings& emb, const ContrastiveConfig& cfg) {
  if (cfg.components.negative_locations && !emb.negative_locations) {
    throw UsageError("L component enabled but no negative-location embeddings supplied");
  }
  if (cfg.components.simcse && !emb.second_pass) {
    throw UsageError("D component enabled but no second dropout pass supplied");
  }
}

}  // namespace

Var combine_nce(Tape& tape, const BatchEmbeddings& emb, const ContrastiveConfig& cfg) {
  if (!cfg.components.any()) throw ConfigError("all contrastive loss components are disabled");
  require_parts(emb, cfg);
  std::optional<Var> total;
  if (cfg.components.in_batch) {
    total = accumulate_term(tape, total,
                            nce_loss(tape, build_inbatch_pairs(tape, emb.locations, emb.images)), 1.0);
  }
  if (cfg.components.negative_locations) {
    const PairSet neg = build_negative_location_pairs(tape, *emb.negative_locations, emb.images,
                                                      emb.negatives_per_image);
    total = accumulate_term(tape, total, nce_loss(tape, neg), cfg.beta1);
  }
  if (cfg.components.simcse) {
    total = accumulate_term(
        tape, total, nce_loss(tape, build_simcse_pairs(tape, emb.locations, *emb.second_pass)),
        cfg.beta2);
  }
  return *total;
}

Var combine_mc(Tape& tape, const BatchEmbeddings& emb, const ContrastiveConfig& cfg) {
  if (!cfg.components.any()) throw ConfigError("all contrastive loss components are disabled");
  require_parts(emb, cfg);
  std::optional<Var> total;
  std::optional<PairSet> inbatch;
  if (cfg.components.in_batch || cfg.components.negative_locations) {
    inbatch = build_inbatch_pairs(tape, emb.locations, emb.images);
  }
  if (cfg.components.in_batch) {
    total = accumulate_term(tape, total, mc_loss(tape, *inbatch, cfg.tau0), 1.0);
  }
  if (cfg.components.negative_locations) {
    const PairSet neg = build_negative_location_pairs(tape, *emb.negative_locations, emb.images,
                                                      emb.negatives_per_image);
    total = accumulate_term(tape, total, mc_loss(tape, PairSet::merge(*inbatch, neg), cfg.tau1),
                            cfg.alpha1);
  }
  if (cfg.components.simcse) {
    total = accumulate_term(
        tape, total,
        mc_loss(tape, build_simcse_pairs(tape, emb.locations, *emb.second_pass), cfg.tau2),
        cfg.alpha2);
  }
  return *total;
}

Var csp_nce_objective(Tape& tape, const EncoderBinding& encoder,
                      const LocationEncoderParams& params, const LinearBinding& projection,
                      std::span<const GeoLocation> locs, const Matrix& features,
                      const ContrastiveConfig& cfg, Rng& rng) {
  if (cfg.loss != LossKind::kNce) throw ConfigError("csp_nce_objective needs loss = nce");
  return combine_nce(tape, embed_batch(tape, encoder, params, projection, locs, features, cfg, rng),
                     cfg);
}

Var csp_mc_objective(Tape& tape, const EncoderBinding& encoder,
                     const LocationEncoderParams& params, const LinearBinding& projection,
                     std::span<const GeoLocation> locs, const Matrix& features,
                     const ContrastiveConfig& cfg, Rng& rng) {
  if (cfg.loss != LossKind::kMc) throw ConfigError("csp_mc_objective needs loss = mc");
  return combine_mc(tape, embed_batch(tape, encoder, params, projection, locs, features, cfg, rng),
                    cfg);
}

Var mse_objective(Tape& tape, const EncoderBinding& encoder, const LocationEncoderParams& params,
                  const LinearBinding& regressor, std::span<const GeoLocation> locs,
                  const Matrix& features, Rng& rng) {
  if (features.rows() != locs.size()) throw ShapeError("feature rows must match the batch size");
  Var emb = encode_batch(tape, encoder, params, locs, Mode::kTrain, &rng);
  Var pred = forward(tape, regressor, emb);
  if (!tape.value(pred).same_shape(features)) {
    throw ShapeError("regressor output width must equal the feature dimension");
  }
  return mean_squared_error(tape, pred, features);
}

}  // namespace csp
