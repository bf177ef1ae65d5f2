#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "csp/linear.hpp"
#include "csp/location_encoder.hpp"
#include "csp/supervised.hpp"

namespace csp {

/// Everything a stage hands to the next. Only the encoder is mandatory.
struct Checkpoint {
  LocationEncoderParams encoder;
  std::optional<ProjectionParams> projection;  // contrastive pre-training
  std::optional<LinearLayer> regressor;        // MSE pre-training
  std::optional<ClassEmbeddingMatrix> class_embeddings;
  std::optional<ClassifierHead> head;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Text form: a `GEOCSP-CHECKPOINT v1` line, encoder config lines, then one
/// `matrix <name> <rows> <cols>` block per weight with values in shortest
/// round-trip decimal. Round trips are bit-exact.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csp
