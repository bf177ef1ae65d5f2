#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csp/dataset.hpp"
#include "csp/linear.hpp"
#include "csp/location_encoder.hpp"
#include "csp/objectives.hpp"
#include "csp/supervised.hpp"

namespace csp {

/// Ordered `key = value` pairs. Text form: one pair per line, `#` starts a
/// comment, blank lines ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<config>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

/// Everything one pipeline run needs. Unset paths mean "generate".
struct TrainConfig {
  std::uint64_t seed = 0;

  // data
  std::string train_path;
  std::string eval_path;
  BenchmarkShape shape;
  std::size_t train_size = 5000;  // M
  std::size_t eval_size = 2000;

  EncoderConfig encoder;

  // pre-training; pretrain_enabled = false is the supervised-only baseline
  bool pretrain_enabled = true;
  ContrastiveConfig contrastive;
  double pretrain_lr = 0.0002;  // eta_unsuper
  int pretrain_epochs = 100;
  int batch_size = 64;  // N

  SupervisedConfig supervised;
  HeadTrainConfig head;
  double ratio = 5.0;                  // lambda %
  std::vector<double> ratios{5.0};     // run-experiment cells

  double grid_resolution_deg = 1.0;
  int clusters = 10;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  KeyValues to_key_values() const;
  /// Starts from defaults; unknown keys are an error.
  static TrainConfig from_key_values(const KeyValues& kv);
  /// Sets fields without validating; call validate() afterwards.
  void apply(const KeyValues& overrides);

  /// FNV-1a over the canonical key-value text.
  std::uint64_t hash() const;
};

std::string hex_hash(std::uint64_t h);

}  // namespace csp
