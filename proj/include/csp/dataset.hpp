#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csp/location_encoder.hpp"
#include "csp/matrix.hpp"
#include "csp/rng.hpp"

namespace csp {

struct GeoTaggedExample {
  GeoLocation location;
  Vector feature;            // frozen image feature, length DIM
  std::optional<int> label;  // in [0, Q) for labeled datasets

  friend bool operator==(const GeoTaggedExample&, const GeoTaggedExample&) = default;
};

/// Ordered, immutable-after-construction list of examples. A dataset is
/// labeled iff num_classes > 0, in which case every example carries a label.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t feature_dim, int num_classes) : feature_dim_(feature_dim), num_classes_(num_classes) {}

  /// Validates feature length and label presence/range.
  void add(GeoTaggedExample example);

  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  std::size_t feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }
  bool labeled() const { return num_classes_ > 0; }

  const GeoTaggedExample& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<GeoTaggedExample>& examples() const { return examples_; }

  std::uint64_t seed = 0;
  std::string provenance;

  /// Copy with labels stripped (Q = 0).
  Dataset without_labels() const;
  Dataset subset(std::span<const std::size_t> indices) const;

  std::vector<GeoLocation> locations(std::span<const std::size_t> indices) const;
  /// Rows are the selected features.
  Matrix features(std::span<const std::size_t> indices) const;
  std::vector<int> labels(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.feature_dim_ == b.feature_dim_ && a.num_classes_ == b.num_classes_ &&
           a.examples_ == b.examples_;
  }

 private:
  std::size_t feature_dim_ = 0;
  int num_classes_ = 0;
  std::vector<GeoTaggedExample> examples_;
};

struct SpatialComponent {
  GeoLocation center;
  double kappa = 1.0;  // von Mises-Fisher concentration
  double weight = 1.0;
};

struct ClassSpec {
  std::vector<SpatialComponent> components;
  Vector prototype;
  double feature_noise = 0.0;  // sigma_f
};

struct SyntheticSpec {
  std::vector<ClassSpec> classes;

  int num_classes() const { return static_cast<int>(classes.size()); }
  std::size_t feature_dim() const { return classes.empty() ? 0 : classes.front().prototype.size(); }
  void validate() const;
};

/// Knobs for the standard desk-scale benchmark world.
struct BenchmarkShape {
  int num_classes = 20;
  int components_per_class = 2;
  double kappa = 20.0;
  std::size_t feature_dim = 32;
  /// Prototype entries ~ N(0, prototype_scale^2); noise sigma_f per entry.
  double prototype_scale = 1.0;
  double feature_noise = 1.0;
};

/// Random class centers and prototypes drawn from rng.
SyntheticSpec make_benchmark_spec(const BenchmarkShape& shape, Rng& rng);

/// Draw from a von Mises-Fisher distribution on S^2 (tangent-normal
/// construction).
GeoLocation sample_von_mises_fisher(const GeoLocation& mean, double kappa, Rng& rng);

/// Great-circle angle between two locations, radians.
double angular_distance(const GeoLocation& a, const GeoLocation& b);

Dataset generate_synthetic(const SyntheticSpec& spec, std::size_t count, Rng& rng);

/// Per class, round(ratio% * count) examples without replacement (at least
/// one per nonempty class), ordered by class id then original index.
Dataset stratified_sample(const Dataset& ds, double ratio_percent, Rng& rng);

/// Epoch schedule: a seeded permutation cut into batches of `batch_size`;
/// a final remainder smaller than 2 is dropped.
std::vector<std::vector<std::size_t>> minibatches(std::size_t count, std::size_t batch_size,
                                                  Rng& rng);
inline std::vector<std::vector<std::size_t>> minibatches(const Dataset& ds, std::size_t batch_size,
                                                         Rng& rng) {
  return minibatches(ds.size(), batch_size, rng);
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
/// Strict parse of a whole token; throws FormatError.
double parse_double(std::string_view token);

}  // namespace csp
