#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "csp/location_encoder.hpp"
#include "csp/matrix.hpp"

namespace csp {

/// One agglomeration step. The merged cluster keeps slot `a` (a < b); slot
/// i always contains point i, so slots double as point indices.
struct Merge {
  std::size_t a;
  std::size_t b;
  double height;  // increase in within-cluster sum of squares
  std::size_t size;
};

/// Ward linkage on Euclidean distance via the nearest-neighbor chain.
/// Returns n - 1 merges in the order they were performed.
std::vector<Merge> ward_linkage(const Matrix& points);

/// Applies the n - k lowest merges and labels clusters 0..k-1 in order of
/// first appearance.
std::vector<int> cut_tree(std::size_t n, const std::vector<Merge>& merges, std::size_t k);

std::vector<int> ward_cluster(const Matrix& points, std::size_t k);

/// lon/lat in radians, one embedding row per location.
struct EmbeddingTable {
  std::vector<GeoLocation> locations;
  Matrix embeddings;
};

/// Cell centers of a regular grid, latitude-major. Throws UsageError
/// unless resolution_deg > 0.
std::vector<GeoLocation> grid_locations(double resolution_deg);

EmbeddingTable grid_embeddings(const LocationEncoderParams& params, double resolution_deg);

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_table(const std::filesystem::path& path);

void write_cluster_table(const std::filesystem::path& path,
                         const std::vector<GeoLocation>& locations,
                         const std::vector<int>& cluster_ids);

}  // namespace csp
