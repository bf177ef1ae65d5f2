#include "csp/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "csp/dataset.hpp"
#include "csp/errors.hpp"

namespace csp {

namespace {

double ward_distance(const Matrix& centroids, const std::vector<std::size_t>& sizes,
                     std::size_t i, std::size_t j) {
  const auto ci = centroids.row_span(i);
  const auto cj = centroids.row_span(j);
  double sq = 0.0;
  for (std::size_t c = 0; c < ci.size(); ++c) {
    const double diff = ci[c] - cj[c];
    sq += diff * diff;
  }
  const double ni = static_cast<double>(sizes[i]), nj = static_cast<double>(sizes[j]);
  return ni * nj / (ni + nj) * sq;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

std::vector<Merge> ward_linkage(const Matrix& points) {
  const std::size_t n = points.rows();
  if (n == 0) throw UsageError("clustering needs at least one row");
  if (!points.all_finite()) throw NumericError("clustering input contains non-finite values");
  Matrix centroids = points;
  std::vector<std::size_t> sizes(n, 1);
  std::vector<bool> active(n, true);
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  std::vector<std::size_t> chain;
  std::size_t remaining = n;

  while (remaining > 1) {
    if (chain.empty()) {
      chain.push_back(static_cast<std::size_t>(std::find(active.begin(), active.end(), true) -
                                               active.begin()));
    }
    const std::size_t top = chain.back();
    const std::size_t prev = chain.size() > 1 ? chain[chain.size() - 2] : n;
    // Prefer the previous chain element on ties so the chain terminates.
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    if (prev != n) {
      best = prev;
      best_d = ward_distance(centroids, sizes, top, prev);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j] || j == top || j == prev) continue;
      const double d = ward_distance(centroids, sizes, top, j);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best == prev) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t a = std::min(top, prev), b = std::max(top, prev);
      const double na = static_cast<double>(sizes[a]), nb = static_cast<double>(sizes[b]);
      auto ca = centroids.row_span(a);
      const auto cb = centroids.row_span(b);
      for (std::size_t c = 0; c < ca.size(); ++c) ca[c] = (na * ca[c] + nb * cb[c]) / (na + nb);
      sizes[a] += sizes[b];
      active[b] = false;
      --remaining;
      merges.push_back({a, b, best_d, sizes[a]});
    } else {
      chain.push_back(best);
    }
  }
  return merges;
}

std::vector<int> cut_tree(std::size_t n, const std::vector<Merge>& merges, std::size_t k) {
  if (k < 1) throw UsageError("cluster count must be at least 1");
  if (k > n) {
    throw UsageError("cluster count " + std::to_string(k) + " exceeds row count " +
                     std::to_string(n));
  }
  if (merges.size() + 1 != n) throw UsageError("merge list does not describe " + std::to_string(n) + " rows");
  std::vector<std::size_t> order(merges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return merges[x].height < merges[y].height;
  });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t m = 0; m < n - k; ++m) {
    const Merge& step = merges[order[m]];
    const std::size_t ra = find_root(parent, step.a), rb = find_root(parent, step.b);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<int> labels(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find_root(parent, i);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

std::vector<int> ward_cluster(const Matrix& points, std::size_t k) {
  if (k < 1) throw UsageError("cluster count must be at least 1");
  if (points.rows() == 0) throw UsageError("clustering needs at least one row");
  if (k > points.rows()) {
    throw UsageError("cluster count " + std::to_string(k) + " exceeds row count " +
                     std::to_string(points.rows()));
  }
  return cut_tree(points.rows(), ward_linkage(points), k);
}

std::vector<GeoLocation> grid_locations(double resolution_deg) {
  if (!(resolution_deg > 0.0) || !std::isfinite(resolution_deg)) {
    throw UsageError("grid resolution must be a positive number of degrees");
  }
  const auto n_lat = static_cast<std::size_t>(std::floor(180.0 / resolution_deg + 1e-9));
  const auto n_lon = static_cast<std::size_t>(std::floor(360.0 / resolution_deg + 1e-9));
  if (n_lat == 0 || n_lon == 0) throw UsageError("grid resolution is coarser than the globe");
  const double deg = kPi / 180.0;
  std::vector<GeoLocation> out;
  out.reserve(n_lat * n_lon);
  for (std::size_t i = 0; i < n_lat; ++i) {
    const double lat = -90.0 + (static_cast<double>(i) + 0.5) * resolution_deg;
    for (std::size_t j = 0; j < n_lon; ++j) {
      const double lon = -180.0 + (static_cast<double>(j) + 0.5) * resolution_deg;
      out.emplace_back(lon * deg, lat * deg);
    }
  }
  return out;
}

EmbeddingTable grid_embeddings(const LocationEncoderParams& params, double resolution_deg) {
  EmbeddingTable table;
  table.locations = grid_locations(resolution_deg);
  table.embeddings = encode_batch(table.locations, params, Mode::kEval, nullptr);
  return table;
}

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  if (table.locations.size() != table.embeddings.rows()) {
    throw ShapeError("embedding table: location and embedding counts differ");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out << "# lon lat e0..e" << (table.embeddings.cols() ? table.embeddings.cols() - 1 : 0)
      << " (radians)\n";
  for (std::size_t i = 0; i < table.locations.size(); ++i) {
    out << format_double(table.locations[i].lon()) << ' ' << format_double(table.locations[i].lat());
    for (double v : table.embeddings.row_span(i)) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
}

EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open embedding table '" + path.string() + "'");
  std::vector<GeoLocation> locs;
  std::vector<double> values;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) row.push_back(parse_double(token));
    if (row.size() < 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected lon, lat and at least one embedding value");
    }
    if (width == 0) {
      width = row.size() - 2;
    } else if (row.size() - 2 != width) {
      throw DimensionMismatchError(path.string() + ":" + std::to_string(line_no) +
                                   ": row width differs from the first row");
    }
    locs.emplace_back(row[0], row[1]);
    values.insert(values.end(), row.begin() + 2, row.end());
  }
  EmbeddingTable table;
  table.embeddings = Matrix(locs.size(), width);
  table.embeddings.data() = std::move(values);
  table.locations = std::move(locs);
  return table;
}

void write_cluster_table(const std::filesystem::path& path,
                         const std::vector<GeoLocation>& locations,
                         const std::vector<int>& cluster_ids) {
  if (locations.size() != cluster_ids.size()) {
    throw ShapeError("cluster table: location and label counts differ");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out << "# lon lat cluster (radians)\n";
  for (std::size_t i = 0; i < locations.size(); ++i) {
    out << format_double(locations[i].lon()) << ' ' << format_double(locations[i].lat()) << ' '
        << cluster_ids[i] << '\n';
  }
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
}

}  // namespace csp
