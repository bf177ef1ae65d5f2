#include "csp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "csp/errors.hpp"

namespace csp {

void Dataset::add(GeoTaggedExample example) {
  if (example.feature.size() != feature_dim_) {
    throw DimensionMismatchError("feature length " + std::to_string(example.feature.size()) +
                                 " does not match dataset dimension " +
                                 std::to_string(feature_dim_));
  }
  if (labeled() != example.label.has_value()) {
    throw UsageError(labeled() ? "labeled dataset received an unlabeled example"
                               : "unlabeled dataset received a labeled example");
  }
  if (example.label && (*example.label < 0 || *example.label >= num_classes_)) {
    throw UsageError("label " + std::to_string(*example.label) + " outside [0, " +
                     std::to_string(num_classes_) + ")");
  }
  examples_.push_back(std::move(example));
}

Dataset Dataset::without_labels() const {
  Dataset out(feature_dim_, 0);
  out.seed = seed;
  out.provenance = provenance;
  out.examples_ = examples_;
  for (auto& e : out.examples_) e.label.reset();
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(feature_dim_, num_classes_);
  out.seed = seed;
  out.provenance = provenance;
  for (std::size_t i : indices) out.examples_.push_back(examples_.at(i));
  return out;
}

std::vector<GeoLocation> Dataset::locations(std::span<const std::size_t> indices) const {
  std::vector<GeoLocation> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(examples_.at(i).location);
  return out;
}

Matrix Dataset::features(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), feature_dim_);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Vector& f = examples_.at(indices[r]).feature;
    std::copy(f.begin(), f.end(), out.row_span(r).begin());
  }
  return out;
}

std::vector<int> Dataset::labels(std::span<const std::size_t> indices) const {
  if (!labeled()) throw UsageError("labels requested from an unlabeled dataset");
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(*examples_.at(i).label);
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (classes.empty()) throw ConfigError("synthetic spec needs at least one class");
  const std::size_t dim = classes.front().prototype.size();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const ClassSpec& cls = classes[c];
    const std::string where = "class " + std::to_string(c) + ": ";
    if (cls.components.empty()) throw ConfigError(where + "no spatial components");
    if (cls.prototype.size() != dim) throw ConfigError(where + "prototype length differs");
    if (!(cls.feature_noise >= 0.0)) throw ConfigError(where + "feature noise must be >= 0");
    double total = 0.0;
    for (const auto& comp : cls.components) {
      if (!(comp.kappa > 0.0)) throw ConfigError(where + "kappa must be > 0");
      if (!(comp.weight >= 0.0)) throw ConfigError(where + "mixture weight must be >= 0");
      total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError(where + "mixture weights must sum to 1");
  }
}

namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 to_cartesian(const GeoLocation& g) {
  return {std::cos(g.lat()) * std::cos(g.lon()), std::cos(g.lat()) * std::sin(g.lon()),
          std::sin(g.lat())};
}

GeoLocation to_geo(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  const double z = std::clamp(v.z / n, -1.0, 1.0);
  return GeoLocation(std::atan2(v.y, v.x), std::asin(z));
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

}  // namespace

double angular_distance(const GeoLocation& a, const GeoLocation& b) {
  const Vec3 p = to_cartesian(a), q = to_cartesian(b);
  const Vec3 c = cross(p, q);
  const double sin_part = std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
  const double cos_part = p.x * q.x + p.y * q.y + p.z * q.z;
  return std::atan2(sin_part, cos_part);
}

GeoLocation sample_von_mises_fisher(const GeoLocation& mean, double kappa, Rng& rng) {
  if (!(kappa > 0.0)) throw ConfigError("von Mises-Fisher needs kappa > 0");
  const Vec3 mu = to_cartesian(mean);
  // Cosine of the angle to the mean: inverse CDF of the marginal on [-1, 1].
  const double u = 1.0 - rng.uniform();  // (0, 1]
  const double w = std::clamp(1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa,
                              -1.0, 1.0);
  const double theta = 2.0 * kPi * rng.uniform();
  // Orthonormal tangent basis at mu.
  const Vec3 helper = std::abs(mu.z) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
  const Vec3 e1 = normalized(cross(mu, helper));
  const Vec3 e2 = cross(mu, e1);
  const double r = std::sqrt(std::max(0.0, 1.0 - w * w));
  const double c = std::cos(theta), s = std::sin(theta);
  return to_geo({w * mu.x + r * (c * e1.x + s * e2.x), w * mu.y + r * (c * e1.y + s * e2.y),
                 w * mu.z + r * (c * e1.z + s * e2.z)});
}

SyntheticSpec make_benchmark_spec(const BenchmarkShape& shape, Rng& rng) {
  if (shape.num_classes < 1 || shape.components_per_class < 1 || shape.feature_dim < 1) {
    throw ConfigError("benchmark shape needs positive class, component and feature counts");
  }
  SyntheticSpec spec;
  for (int c = 0; c < shape.num_classes; ++c) {
    ClassSpec cls;
    for (int k = 0; k < shape.components_per_class; ++k) {
      cls.components.push_back({uniform_sphere_sample(rng), shape.kappa,
                                1.0 / static_cast<double>(shape.components_per_class)});
    }
    cls.prototype.resize(shape.feature_dim);
    for (double& v : cls.prototype) v = rng.normal(0.0, shape.prototype_scale);
    cls.feature_noise = shape.feature_noise;
    spec.classes.push_back(std::move(cls));
  }
  // Renormalize so weights sum to exactly 1 in floating point.
  for (auto& cls : spec.classes) {
    double total = 0.0;
    for (auto& comp : cls.components) total += comp.weight;
    for (auto& comp : cls.components) comp.weight /= total;
  }
  spec.validate();
  return spec;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  if (count < 1) throw ConfigError("synthetic dataset needs M >= 1");
  Dataset ds(spec.feature_dim(), spec.num_classes());
  ds.provenance = "synthetic-vmf";
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.below(spec.classes.size()));
    const ClassSpec& cls = spec.classes[label];
    double pick = rng.uniform();
    std::size_t comp = 0;
    while (comp + 1 < cls.components.size() && pick >= cls.components[comp].weight) {
      pick -= cls.components[comp].weight;
      ++comp;
    }
    GeoTaggedExample ex;
    ex.location = sample_von_mises_fisher(cls.components[comp].center, cls.components[comp].kappa, rng);
    ex.feature = cls.prototype;
    if (cls.feature_noise > 0.0) {
      for (double& v : ex.feature) v += rng.normal(0.0, cls.feature_noise);
    }
    ex.label = label;
    ds.add(std::move(ex));
  }
  return ds;
}

Dataset stratified_sample(const Dataset& ds, double ratio_percent, Rng& rng) {
  if (!ds.labeled()) throw UsageError("stratified sampling needs a labeled dataset");
  if (!(ratio_percent > 0.0 && ratio_percent <= 100.0)) {
    throw ConfigError("sampling ratio must lie in (0, 100]");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[*ds[i].label].push_back(i);

  std::vector<std::size_t> chosen;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    const double exact = ratio_percent / 100.0 * static_cast<double>(members.size());
    std::size_t take = static_cast<std::size_t>(std::llround(exact));
    take = std::clamp<std::size_t>(take, 1, members.size());
    // Partial Fisher-Yates over a copy, then restore original order.
    std::vector<std::size_t> pool = members;
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t pick = j + rng.below(pool.size() - j);
      std::swap(pool[j], pool[pick]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    chosen.insert(chosen.end(), pool.begin(), pool.end());
  }
  return ds.subset(chosen);
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t count, std::size_t batch_size,
                                                  Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    if (end - start < batch_size && end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw FormatError("could not format double");
  return std::string(buf, end);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw FormatError("not a number: '" + std::string(token) + "'");
  }
  return v;
}

namespace {

constexpr int kDatasetVersion = 1;

std::size_t parse_count(const std::string& field, const std::string& key) {
  if (field.rfind(key + "=", 0) != 0) {
    throw MalformedHeaderError("dataset header: expected " + key + "=<int>, got '" + field + "'");
  }
  const std::string digits = field.substr(key.size() + 1);
  long long v = 0;
  auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || end != digits.data() + digits.size() || v < 0) {
    throw MalformedHeaderError("dataset header: bad value for " + key);
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out << "GEOCSP v" << kDatasetVersion << " M=" << ds.size() << " DIM=" << ds.feature_dim()
      << " Q=" << ds.num_classes() << '\n';
  for (const auto& ex : ds.examples()) {
    out << format_double(ex.location.lon()) << ' ' << format_double(ex.location.lat()) << ' '
        << (ex.label ? *ex.label : -1);
    for (double f : ex.feature) out << ' ' << format_double(f);
    out << '\n';
  }
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open dataset '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw MalformedHeaderError("dataset file is empty");
  std::istringstream header(line);
  std::string magic, version, m_field, dim_field, q_field, extra;
  header >> magic >> version >> m_field >> dim_field >> q_field;
  if (magic != "GEOCSP" || version.size() < 2 || version[0] != 'v' || q_field.empty() ||
      (header >> extra)) {
    throw MalformedHeaderError("dataset header must read 'GEOCSP v1 M=<int> DIM=<int> Q=<int>'");
  }
  int file_version = 0;
  {
    auto [end, ec] = std::from_chars(version.data() + 1, version.data() + version.size(),
                                     file_version);
    if (ec != std::errc() || end != version.data() + version.size()) {
      throw MalformedHeaderError("dataset header: bad version '" + version + "'");
    }
  }
  if (file_version != kDatasetVersion) {
    throw UnsupportedVersionError("dataset format version " + std::to_string(file_version) +
                                  " is not supported (this build reads v" +
                                  std::to_string(kDatasetVersion) + ")");
  }
  const std::size_t m = parse_count(m_field, "M");
  const std::size_t dim = parse_count(dim_field, "DIM");
  const std::size_t q = parse_count(q_field, "Q");

  Dataset ds(dim, static_cast<int>(q));
  std::vector<std::string_view> tokens;
  for (std::size_t row = 0; row < m; ++row) {
    if (!std::getline(in, line)) {
      throw TruncatedFileError("dataset declares " + std::to_string(m) + " records but only " +
                               std::to_string(row) + " are present");
    }
    tokens.clear();
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t\r");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto stop = rest.find_first_of(" \t\r");
      tokens.push_back(rest.substr(0, stop));
      rest.remove_prefix(stop == std::string_view::npos ? rest.size() : stop);
    }
    if (tokens.size() != dim + 3) {
      throw DimensionMismatchError("record " + std::to_string(row) + " has " +
                                   std::to_string(tokens.size() < 3 ? 0 : tokens.size() - 3) +
                                   " feature values, header says DIM=" + std::to_string(dim));
    }
    GeoTaggedExample ex;
    const double lon = parse_double(tokens[0]);
    const double lat = parse_double(tokens[1]);
    ex.location = GeoLocation(lon, lat);
    const double label = parse_double(tokens[2]);
    if (label != std::floor(label)) throw FormatError("record " + std::to_string(row) + ": non-integer label");
    if (label >= 0) ex.label = static_cast<int>(label);
    ex.feature.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) ex.feature[j] = parse_double(tokens[3 + j]);
    try {
      ds.add(std::move(ex));
    } catch (const UsageError& e) {
      throw FormatError("record " + std::to_string(row) + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace csp
