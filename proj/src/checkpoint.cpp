#include "csp/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "csp/dataset.hpp"
#include "csp/errors.hpp"

namespace csp {

namespace {

constexpr const char* kMagic = "GEOCSP-CHECKPOINT";
constexpr int kVersion = 1;

void write_matrix(std::ostringstream& out, const std::string& name, const Matrix& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

void write_linear(std::ostringstream& out, const std::string& name, const LinearLayer& l) {
  write_matrix(out, name + ".weight", l.weight);
  write_matrix(out, name + ".bias", l.bias);
}

std::size_t to_size(const std::string& token, const std::string& what) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw FormatError("checkpoint: bad " + what + " '" + token + "'");
  }
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream out;
  const EncoderConfig& cfg = ckpt.encoder.config;
  out << kMagic << " v" << kVersion << '\n';
  out << "encoder.kind " << (cfg.positional.kind == PositionalEncodingConfig::Kind::kWrap ? "wrap" : "grid")
      << '\n';
  out << "encoder.scales " << cfg.positional.scales << '\n';
  out << "encoder.r_min " << format_double(cfg.positional.r_min) << '\n';
  out << "encoder.r_max " << format_double(cfg.positional.r_max) << '\n';
  out << "encoder.hidden_layers " << cfg.hidden_layers << '\n';
  out << "encoder.hidden_units " << cfg.hidden_units << '\n';
  out << "encoder.dropout " << format_double(cfg.dropout) << '\n';
  out << "encoder.leaky_slope " << format_double(cfg.leaky_slope) << '\n';
  out << "encoder.dim " << cfg.output_dim << '\n';
  for (std::size_t l = 0; l < ckpt.encoder.weights.size(); ++l) {
    write_matrix(out, "encoder.w" + std::to_string(l), ckpt.encoder.weights[l]);
    write_matrix(out, "encoder.b" + std::to_string(l), ckpt.encoder.biases[l]);
  }
  if (ckpt.projection) write_linear(out, "projection", *ckpt.projection);
  if (ckpt.regressor) write_linear(out, "regressor", *ckpt.regressor);
  if (ckpt.class_embeddings) write_matrix(out, "class_embeddings", *ckpt.class_embeddings);
  if (ckpt.head) write_linear(out, "head", *ckpt.head);
  out << "end\n";
  return out.str();
}

Checkpoint deserialize_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw MalformedHeaderError("checkpoint is empty");
  {
    std::istringstream header(line);
    std::string magic, version;
    header >> magic >> version;
    if (magic != kMagic || version.size() < 2 || version[0] != 'v') {
      throw MalformedHeaderError("checkpoint header must read '" + std::string(kMagic) + " v1'");
    }
    if (version != "v" + std::to_string(kVersion)) {
      throw UnsupportedVersionError("checkpoint version " + version.substr(1) + " is not supported");
    }
  }
  std::map<std::string, std::string> scalars;
  std::map<std::string, Matrix> matrices;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "matrix") {
      std::string name, rows_s, cols_s;
      fields >> name >> rows_s >> cols_s;
      const std::size_t rows = to_size(rows_s, "row count");
      const std::size_t cols = to_size(cols_s, "column count");
      Matrix m(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw TruncatedFileError("checkpoint ends inside matrix " + name);
        std::istringstream values(line);
        std::string token;
        std::size_t c = 0;
        while (values >> token) {
          if (c >= cols) throw DimensionMismatchError("matrix " + name + ": too many columns");
          m(r, c++) = parse_double(token);
        }
        if (c != cols) throw DimensionMismatchError("matrix " + name + ": too few columns");
      }
      matrices[name] = std::move(m);
    } else {
      std::string value;
      fields >> value;
      scalars[key] = value;
    }
  }
  if (!ended) throw TruncatedFileError("checkpoint is missing its 'end' marker");

  auto scalar = [&](const std::string& key) -> const std::string& {
    const auto it = scalars.find(key);
    if (it == scalars.end()) throw FormatError("checkpoint: missing '" + key + "'");
    return it->second;
  };
  auto integer = [&](const std::string& key) { return static_cast<int>(to_size(scalar(key), key)); };
  auto take = [&](const std::string& name) -> std::optional<Matrix> {
    auto it = matrices.find(name);
    if (it == matrices.end()) return std::nullopt;
    Matrix m = std::move(it->second);
    matrices.erase(it);
    return m;
  };
  auto take_linear = [&](const std::string& name) -> std::optional<LinearLayer> {
    auto w = take(name + ".weight");
    auto b = take(name + ".bias");
    if (!w && !b) return std::nullopt;
    if (!w || !b) throw FormatError("checkpoint: incomplete layer '" + name + "'");
    if (b->rows() != 1 || b->cols() != w->cols()) {
      throw DimensionMismatchError("checkpoint: bias of '" + name + "' does not fit its weight");
    }
    return LinearLayer{std::move(*w), std::move(*b)};
  };

  Checkpoint ckpt;
  EncoderConfig& cfg = ckpt.encoder.config;
  const std::string& kind = scalar("encoder.kind");
  if (kind == "wrap") {
    cfg.positional.kind = PositionalEncodingConfig::Kind::kWrap;
  } else if (kind == "grid") {
    cfg.positional.kind = PositionalEncodingConfig::Kind::kGrid;
  } else {
    throw FormatError("checkpoint: unknown encoder kind '" + kind + "'");
  }
  cfg.positional.scales = integer("encoder.scales");
  cfg.positional.r_min = parse_double(scalar("encoder.r_min"));
  cfg.positional.r_max = parse_double(scalar("encoder.r_max"));
  cfg.hidden_layers = integer("encoder.hidden_layers");
  cfg.hidden_units = integer("encoder.hidden_units");
  cfg.dropout = parse_double(scalar("encoder.dropout"));
  cfg.leaky_slope = parse_double(scalar("encoder.leaky_slope"));
  cfg.output_dim = integer("encoder.dim");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid encoder config: ") + e.what());
  }

  std::size_t fan_in = cfg.positional.width();
  for (int l = 0; l <= cfg.hidden_layers; ++l) {
    auto w = take("encoder.w" + std::to_string(l));
    auto b = take("encoder.b" + std::to_string(l));
    if (!w || !b) throw FormatError("checkpoint: missing encoder layer " + std::to_string(l));
    const std::size_t fan_out = static_cast<std::size_t>(
        l == cfg.hidden_layers ? cfg.output_dim : cfg.hidden_units);
    if (w->rows() != fan_in || w->cols() != fan_out || b->rows() != 1 || b->cols() != fan_out) {
      throw DimensionMismatchError("checkpoint: encoder layer " + std::to_string(l) +
                                   " has the wrong shape");
    }
    ckpt.encoder.weights.push_back(std::move(*w));
    ckpt.encoder.biases.push_back(std::move(*b));
    fan_in = fan_out;
  }
  ckpt.projection = take_linear("projection");
  ckpt.regressor = take_linear("regressor");
  ckpt.class_embeddings = take("class_embeddings");
  ckpt.head = take_linear("head");
  if (!matrices.empty()) {
    throw FormatError("checkpoint: unexpected matrix '" + matrices.begin()->first + "'");
  }
  const auto d = static_cast<std::size_t>(cfg.output_dim);
  if (ckpt.projection && ckpt.projection->out_dim() != d) {
    throw DimensionMismatchError("checkpoint: projection output must equal encoder dim");
  }
  if (ckpt.regressor && ckpt.regressor->in_dim() != d) {
    throw DimensionMismatchError("checkpoint: regressor input must equal encoder dim");
  }
  if (ckpt.class_embeddings && ckpt.class_embeddings->rows() != d) {
    throw DimensionMismatchError("checkpoint: class embeddings must have d rows");
  }
  if (ckpt.head && ckpt.class_embeddings && ckpt.head->out_dim() != ckpt.class_embeddings->cols()) {
    throw DimensionMismatchError("checkpoint: head and class embeddings disagree on Q");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out << serialize_checkpoint(ckpt);
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace csp
