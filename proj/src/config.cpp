#include "csp/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "csp/errors.hpp"

namespace csp {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    if (kv.count(key)) {
      throw ConfigError(source + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path.string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string hex_hash(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const FormatError&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) throw ConfigError("config key '" + key + "': empty list item");
    out.push_back(to_double(key, t));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string list_string(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += format_double(xs[i]);
  }
  return s;
}

/// Uniform get/set access to every config field, keyed by its flat name.
struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string& key, const std::string&)> set;
};

#define CSP_DOUBLE(member)                                                          \
  Field {                                                                           \
    [](const TrainConfig& c) { return format_double(c.member); },                   \
        [](TrainConfig& c, const std::string& k, const std::string& v) {            \
          c.member = to_double(k, v);                                               \
        }                                                                           \
  }
#define CSP_INT(member, type)                                                       \
  Field {                                                                           \
    [](const TrainConfig& c) { return std::to_string(c.member); },                  \
        [](TrainConfig& c, const std::string& k, const std::string& v) {            \
          c.member = static_cast<type>(to_integer(k, v));                           \
        }                                                                           \
  }
#define CSP_STRING(member)                                                          \
  Field {                                                                           \
    [](const TrainConfig& c) { return c.member; },                                  \
        [](TrainConfig& c, const std::string&, const std::string& v) { c.member = v; } \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed", Field{[](const TrainConfig& c) { return std::to_string(c.seed); },
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                       c.seed = to_unsigned(k, v);
                     }}},
      {"data.train", CSP_STRING(train_path)},
      {"data.eval", CSP_STRING(eval_path)},
      {"data.classes", CSP_INT(shape.num_classes, int)},
      {"data.components_per_class", CSP_INT(shape.components_per_class, int)},
      {"data.kappa", CSP_DOUBLE(shape.kappa)},
      {"data.feature_dim", CSP_INT(shape.feature_dim, std::size_t)},
      {"data.prototype_scale", CSP_DOUBLE(shape.prototype_scale)},
      {"data.feature_noise", CSP_DOUBLE(shape.feature_noise)},
      {"data.train_size", CSP_INT(train_size, std::size_t)},
      {"data.eval_size", CSP_INT(eval_size, std::size_t)},
      {"encoder.kind",
       Field{[](const TrainConfig& c) {
               return std::string(c.encoder.positional.kind ==
                                          PositionalEncodingConfig::Kind::kWrap
                                      ? "wrap"
                                      : "grid");
             },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "wrap") {
                 c.encoder.positional.kind = PositionalEncodingConfig::Kind::kWrap;
               } else if (v == "grid") {
                 c.encoder.positional.kind = PositionalEncodingConfig::Kind::kGrid;
               } else {
                 throw ConfigError("config key '" + k + "': expected wrap or grid, got '" + v + "'");
               }
             }}},
      {"encoder.scales", CSP_INT(encoder.positional.scales, int)},
      {"encoder.r_min", CSP_DOUBLE(encoder.positional.r_min)},
      {"encoder.r_max", CSP_DOUBLE(encoder.positional.r_max)},
      {"encoder.hidden_layers", CSP_INT(encoder.hidden_layers, int)},
      {"encoder.hidden_units", CSP_INT(encoder.hidden_units, int)},
      {"encoder.dropout", CSP_DOUBLE(encoder.dropout)},
      {"encoder.leaky_slope", CSP_DOUBLE(encoder.leaky_slope)},
      {"encoder.dim", CSP_INT(encoder.output_dim, int)},
      {"pretrain.loss",
       Field{[](const TrainConfig& c) {
               return c.pretrain_enabled ? to_string(c.contrastive.loss) : std::string("none");
             },
             [](TrainConfig& c, const std::string&, const std::string& v) {
               c.pretrain_enabled = v != "none";
               if (c.pretrain_enabled) c.contrastive.loss = parse_loss_kind(v);
             }}},
      {"pretrain.components",
       Field{[](const TrainConfig& c) { return c.contrastive.components.to_string(); },
             [](TrainConfig& c, const std::string&, const std::string& v) {
               c.contrastive.components = Components::parse(v);
             }}},
      {"pretrain.alpha1", CSP_DOUBLE(contrastive.alpha1)},
      {"pretrain.alpha2", CSP_DOUBLE(contrastive.alpha2)},
      {"pretrain.beta1", CSP_DOUBLE(contrastive.beta1)},
      {"pretrain.beta2", CSP_DOUBLE(contrastive.beta2)},
      {"pretrain.tau0", CSP_DOUBLE(contrastive.tau0)},
      {"pretrain.tau1", CSP_DOUBLE(contrastive.tau1)},
      {"pretrain.tau2", CSP_DOUBLE(contrastive.tau2)},
      {"pretrain.negative_locations", CSP_INT(contrastive.num_negative_locations, int)},
      {"pretrain.lr", CSP_DOUBLE(pretrain_lr)},
      {"pretrain.epochs", CSP_INT(pretrain_epochs, int)},
      {"pretrain.batch_size", CSP_INT(batch_size, int)},
      {"finetune.beta", CSP_DOUBLE(supervised.beta)},
      {"finetune.lr", CSP_DOUBLE(supervised.learning_rate)},
      {"finetune.epochs", CSP_INT(supervised.epochs, int)},
      {"finetune.batch_size", CSP_INT(supervised.batch_size, int)},
      {"finetune.ratio", CSP_DOUBLE(ratio)},
      {"finetune.ratios",
       Field{[](const TrainConfig& c) { return list_string(c.ratios); },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               c.ratios = to_list(k, v);
             }}},
      {"head.lr", CSP_DOUBLE(head.learning_rate)},
      {"head.epochs", CSP_INT(head.epochs, int)},
      {"head.batch_size", CSP_INT(head.batch_size, int)},
      {"export.resolution_deg", CSP_DOUBLE(grid_resolution_deg)},
      {"cluster.k", CSP_INT(clusters, int)},
  };
  return table;
}

#undef CSP_DOUBLE
#undef CSP_INT
#undef CSP_STRING

}  // namespace

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  for (const auto& [key, field] : fields()) kv[key] = field.get(*this);
  return kv;
}

void TrainConfig::apply(const KeyValues& overrides) {
  for (const auto& [key, value] : overrides) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
  }
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig cfg;
  cfg.apply(kv);
  cfg.validate();
  return cfg;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
  };
  try {
    encoder.validate();
  } catch (const ConfigError& e) {
    fail("encoder.*", e.what());
  }
  if (pretrain_enabled) {
    try {
      contrastive.validate();
    } catch (const ConfigError& e) {
      fail("pretrain.*", e.what());
    }
    if (!(pretrain_lr > 0.0)) fail("pretrain.lr", "must be > 0");
    if (pretrain_epochs < 0) fail("pretrain.epochs", "must be >= 0");
    if (batch_size < 2) fail("pretrain.batch_size", "must be >= 2");
  }
  try {
    supervised.validate();
  } catch (const ConfigError& e) {
    fail("finetune.*", e.what());
  }
  try {
    head.validate();
  } catch (const ConfigError& e) {
    fail("head.*", e.what());
  }
  if (!(ratio > 0.0 && ratio <= 100.0)) fail("finetune.ratio", "must lie in (0, 100]");
  if (ratios.empty()) fail("finetune.ratios", "needs at least one ratio");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 100.0)) fail("finetune.ratios", "every ratio must lie in (0, 100]");
  }
  if (shape.num_classes < 1) fail("data.classes", "must be >= 1");
  if (shape.components_per_class < 1) fail("data.components_per_class", "must be >= 1");
  if (!(shape.kappa > 0.0)) fail("data.kappa", "must be > 0");
  if (shape.feature_dim < 1) fail("data.feature_dim", "must be >= 1");
  if (!(shape.feature_noise >= 0.0)) fail("data.feature_noise", "must be >= 0");
  if (train_size < 1) fail("data.train_size", "must be >= 1");
  if (eval_size < 1) fail("data.eval_size", "must be >= 1");
  if (!(grid_resolution_deg > 0.0)) fail("export.resolution_deg", "must be > 0");
  if (clusters < 1) fail("cluster.k", "must be >= 1");
}

std::uint64_t TrainConfig::hash() const {
  const std::string text = format_key_values(to_key_values());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace csp
