#include "csp/location_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csp/errors.hpp"
#include "csp/ops.hpp"

namespace csp {

double wrap_longitude(double lon) {
  if (!std::isfinite(lon)) throw NumericError("longitude is not finite");
  double wrapped = lon - 2.0 * kPi * std::floor((lon + kPi) / (2.0 * kPi));
  if (wrapped >= kPi) wrapped -= 2.0 * kPi;
  if (wrapped < -kPi) wrapped = -kPi;
  return wrapped;
}

GeoLocation::GeoLocation(double lon, double lat) : lon_(wrap_longitude(lon)), lat_(lat) {
  if (!std::isfinite(lat) || lat < -kPi / 2 || lat > kPi / 2) {
    throw UsageError("latitude " + std::to_string(lat) + " outside [-pi/2, pi/2]");
  }
}

void PositionalEncodingConfig::validate() const {
  if (kind == Kind::kWrap) return;
  if (scales < 1) throw ConfigError("grid encoder needs at least one scale");
  if (!(r_min > 0.0) || !(r_min <= r_max) || !std::isfinite(r_max)) {
    throw ConfigError("grid encoder needs 0 < r_min <= r_max");
  }
}

double PositionalEncodingConfig::scale(int s) const {
  if (scales == 1) return r_min;
  const double growth = std::pow(r_max / r_min, 1.0 / (scales - 1));
  return r_min * std::pow(growth, s);
}

void EncoderConfig::validate() const {
  positional.validate();
  if (hidden_layers < 0) throw ConfigError("hidden layer count must be >= 0");
  if (hidden_layers > 0 && hidden_units < 1) throw ConfigError("hidden units must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (output_dim < 1) throw ConfigError("output dimension must be >= 1");
}

LocationEncoderParams LocationEncoderParams::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  LocationEncoderParams p;
  p.config = config;
  std::size_t fan_in = config.positional.width();
  for (int l = 0; l <= config.hidden_layers; ++l) {
    const std::size_t fan_out = l == config.hidden_layers
                                    ? static_cast<std::size_t>(config.output_dim)
                                    : static_cast<std::size_t>(config.hidden_units);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(1, fan_out);
    fan_in = fan_out;
  }
  return p;
}

std::vector<Matrix*> LocationEncoderParams::parameters() {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::size_t LocationEncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vector wrap_encode(const GeoLocation& loc) {
  const double x = loc.lon() / kPi;
  const double y = 2.0 * loc.lat() / kPi;
  return {std::sin(kPi * x), std::cos(kPi * x), std::sin(kPi * y), std::cos(kPi * y)};
}

Vector grid_encode(const GeoLocation& loc, const PositionalEncodingConfig& cfg) {
  cfg.validate();
  const double x = loc.lon() / kPi;
  const double y = 2.0 * loc.lat() / kPi;
  Vector out;
  out.reserve(4 * static_cast<std::size_t>(cfg.scales));
  for (int s = 0; s < cfg.scales; ++s) {
    const double alpha = cfg.scale(s);
    out.push_back(std::sin(x / alpha));
    out.push_back(std::cos(x / alpha));
    out.push_back(std::sin(y / alpha));
    out.push_back(std::cos(y / alpha));
  }
  return out;
}

Vector positional_encode(const GeoLocation& loc, const PositionalEncodingConfig& cfg) {
  return cfg.kind == PositionalEncodingConfig::Kind::kWrap ? wrap_encode(loc)
                                                           : grid_encode(loc, cfg);
}

Matrix positional_encode_batch(std::span<const GeoLocation> locs,
                               const PositionalEncodingConfig& cfg) {
  cfg.validate();
  Matrix out(locs.size(), cfg.width());
  for (std::size_t i = 0; i < locs.size(); ++i) {
    const Vector row = positional_encode(locs[i], cfg);
    std::copy(row.begin(), row.end(), out.row_span(i).begin());
  }
  return out;
}

DropoutMask sample_dropout_mask(const EncoderConfig& config, std::size_t rows, Rng& rng) {
  const std::size_t k = static_cast<std::size_t>(config.hidden_units);
  const double keep = 1.0 - config.dropout;
  DropoutMask mask(static_cast<std::size_t>(config.hidden_layers), Matrix(rows, k));
  for (std::size_t r = 0; r < rows; ++r) {
    for (Matrix& layer : mask) {
      for (std::size_t j = 0; j < k; ++j) layer(r, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
  }
  return mask;
}

EncoderBinding bind(Tape& tape, const LocationEncoderParams& params, bool trainable) {
  EncoderBinding b;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    b.weights.push_back(trainable ? tape.variable(params.weights[l])
                                  : tape.constant(params.weights[l]));
    b.biases.push_back(trainable ? tape.variable(params.biases[l])
                                 : tape.constant(params.biases[l]));
  }
  return b;
}

Var encode_with_mask(Tape& tape, const EncoderBinding& binding,
                     const LocationEncoderParams& params, std::span<const GeoLocation> locs,
                     const DropoutMask* mask) {
  const auto& cfg = params.config;
  Var h = tape.constant(positional_encode_batch(locs, cfg.positional));
  for (int l = 0; l <= cfg.hidden_layers; ++l) {
    h = add_bias(tape, matmul(tape, h, binding.weights[l]), binding.biases[l]);
    if (l == cfg.hidden_layers) break;
    h = leaky_relu(tape, h, cfg.leaky_slope);
    if (mask != nullptr) h = multiply_constant(tape, h, (*mask)[l]);
  }
  return h;
}

Var encode_batch(Tape& tape, const EncoderBinding& binding, const LocationEncoderParams& params,
                 std::span<const GeoLocation> locs, Mode mode, Rng* rng) {
  const auto& cfg = params.config;
  const bool masked = mode == Mode::kTrain && cfg.dropout > 0.0 && cfg.hidden_layers > 0;
  if (!masked) return encode_with_mask(tape, binding, params, locs, nullptr);
  if (rng == nullptr) throw UsageError("train-mode encoding with dropout needs an rng");
  const std::uint64_t key = rng->next_u64();
  DropoutMask mask(static_cast<std::size_t>(cfg.hidden_layers),
                   Matrix(locs.size(), static_cast<std::size_t>(cfg.hidden_units)));
  for (std::size_t i = 0; i < locs.size(); ++i) {
    Rng row_rng = Rng::derive(key, i);
    const DropoutMask row = sample_dropout_mask(cfg, 1, row_rng);
    for (std::size_t l = 0; l < mask.size(); ++l) {
      std::copy(row[l].data().begin(), row[l].data().end(), mask[l].row_span(i).begin());
    }
  }
  return encode_with_mask(tape, binding, params, locs, &mask);
}

Matrix encode_batch(std::span<const GeoLocation> locs, const LocationEncoderParams& params,
                    Mode mode, Rng* rng) {
  if (locs.empty()) return Matrix(0, static_cast<std::size_t>(params.config.output_dim));
  Tape tape;
  const EncoderBinding b = bind(tape, params, false);
  return tape.value(encode_batch(tape, b, params, locs, mode, rng));
}

Vector encode(const GeoLocation& loc, const LocationEncoderParams& params, Mode mode, Rng* rng) {
  const auto& cfg = params.config;
  Tape tape;
  const EncoderBinding b = bind(tape, params, false);
  const bool masked = mode == Mode::kTrain && cfg.dropout > 0.0 && cfg.hidden_layers > 0;
  DropoutMask mask;
  if (masked) {
    if (rng == nullptr) throw UsageError("train-mode encoding with dropout needs an rng");
    mask = sample_dropout_mask(cfg, 1, *rng);
  }
  Var out = encode_with_mask(tape, b, params, std::span<const GeoLocation>(&loc, 1),
                             masked ? &mask : nullptr);
  return tape.value(out).data();
}

GeoLocation uniform_sphere_point(double u1, double u2) {
  const double z = std::clamp(2.0 * u2 - 1.0, -1.0, 1.0);
  return GeoLocation(2.0 * kPi * u1 - kPi, std::asin(z));
}

GeoLocation uniform_sphere_sample(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return uniform_sphere_point(u1, u2);
}

}  // namespace csp

namespace csp {

EncoderBinding encoder_binding(std::span<const Var> vars) {
  if (vars.size() % 2 != 0) throw UsageError("encoder binding needs (weight, bias) pairs");
  EncoderBinding b;
  for (std::size_t i = 0; i < vars.size(); i += 2) {
    b.weights.push_back(vars[i]);
    b.biases.push_back(vars[i + 1]);
  }
  return b;
}

}  // namespace csp
