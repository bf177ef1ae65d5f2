#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csp/matrix.hpp"
#include "csp/rng.hpp"
#include "csp/tape.hpp"

namespace csp {

inline constexpr double kPi = 3.14159265358979323846;

/// A point on the sphere in radians. Longitude is wrapped into [-pi, pi);
/// latitude must lie in [-pi/2, pi/2].
class GeoLocation {
 public:
  GeoLocation() = default;
  GeoLocation(double lon, double lat);

  double lon() const { return lon_; }
  double lat() const { return lat_; }

  friend bool operator==(const GeoLocation&, const GeoLocation&) = default;

 private:
  double lon_ = 0.0;
  double lat_ = 0.0;
};

double wrap_longitude(double lon);

struct PositionalEncodingConfig {
  enum class Kind { kWrap, kGrid };

  Kind kind = Kind::kGrid;
  int scales = 64;  // S
  double r_min = 0.01;
  double r_max = 1.0;

  void validate() const;
  std::size_t width() const { return kind == Kind::kWrap ? 4 : 4 * static_cast<std::size_t>(scales); }
  /// alpha_s = r_min * g^s, g = (r_max / r_min)^(1/(S-1)).
  double scale(int s) const;
};

struct EncoderConfig {
  PositionalEncodingConfig positional;
  int hidden_layers = 1;   // h
  int hidden_units = 512;  // k
  double dropout = 0.5;    // D
  double leaky_slope = 0.01;
  int output_dim = 512;  // d

  void validate() const;
};

/// Weights of the MLP on top of the positional features. Layer l maps
/// weights[l].rows() -> weights[l].cols(); every hidden layer is followed by
/// LeakyReLU and dropout, the output layer is linear.
struct LocationEncoderParams {
  EncoderConfig config;
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  /// Glorot-uniform weights, zero biases.
  static LocationEncoderParams init(const EncoderConfig& config, Rng& rng);

  std::vector<Matrix*> parameters();
  std::size_t parameter_count() const;

  friend bool operator==(const LocationEncoderParams&, const LocationEncoderParams&) = default;
};

inline bool operator==(const PositionalEncodingConfig& a, const PositionalEncodingConfig& b) {
  return a.kind == b.kind && a.scales == b.scales && a.r_min == b.r_min && a.r_max == b.r_max;
}
inline bool operator==(const EncoderConfig& a, const EncoderConfig& b) {
  return a.positional == b.positional && a.hidden_layers == b.hidden_layers &&
         a.hidden_units == b.hidden_units && a.dropout == b.dropout &&
         a.leaky_slope == b.leaky_slope && a.output_dim == b.output_dim;
}

enum class Mode { kTrain, kEval };

Vector wrap_encode(const GeoLocation& loc);
Vector grid_encode(const GeoLocation& loc, const PositionalEncodingConfig& cfg);
Vector positional_encode(const GeoLocation& loc, const PositionalEncodingConfig& cfg);
Matrix positional_encode_batch(std::span<const GeoLocation> locs,
                               const PositionalEncodingConfig& cfg);

/// One keep/scale mask per hidden layer, rows x hidden_units. Entries are
/// 0 or 1/(1-D). Drawn row by row, layer by layer, unit by unit.
using DropoutMask = std::vector<Matrix>;
DropoutMask sample_dropout_mask(const EncoderConfig& config, std::size_t rows, Rng& rng);

/// Tape handles for the encoder weights.
struct EncoderBinding {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

/// Records the weights as trainable variables (or constants).
EncoderBinding bind(Tape& tape, const LocationEncoderParams& params, bool trainable = true);

/// Forward pass over a batch, recorded on the tape. In train mode with
/// D > 0, draws one key from rng and gives row i the stream
/// Rng::derive(key, i). rng may be null only when no mask is needed.
Var encode_batch(Tape& tape, const EncoderBinding& binding, const LocationEncoderParams& params,
                 std::span<const GeoLocation> locs, Mode mode, Rng* rng);

/// Forward pass with explicit masks (one per hidden layer, rows = batch).
Var encode_with_mask(Tape& tape, const EncoderBinding& binding,
                     const LocationEncoderParams& params, std::span<const GeoLocation> locs,
                     const DropoutMask* mask);

Matrix encode_batch(std::span<const GeoLocation> locs, const LocationEncoderParams& params,
                    Mode mode, Rng* rng);
/// Single location; in train mode the mask is drawn from rng directly.
Vector encode(const GeoLocation& loc, const LocationEncoderParams& params, Mode mode, Rng* rng);

/// Area-uniform point on the sphere.
GeoLocation uniform_sphere_sample(Rng& rng);
/// Same map with the two uniforms supplied explicitly.
GeoLocation uniform_sphere_point(double u1, double u2);

}  // namespace csp

namespace csp {

/// Binding over already-recorded variables laid out as
/// LocationEncoderParams::parameters() orders them (w0, b0, w1, b1, ...).
EncoderBinding encoder_binding(std::span<const Var> vars);

}  // namespace csp
