#pragma once

// Simulated and file-backed datasets.
//
// Simulation: point i is drawn from its own stream rng::derive(seed, i), so
// the first n points of a larger simulation are exactly the n-point
// simulation. Per point, in order: p normals for x, one uniform for the
// contamination flag, one normal for the noise, and (logistic) one uniform
// for the label.
//
// CSV: comma separated, one header row, '.' decimal point, no quoting.

#include <cstdint>
#include <string>
#include <vector>

#include "inflab/glm.hpp"
#include "inflab/linalg.hpp"

namespace inflab {

enum class SimKind { LinearContaminated, LogisticContaminated };

struct SimSpec {
  SimKind kind = SimKind::LinearContaminated;
  Index n = 100;
  Index p = 9;
  Vector<double> theta_true;  // empty: default_theta(p)
  double contam_prob = 0.1;
  double noise_sd_clean = 1.0;
  double noise_sd_contam = 10.0;
  std::uint64_t seed = 0;
};

/// theta_j = 0.5 (-1)^j.
Vector<double> default_theta(Index p);

/// Linear: y = x^T theta + mu. Logistic: y = +1 with probability
/// sigmoid(x^T theta + mu), else -1. mu ~ N(0, sd_clean^2), replaced by
/// N(0, sd_contam^2) with probability contam_prob; x ~ N(0, I).
Dataset<double> simulate(const SimSpec& spec);

/// Flags of the contaminated points of simulate(spec), replayed from the same streams.
std::vector<bool> contamination_flags(const SimSpec& spec);

struct SpectrumSpec {
  enum class Decay { Flat, Polynomial, Exponential };
  Decay decay = Decay::Flat;
  double rate = 0.0;  // beta for polynomial i^-beta, nu for exponential e^{-nu i}
  Index p = 10;
  double scale = 1.0;
};

/// scale * {1, i^-beta, e^{-nu i}} for i = 1..p.
Vector<double> spectrum_values(const SpectrumSpec& spec);

/// Rows x_i = Lambda^{1/2} g_i with g_i ~ N(0, I): E[x x^T] = diag(spectrum_values(spec)).
Dataset<double>::FeatureMatrix design_with_spectrum(const SpectrumSpec& spec, Index n, std::uint64_t seed);

struct CsvSchema {
  std::vector<std::string> feature_columns;  // empty: every column except the response
  std::string response_column = "y";
  LossFamily family = LossFamily::least_squares();
};

struct CsvLoad {
  Dataset<double> data;
  Index dropped = 0;  // rows with an empty response
  std::vector<std::string> feature_names;
};

/// Rows with an empty response cell are dropped and counted. Binary logistic
/// responses in {0, 1} are mapped to {-1, +1}.
CsvLoad load_csv(const std::string& path, const CsvSchema& schema);
CsvLoad parse_csv(const std::string& text, const CsvSchema& schema, const std::string& source = "<memory>");

/// Writes shortest round-trip decimal representations; load_csv reads it back exactly.
void write_csv(const std::string& path, const Dataset<double>& data,
               const std::vector<std::string>& feature_names = {},
               const std::string& response_name = "y");
std::string format_csv(const Dataset<double>& data, const std::vector<std::string>& feature_names = {},
                       const std::string& response_name = "y");

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace inflab
