#include "inflab/synthdata.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "inflab/rng.hpp"

namespace inflab {

Vector<double> default_theta(Index p) {
  Vector<double> theta(p);
  for (Index j = 0; j < p; ++j) theta(j) = (j % 2 == 0 ? 0.5 : -0.5);
  return theta;
}

namespace {

void check_spec(const SimSpec& spec) {
  if (spec.n < 1 || spec.p < 1) fail(ErrorCode::InvalidArgument, "simulate needs n >= 1 and p >= 1");
  if (!(spec.contam_prob >= 0.0 && spec.contam_prob <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "contam_prob must lie in [0, 1]");
  }
  if (!(spec.noise_sd_clean > 0.0 && spec.noise_sd_contam > 0.0)) {
    fail(ErrorCode::InvalidArgument, "noise standard deviations must be positive");
  }
  if (spec.theta_true.size() != 0 && spec.theta_true.size() != spec.p) {
    fail(ErrorCode::DimensionMismatch, "theta_true has the wrong length");
  }
}

struct SimulatedPoint {
  bool contaminated;
  double y;
};

template <typename Row>
SimulatedPoint simulate_point(const SimSpec& spec, const Vector<double>& theta, Index i, Row&& x) {
  rng::SplitMix64 gen(rng::derive(spec.seed, static_cast<std::uint64_t>(i)));
  for (Index j = 0; j < spec.p; ++j) x(j) = gen.normal();
  const bool contaminated = gen.bernoulli(spec.contam_prob);
  const double noise = gen.normal() * (contaminated ? spec.noise_sd_contam : spec.noise_sd_clean);
  const double latent = dot(theta, x) + noise;
  if (spec.kind == SimKind::LinearContaminated) return {contaminated, latent};
  return {contaminated, gen.uniform() < detail::sigmoid(latent) ? 1.0 : -1.0};
}

}  // namespace

Dataset<double> simulate(const SimSpec& spec) {
  check_spec(spec);
  const Vector<double> theta = spec.theta_true.size() ? spec.theta_true : default_theta(spec.p);
  Dataset<double>::FeatureMatrix x(spec.n, spec.p);
  Vector<double> y(spec.n);
  Vector<double> row(spec.p);
  for (Index i = 0; i < spec.n; ++i) {
    y(i) = simulate_point(spec, theta, i, row).y;
    x.row(i) = row.transpose();
  }
  const auto family = spec.kind == SimKind::LinearContaminated ? LossFamily::least_squares()
                                                               : LossFamily::binary_logistic();
  return Dataset<double>(std::move(x), std::move(y), family);
}

std::vector<bool> contamination_flags(const SimSpec& spec) {
  check_spec(spec);
  const Vector<double> theta = spec.theta_true.size() ? spec.theta_true : default_theta(spec.p);
  std::vector<bool> flags(static_cast<std::size_t>(spec.n));
  Vector<double> row(spec.p);
  for (Index i = 0; i < spec.n; ++i) flags[static_cast<std::size_t>(i)] = simulate_point(spec, theta, i, row).contaminated;
  return flags;
}

Vector<double> spectrum_values(const SpectrumSpec& spec) {
  if (spec.p < 1) fail(ErrorCode::InvalidArgument, "spectrum needs p >= 1");
  if (!(spec.scale > 0.0)) fail(ErrorCode::InvalidArgument, "spectrum scale must be positive");
  if (spec.decay != SpectrumSpec::Decay::Flat && !(spec.rate > 0.0)) {
    fail(ErrorCode::InvalidArgument, "decay rate must be positive");
  }
  Vector<double> out(spec.p);
  for (Index i = 0; i < spec.p; ++i) {
    const double k = static_cast<double>(i + 1);
    switch (spec.decay) {
      case SpectrumSpec::Decay::Flat: out(i) = spec.scale; break;
      case SpectrumSpec::Decay::Polynomial: out(i) = spec.scale * std::pow(k, -spec.rate); break;
      case SpectrumSpec::Decay::Exponential: out(i) = spec.scale * std::exp(-spec.rate * k); break;
    }
  }
  return out;
}

Dataset<double>::FeatureMatrix design_with_spectrum(const SpectrumSpec& spec, Index n, std::uint64_t seed) {
  if (n < spec.p) fail(ErrorCode::InvalidArgument, "design_with_spectrum needs n >= p");
  const Vector<double> root = spectrum_values(spec).cwiseSqrt();
  Dataset<double>::FeatureMatrix x(n, spec.p);
  for (Index i = 0; i < n; ++i) {
    rng::SplitMix64 gen(rng::derive(seed, static_cast<std::uint64_t>(i)));
    for (Index j = 0; j < spec.p; ++j) x(i, j) = root(j) * gen.normal();
  }
  return x;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, const std::string& source, std::size_t line, std::size_t col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty() || !std::isfinite(value)) {
    fail(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": column " + std::to_string(col + 1) +
                                    ": cannot parse '" + cell + "' as a number");
  }
  return value;
}

}  // namespace

CsvLoad parse_csv(const std::string& text, const CsvSchema& schema, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      for (const auto& h : split_line(line)) header.push_back(trim(h));
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::SchemaMismatch, source + ": missing header row");

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!column.emplace(header[c], c).second) fail(ErrorCode::SchemaMismatch, source + ": duplicate column '" + header[c] + "'");
  }
  const auto find = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) fail(ErrorCode::SchemaMismatch, source + ": no column named '" + name + "'");
    return it->second;
  };
  const std::size_t response = find(schema.response_column);
  std::vector<std::string> names = schema.feature_columns;
  if (names.empty()) {
    for (const auto& h : header) {
      if (h != schema.response_column) names.push_back(h);
    }
  }
  if (names.empty()) fail(ErrorCode::SchemaMismatch, source + ": no feature columns");
  std::vector<std::size_t> features;
  for (const auto& name : names) features.push_back(find(name));

  std::vector<double> xs;
  std::vector<double> ys;
  Index dropped = 0;
  const bool binary = schema.family.kind == LossFamily::Kind::BinaryLogistic;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      fail(ErrorCode::ParseError, source + ":" + std::to_string(line_no) + ": expected " +
                                      std::to_string(header.size()) + " cells, found " +
                                      std::to_string(cells.size()));
    }
    const std::string y_cell = trim(cells[response]);
    if (y_cell.empty()) {
      ++dropped;
      continue;
    }
    double y = parse_number(y_cell, source, line_no, response);
    if (binary && y == 0.0) y = -1.0;
    if (!valid_response(schema.family, y)) {
      fail(ErrorCode::SchemaMismatch, source + ":" + std::to_string(line_no) + ": response " + y_cell +
                                          " is invalid for " + to_string(schema.family));
    }
    for (const auto c : features) xs.push_back(parse_number(trim(cells[c]), source, line_no, c));
    ys.push_back(y);
  }
  if (ys.empty()) fail(ErrorCode::EmptyDataset, source + ": no rows with a response");

  const auto rows = static_cast<Index>(ys.size());
  const auto cols = static_cast<Index>(features.size());
  Dataset<double>::FeatureMatrix x(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) x(i, j) = xs[static_cast<std::size_t>(i * cols + j)];
  }
  Vector<double> y = Eigen::Map<const Vector<double>>(ys.data(), rows);
  return CsvLoad{Dataset<double>(std::move(x), std::move(y), schema.family), dropped, std::move(names)};
}

CsvLoad load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_csv(buffer.str(), schema, path);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) fail(ErrorCode::IoError, "cannot format number");
  return std::string(buf, ptr);
}

std::string format_csv(const Dataset<double>& data, const std::vector<std::string>& feature_names,
                       const std::string& response_name) {
  const Index p = data.features();
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != p) {
    fail(ErrorCode::DimensionMismatch, "format_csv: feature name count");
  }
  std::string out;
  for (Index j = 0; j < p; ++j) {
    out += feature_names.empty() ? "x" + std::to_string(j + 1) : feature_names[static_cast<std::size_t>(j)];
    out += ',';
  }
  out += response_name;
  out += '\n';
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < p; ++j) {
      out += format_double(data.feature_matrix()(i, j));
      out += ',';
    }
    out += format_double(data.y(i));
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const Dataset<double>& data,
               const std::vector<std::string>& feature_names, const std::string& response_name) {
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  file << format_csv(data, feature_names, response_name);
  if (!file) fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

}  // namespace inflab
