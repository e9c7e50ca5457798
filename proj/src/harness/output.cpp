#include "harness/output.hpp"

#include <fstream>
#include <set>

namespace inflab::harness {

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) {
    fail(ErrorCode::DimensionMismatch, "csv row has " + std::to_string(cells.size()) + " cells, header has " +
                                           std::to_string(header_.size()));
  }
  rows_.push_back(std::move(cells));
}

std::string CsvTable::render() const {
  std::string out;
  const auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  emit(header_);
  for (const auto& row : rows_) emit(row);
  return out;
}

std::string cell(double value) {
  if (!std::isfinite(value)) fail(ErrorCode::DivergedNonFinite, "non-finite value in output row");
  return format_double(value);
}
std::string cell(std::uint64_t value) { return std::to_string(value); }
std::string cell(Index value) { return std::to_string(value); }
std::string cell(int value) { return std::to_string(value); }

namespace {

std::size_t column(const CsvTable& table, const std::string& name) {
  for (std::size_t i = 0; i < table.header().size(); ++i) {
    if (table.header()[i] == name) return i + 1;
  }
  fail(ErrorCode::SchemaMismatch, "no column '" + name + "' to plot");
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

}  // namespace

std::string gnuplot_script(ExperimentKind kind, const std::string& csv_path, const CsvTable& table) {
  std::string s = "set datafile separator ','\nset key top right\nset grid\n";
  const std::string data = quoted(csv_path);
  switch (kind) {
    case ExperimentKind::Convergence: {
      const auto n = column(table, "n"), rep = column(table, "rep"), err = column(table, "err_sq"),
                 bound = column(table, "bound");
      s += "set logscale xy\nset xlabel 'n'\nset ylabel 'squared error'\n";
      const std::string mean_filter = "(strcol(" + std::to_string(rep) + ") eq 'mean' ? $";
      s += "plot " + data + " using " + std::to_string(n) + ":" + mean_filter + std::to_string(err) +
           " : 1/0) with linespoints title 'empirical mean', \\\n     " + data + " using " + std::to_string(n) +
           ":" + mean_filter + std::to_string(bound) + " : 1/0) with lines dashtype 2 title 'bound (calibrated)'\n";
      break;
    }
    case ExperimentKind::Solvers: {
      const auto method = column(table, "method"), calls = column(table, "oracle_calls"),
                 err = column(table, "err_sq");
      std::set<std::string> methods;
      for (const auto& row : table.rows()) methods.insert(row[method - 1]);
      s += "set logscale xy\nset xlabel 'oracle calls'\nset ylabel 'squared H-norm error'\nplot ";
      bool first = true;
      for (const auto& m : methods) {
        if (!first) s += ", \\\n     ";
        first = false;
        s += data + " using " + std::to_string(calls) + ":(strcol(" + std::to_string(method) + ") eq " +
             quoted(m) + " ? $" + std::to_string(err) + " : 1/0) with linespoints title " + quoted(m);
      }
      s += "\n";
      break;
    }
    case ExperimentKind::Subset: {
      const auto n = column(table, "n"), rep = column(table, "rep"), alpha = column(table, "alpha"),
                 err = column(table, "err_sq");
      std::set<std::string> alphas;
      for (const auto& row : table.rows()) alphas.insert(row[alpha - 1]);
      s += "set logscale xy\nset xlabel 'n'\nset ylabel 'squared error of subset influence'\nplot ";
      bool first = true;
      for (const auto& a : alphas) {
        if (!first) s += ", \\\n     ";
        first = false;
        s += data + " using " + std::to_string(n) + ":(strcol(" + std::to_string(rep) + ") eq 'mean' && strcol(" +
             std::to_string(alpha) + ") eq " + quoted(a) + " ? $" + std::to_string(err) +
             " : 1/0) with linespoints title 'alpha=" + a + "'";
      }
      s += "\n";
      break;
    }
    case ExperimentKind::Fit:
    case ExperimentKind::Influence:
    case ExperimentKind::PredictCost:
      fail(ErrorCode::ConfigError, "no plot is defined for experiment '" + to_string(kind) + "'");
  }
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  file << text;
  if (!file) fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

}  // namespace inflab::harness
