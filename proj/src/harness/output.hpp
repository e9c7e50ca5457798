#pragma once

#include <string>
#include <vector>

#include "harness/config.hpp"

namespace inflab::harness {

/// Header plus rows of preformatted cells; rendered with LF line endings.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells);
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::string render() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string cell(double value);
std::string cell(std::uint64_t value);
std::string cell(Index value);
std::string cell(int value);

/// gnuplot script that plots the CSV written to csv_path.
std::string gnuplot_script(ExperimentKind kind, const std::string& csv_path, const CsvTable& table);

void write_text(const std::string& path, const std::string& text);

}  // namespace inflab::harness
