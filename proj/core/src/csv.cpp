#include "passiv/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace passiv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (k) out_ << ',';
    out_ << header[k];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out_ << ',';
    out_ << format_double(values[k]);
  }
  out_ << '\n';
}

void CsvWriter::row(double t, const std::vector<double>& values) {
  out_ << format_double(t);
  for (double v : values) out_ << ',' << format_double(v);
  out_ << '\n';
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  throw std::out_of_range("csv column '" + name + "' not found");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty csv");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != table.header.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(table.header.size()) + " fields");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace passiv
