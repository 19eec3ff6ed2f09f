#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace passiv {

// Round-trippable decimal representation (17 significant digits).
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void row(double t, const std::vector<double>& values);

 private:
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Index of a named column; throws std::out_of_range if missing.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace passiv
