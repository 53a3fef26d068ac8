#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace courant {

// Shortest round-trip decimal rendering (17 significant digits).
std::string fmt_g17(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void write_row(std::span<const double> values);
  void write_row(std::initializer_list<double> values) {
    write_row(std::span<const double>(values.begin(), values.size()));
  }
  void close() { f_.close(); }

 private:
  std::ofstream f_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::int64_t column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

}  // namespace courant
