#include "courant/csv.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "courant/errors.hpp"

namespace courant {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : f_(path), width_(header.size()) {
  if (!f_) throw FormatError("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) f_ << (i ? "," : "") << header[i];
  f_ << "\n";
}

void CsvWriter::write_row(std::span<const double> values) {
  if (values.size() != width_)
    throw FormatError("csv row width " + std::to_string(values.size()) +
                      " does not match header width " + std::to_string(width_));
  for (std::size_t i = 0; i < values.size(); ++i)
    f_ << (i ? "," : "") << fmt_g17(values[i]);
  f_ << "\n";
}

std::int64_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<std::int64_t>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw FormatError(path + ": empty csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  std::size_t row_no = 1;
  while (std::getline(f, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(t.header.size());
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = p;
      while (comma < end && *comma != ',') ++comma;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma)
        throw FormatError(path + ": bad number at row " + std::to_string(row_no));
      row.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    if (row.size() != t.header.size())
      throw FormatError(path + ": row " + std::to_string(row_no) + " has " +
                        std::to_string(row.size()) + " columns, expected " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace courant
