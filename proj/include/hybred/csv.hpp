#ifndef HYBRED_CSV_HPP
#define HYBRED_CSV_HPP

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hybred/error.hpp"

namespace hybred {

/// Numeric table with one header row. Values print with 17 significant
/// digits so re-reading reproduces them exactly.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const CsvTable& table) {
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_g17(row[i]);
    out << '\n';
  }
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::parse, "empty CSV");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw Error(ErrorKind::parse, "bad number '" + cell + "' on CSV line " + std::to_string(line_no));
      row.push_back(v);
    }
    if (row.size() != table.header.size())
      throw Error(ErrorKind::parse, "CSV line " + std::to_string(line_no) + " has wrong column count");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace hybred

#endif  // HYBRED_CSV_HPP
