#include "dg/table.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "dg/errors.hpp"
#include "dg/matrix_io.hpp"

namespace dg {

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size())
    throw DataError("table: row has " + std::to_string(row.size()) + " cells, expected " +
                    std::to_string(columns.size()));
  rows.push_back(std::move(row));
}

std::string format_cell(const Cell& cell) {
  if (std::holds_alternative<int64_t>(cell)) return std::to_string(std::get<int64_t>(cell));
  if (std::holds_alternative<double>(cell)) return format_real(std::get<double>(cell));
  return std::get<std::string>(cell);
}

void emit_csv(const Table& table, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  for (size_t i = 0; i < table.columns.size(); ++i) {
    if (i) os << ',';
    os << table.columns[i];
  }
  os << '\n';
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << format_cell(row[i]);
    }
    os << '\n';
  }
  if (!os) throw DataError("write failed: " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

Cell parse_cell(const std::string& text) {
  if (text.empty()) return text;
  errno = 0;
  char* end = nullptr;
  // "-0" must stay a double so negative zero survives a round trip.
  if (text != "-0") {
    const long long as_int = std::strtoll(text.c_str(), &end, 10);
    if (errno == 0 && end && *end == '\0') return static_cast<int64_t>(as_int);
  }
  errno = 0;
  const double as_double = std::strtod(text.c_str(), &end);
  if (end && *end == '\0') {
    // Subnormal underflow flags ERANGE but still yields the right value;
    // only reject genuine overflow.
    if (errno != ERANGE || std::abs(as_double) != HUGE_VAL) return as_double;
  }
  return text;
}

}  // namespace

Table load_csv_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  Table table(split_csv_line(line));
  int64_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != table.columns.size())
      throw DataError(path + ":" + std::to_string(lineno) + ": ragged row");
    std::vector<Cell> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dg
