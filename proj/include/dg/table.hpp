#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace dg {

using Cell = std::variant<int64_t, double, std::string>;

// Homogeneous record table; column order is declaration order and stable
// across runs. Reals are written with 17 significant digits, LF endings.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  explicit Table(std::vector<std::string> cols = {}) : columns(std::move(cols)) {}
  void add_row(std::vector<Cell> row);
};

std::string format_cell(const Cell& cell);
void emit_csv(const Table& table, const std::string& path);

// Parses a CSV written by emit_csv; numeric-looking cells come back typed so
// an emit/load/emit cycle is byte-identical.
Table load_csv_table(const std::string& path);

}  // namespace dg
