#pragma once

// Minimal CSV emission: comma separated, '.' decimal point, quoted fields
// only when needed. Reals use the shortest representation that reads back
// to the same double, so files are byte-stable across runs.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace jnd {

// First header field of every CSV the toolkit writes.
inline constexpr std::string_view kCsvSchemaTag = "schema=1";
inline constexpr std::string_view kCsvSchemaValue = "1";

std::string format_real(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& add(std::string field);
  CsvTable& add(std::string_view field) { return add(std::string(field)); }
  CsvTable& add(const char* field) { return add(std::string(field)); }
  CsvTable& add(double v) { return add(format_real(v)); }
  CsvTable& add(std::size_t v) { return add(std::to_string(v)); }
  CsvTable& add(bool v) { return add(std::string(v ? "1" : "0")); }
  // Closes the current row. Throws InputError when its width differs from the header.
  void end_row();

  std::string str() const;

 private:
  std::size_t width_;
  std::string out_;
  std::vector<std::string> row_;
};

std::string csv_escape(std::string_view field);

// Splits CSV text into rows of fields; understands the quoting csv_escape emits.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace jnd
