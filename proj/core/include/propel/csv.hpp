#pragma once

#include <string>
#include <vector>

namespace propel {

// Shortest round-trip decimal form of a double ("%.17g" trimmed). All CSV
// and program output goes through this so repeated runs are byte-identical.
std::string format_double(double v);

// Minimal CSV emitter. Every file starts with "# schema=1" followed by the
// header row; numeric cells are formatted with format_double.
class CsvWriter {
 public:
  CsvWriter(std::string path, std::vector<std::string> columns);
  void append_row(const std::vector<double>& values);
  void append_row_raw(const std::vector<std::string>& cells);
  void flush() const;  // writes header + all rows; whole-file rewrite
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

// Reads back a schema=1 CSV: returns header columns and string cells.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace propel
