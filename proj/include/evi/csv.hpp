#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace evi {

// Doubles are written with 17 significant digits so every value survives a
// parse round trip bit-exactly.
std::string format_double(double value);
std::string format_int(long long value);

// Minimal CSV writer. Lines starting with '#' are comments; consumers treat
// everything else as the body.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void comment(const std::string& text);
  void row(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// Reads the body of a CSV file: comment lines dropped, each remaining line
// split on commas.
std::vector<std::vector<std::string>> read_csv_body(const std::string& path);

// Body of the file as raw lines (comments dropped); used for byte-level
// determinism comparisons.
std::vector<std::string> read_body_lines(const std::string& path);

}  // namespace evi
