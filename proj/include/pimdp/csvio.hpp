#pragma once

#include <string>
#include <vector>

namespace pimdp {

/// Shortest form of a double that parses back bit-exactly; the one
/// formatting used for every CSV and report so reruns byte-compare.
std::string format_double(double v);

/// Write-temp-then-rename so readers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& content);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  double value(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  void add_row(const std::vector<double>& cells);
  std::string str() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::string> lines_;
};

}  // namespace pimdp
