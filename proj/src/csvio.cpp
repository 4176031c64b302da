#include "pimdp/csvio.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pimdp/errors.hpp"

namespace pimdp {

std::string format_double(double v) {
  // Shortest decimal form that parses back bit-exactly; 17 digits always
  // suffice for IEEE doubles.
  char buf[64];
  for (int prec = 9; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write to '" + tmp.string() + "'");
    out << content;
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

double CsvTable::value(std::size_t row, const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ConfigError("CSV has no column '" + name + "'");
  return std::strtod(rows.at(row).at(static_cast<std::size_t>(c)).c_str(),
                     nullptr);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      table.header = split_line(line);
      first = false;
    } else {
      table.rows.push_back(split_line(line));
    }
  }
  return table;
}

CsvWriter::CsvWriter(std::vector<std::string> header)
    : header_(std::move(header)) {}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size())
    throw std::invalid_argument("CSV row width mismatch");
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  lines_.push_back(std::move(line));
}

void CsvWriter::add_row(const std::vector<double>& cells) {
  std::vector<std::string> text;
  text.reserve(cells.size());
  for (double v : cells) text.push_back(format_double(v));
  add_row(text);
}

std::string CsvWriter::str() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (i) out += ',';
    out += header_[i];
  }
  out += '\n';
  for (const auto& line : lines_) {
    out += line;
    out += '\n';
  }
  return out;
}

void CsvWriter::write(const std::string& path) const {
  atomic_write_file(path, str());
}

}  // namespace pimdp
