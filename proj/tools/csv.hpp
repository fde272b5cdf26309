#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ionlink/errors.hpp"

namespace ionlink::cli {

class CsvError : public Error {
 public:
  explicit CsvError(const std::string& what) : Error("malformed_csv", what) {}
};

/// Comma-separated table with a header row. Lines starting with '#' and
/// blank lines are ignored.
class CsvTable {
 public:
  static CsvTable parse(const std::string& text, const std::string& origin = "<input>") {
    CsvTable t;
    t.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      auto cells = split(line);
      if (!have_header) {
        for (std::size_t i = 0; i < cells.size(); ++i) t.columns_[cells[i]] = i;
        t.width_ = cells.size();
        have_header = true;
        continue;
      }
      if (cells.size() != t.width_) {
        throw CsvError(origin + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.width_) + " cells, got " + std::to_string(cells.size()));
      }
      t.rows_.push_back(std::move(cells));
      t.linenos_.push_back(lineno);
    }
    if (!have_header) throw CsvError(origin + ": no header row");
    return t;
  }

  static CsvTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  std::size_t size() const { return rows_.size(); }

  std::size_t column(const std::string& name) const {
    const auto it = columns_.find(name);
    if (it == columns_.end()) throw CsvError(origin_ + ": missing column '" + name + "'");
    return it->second;
  }

  const std::string& cell(std::size_t row, std::size_t col) const { return rows_[row][col]; }

  double number(std::size_t row, std::size_t col) const {
    const auto& s = rows_[row][col];
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) {
      throw CsvError(origin_ + ":" + std::to_string(linenos_[row]) + ": not a number: '" + s + "'");
    }
    return v;
  }

 private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t");
      const auto b = cell.find_last_not_of(" \t");
      out.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  }

  std::string origin_;
  std::map<std::string, std::size_t> columns_;
  std::size_t width_ = 0;
  std::vector<std::vector<std::string>> rows_;
  std::vector<int> linenos_;
};

/// Shortest decimal text that reads back to the same double.
inline std::string fmt_number(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace ionlink::cli
