#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlr::csv {

/// %.17g: enough digits that finite doubles round-trip exactly.
inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("csv: empty numeric field");
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw std::invalid_argument("csv: bad numeric field '" + s + "'");
  return x;
}

inline long parse_long(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("csv: empty integer field");
  char* end = nullptr;
  const long x = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) throw std::invalid_argument("csv: bad integer field '" + s + "'");
  return x;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("csv: missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

/// Unquoted comma-separated values with a mandatory header row.
inline Table read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Table t;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty csv file " + path);
  t.header = split_line(line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size())
      throw std::runtime_error(path + ": row with " + std::to_string(row.size()) + " fields, expected " +
                               std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : f_(path, std::ios::trunc), path_(path) {
    if (!f_) throw std::runtime_error("cannot write " + path);
  }

  void row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) f_ << ',';
      f_ << fields[i];
    }
    f_ << '\n';
  }

  void close() {
    f_.close();
    if (!f_) throw std::runtime_error("short write on " + path_);
  }

 private:
  std::ofstream f_;
  std::string path_;
};

}  // namespace dlr::csv
