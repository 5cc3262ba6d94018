#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mtpp/errors.hpp"

namespace mtpp::csv {

// %.17g round-trips every double and ignores the locale, so equal values
// always serialize to equal bytes.
inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// short form for grid labels and other values that are exact by construction
inline std::string label(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

inline std::string join(const std::vector<std::string>& cells) {
  std::string line;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
  }

  void comment(const std::string& text) { out_ << "# " << text << "\n"; }
  void raw(const std::string& line) { out_ << line << "\n"; }
  void row(const std::vector<std::string>& cells) { raw(join(cells)); }
  void blank() { out_ << "\n"; }

  void close() {
    out_.close();
    if (out_.fail()) throw IoError("write failed for " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace mtpp::csv
