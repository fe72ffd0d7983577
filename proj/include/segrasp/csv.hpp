#pragma once
// Tiny CSV emitter. Numbers are written in shortest round-trip form so two
// identical runs produce byte-identical files.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>

namespace segrasp {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string csv_num(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string csv_num(int64_t v) {
  char buf[24];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for write: " + path);
  }

  CsvWriter& cell(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  CsvWriter& cell(const char* s) { return cell(std::string(s)); }
  CsvWriter& cell(double v) { return cell(csv_num(v)); }
  CsvWriter& cell(int v) { return cell(csv_num(int64_t{v})); }
  CsvWriter& cell(int64_t v) { return cell(csv_num(v)); }
  CsvWriter& cell(uint64_t v) {
    char buf[24];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return cell(std::string(buf, r.ptr));
  }

  void end_row() {
    out_ << '\n';
    first_ = true;
  }

  template <class... Ts>
  void row(const Ts&... ts) {
    (cell(ts), ...);
    end_row();
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace segrasp
