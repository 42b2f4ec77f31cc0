#pragma once

// Deterministic CSV output: RFC 4180 quoting, shortest round-trip number
// formatting, '\n' line ends. Identical data serializes to identical bytes.

#include <charconv>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace fv {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string csv_quote(std::string_view field) {
  const bool needs_quoting =
      field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quoting) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& field(std::string_view s) {
    sep();
    out_ << csv_quote(s);
    return *this;
  }
  CsvWriter& field(double v) {
    sep();
    out_ << format_double(v);
    return *this;
  }
  CsvWriter& field(long v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvWriter& field(std::uint64_t v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvWriter& empty_field() {
    sep();
    return *this;
  }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ostream& out_;
  bool first_ = true;
};

}  // namespace fv
