#pragma once

// Minimal numeric CSV: header row, ',' separator, '\n' line endings, and
// doubles written with 9 significant digits.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "rde/error.hpp"

namespace rde::csv {

inline constexpr int kSignificantDigits = 9;

inline void append(std::string& out, double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, kSignificantDigits);
  if (ec != std::errc{}) throw Error("csv: failed to format value");
  out.append(buf, ptr);
}

inline std::string format(double v) {
  std::string s;
  append(s, v);
  return s;
}

inline std::string join(std::span<const std::string> cells) {
  std::string line;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) line += ',';
    line += cells[k];
  }
  return line;
}

/// Buffered writer; the file is written on flush() or destruction.
class Writer {
 public:
  Writer(std::string path, const std::vector<std::string>& header) : path_(std::move(path)) {
    buffer_ = join(header);
    buffer_ += '\n';
  }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
  ~Writer() {
    try {
      flush();
    } catch (...) {
    }
  }

  void row(std::span<const double> values) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (k) buffer_ += ',';
      append(buffer_, values[k]);
    }
    buffer_ += '\n';
    if (buffer_.size() > (8u << 20)) flush();
  }

  void row(std::span<const std::string> cells) {
    buffer_ += join(cells);
    buffer_ += '\n';
  }

  void flush() {
    std::FILE* f = std::fopen(path_.c_str(), started_ ? "ab" : "wb");
    if (!f) throw Error("csv: cannot open '" + path_ + "' for writing");
    const bool ok = std::fwrite(buffer_.data(), 1, buffer_.size(), f) == buffer_.size();
    std::fclose(f);
    if (!ok) throw Error("csv: short write to '" + path_ + "'");
    buffer_.clear();
    started_ = true;
  }

 private:
  std::string path_;
  std::string buffer_;
  bool started_ = false;
};

/// Row-major table of the requested columns.
struct Table {
  std::vector<std::string> columns;
  std::vector<double> values;
  std::size_t rows = 0;

  double at(std::size_t row, std::size_t col) const { return values[row * columns.size() + col]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * columns.size(), columns.size()};
  }
};

namespace detail {
inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}
}  // namespace detail

/// Parses CSV text, extracting `required` columns (in that order). Extra
/// columns are ignored. Throws ParseError naming the missing column or the
/// offending line.
inline Table parse(std::string_view text, const std::vector<std::string>& required,
                   const std::string& source = "<memory>") {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = detail::trim_cr(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view header_line;
  if (!next_line(header_line)) throw ParseError(source + ": empty file (missing header row)");
  const auto header = detail::split(header_line);
  std::vector<std::size_t> index;
  for (const auto& name : required) {
    std::size_t k = 0;
    while (k < header.size() && header[k] != name) ++k;
    if (k == header.size()) throw ParseError(source + ": missing column '" + name + "'");
    index.push_back(k);
  }

  Table t;
  t.columns = required;
  std::string_view line;
  std::vector<double> fields(header.size());
  while (next_line(line)) {
    if (line.empty()) continue;
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto cell = line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start);
      if (col >= header.size()) {
        throw ParseError(source + ": line " + std::to_string(line_no) + ": too many fields");
      }
      double v = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError(source + ": line " + std::to_string(line_no) + ": non-numeric field '" +
                         std::string(cell) + "' in column '" + std::string(header[col]) + "'");
      }
      fields[col++] = v;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (col != header.size()) {
      throw ParseError(source + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(col));
    }
    for (std::size_t k : index) t.values.push_back(fields[k]);
    ++t.rows;
  }
  return t;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline Table read(const std::string& path, const std::vector<std::string>& required) {
  const std::string text = slurp(path);
  return parse(text, required, path);
}

}  // namespace rde::csv
