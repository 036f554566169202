#pragma once

// CSV tables, number formatting and atomic file output for experiment artifacts.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "sparsewalk/error.hpp"

namespace sparsewalk {

/// Shortest round-trip decimal form; independent of locale.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_number(long long x) { return std::to_string(x); }

using Cell = std::variant<std::string, double, long long, bool>;

inline std::string cell_text(const Cell& c) {
  struct {
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(long long i) const { return format_number(i); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  } visit;
  return std::visit(visit, c);
}

/// RFC 4180: CRLF records, fields with comma, quote or line break are quoted, quotes doubled.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }

  void add(const std::vector<Cell>& cells) {
    if (cells.size() != header_.size())
      fail(Errc::InvalidArgument, "cli", "CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                                             std::to_string(header_.size()));
    std::vector<std::string> r;
    r.reserve(cells.size());
    for (const auto& c : cells) r.push_back(cell_text(c));
    rows_.push_back(std::move(r));
  }

  std::string str() const {
    std::string out;
    write_record(out, header_);
    for (const auto& r : rows_) write_record(out, r);
    return out;
  }

  static std::string quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string q = "\"";
    for (char ch : field) {
      if (ch == '"') q += '"';
      q += ch;
    }
    q += '"';
    return q;
  }

 private:
  static void write_record(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += quote(fields[i]);
    }
    out += "\r\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes through a sibling temporary and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(Errc::InvalidArgument, "cli", "cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) fail(Errc::InvalidArgument, "cli", "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace sparsewalk
