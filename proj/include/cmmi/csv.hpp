#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cmmi/core.hpp"

namespace cmmi::csv {

inline constexpr std::string_view kMissing = "NA";

/// A parsed values file: dense cells plus an observation mask.
struct Table {
  Matrix values;
  Mask observed;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view token, const std::string& context) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError(context + ": cannot parse number '" + std::string(token) + "'");
  return v;
}

/// Reads a headerless comma-separated matrix; the token "NA" marks a missing cell.
inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open values file " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::vector<bool> obs;
    for (auto tok : split(line)) {
      if (tok == kMissing) {
        row.push_back(0.0);
        obs.push_back(false);
      } else {
        row.push_back(parse_double(tok, path.string() + ":" + std::to_string(line_no)));
        obs.push_back(true);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
    seen.push_back(std::move(obs));
  }
  Table t;
  const Index r = static_cast<Index>(rows.size());
  const Index c = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  t.values.resize(r, c);
  t.observed.resize(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) {
      t.values(i, j) = rows[i][j];
      t.observed(i, j) = seen[i][j];
    }
  return t;
}

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Matrix as CSV, "NA" wherever `observed` is false (when given).
inline std::string format_matrix(const Matrix& m, const Mask* observed = nullptr) {
  std::ostringstream out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      if (observed != nullptr && !(*observed)(i, j))
        out << kMissing;
      else
        out << format_double(m(i, j));
    }
    out << '\n';
  }
  return out.str();
}

/// Matrix with a header row of column labels and a leading column of row
/// labels; the top-left cell is empty.
inline std::string format_labeled(const Matrix& m, std::span<const Index> row_ids, std::span<const Index> col_ids,
                                  const Mask* observed = nullptr) {
  if (static_cast<Index>(row_ids.size()) != m.rows() || static_cast<Index>(col_ids.size()) != m.cols())
    throw DataError("labels do not match the matrix shape");
  std::ostringstream out;
  for (Index id : col_ids) out << ',' << id;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << row_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) {
      out << ',';
      if (observed != nullptr && !(*observed)(i, j))
        out << kMissing;
      else
        out << format_double(m(i, j));
    }
    out << '\n';
  }
  return out.str();
}

/// Writes `content` to a sibling temp file and renames it over `path`, so a
/// failure never leaves a truncated file behind.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace cmmi::csv
