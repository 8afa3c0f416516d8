#pragma once

// Comma-separated tables with a mandatory header row and a leading 1-based
// integer step column `t`. Numbers are written with 17 significant digits so
// a file round-trips to the same doubles.

#include <cmath>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace robust_filter::cli {

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> numbered_columns(const std::string& prefix, Eigen::Index count) {
  std::vector<std::string> cols;
  for (Eigen::Index i = 1; i <= count; ++i) cols.push_back(prefix + "_" + std::to_string(i));
  return cols;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path), path_(path) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

  /// `t` followed by the entries of each vector in order.
  void step(long t, std::initializer_list<const Eigen::VectorXd*> blocks,
            const std::vector<std::string>& trailing = {}) {
    std::vector<std::string> cells{std::to_string(t)};
    for (const auto* b : blocks)
      for (Eigen::Index i = 0; i < b->size(); ++i) cells.push_back(format_number((*b)(i)));
    cells.insert(cells.end(), trailing.begin(), trailing.end());
    row(cells);
  }

  ~CsvWriter() { out_.flush(); }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
      cell.remove_suffix(1);
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Reads `t, y_1..y_m` rows. `t` must run 1, 2, ... without gaps.
[[nodiscard]] inline std::vector<Eigen::VectorXd> read_measurements(const std::filesystem::path& path,
                                                                    Eigen::Index m) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open measurement file '" + path.string() + "'");
  const std::string where = path.filename().string();
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(where + ": empty file, header row required");
  const auto header = detail::split(line);
  if (static_cast<Eigen::Index>(header.size()) != m + 1 || header[0] != "t")
    throw IngestionError(where + " row 1: header must be t followed by " + std::to_string(m) +
                         " measurement columns");

  std::vector<Eigen::VectorXd> ys;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split(line);
    const std::string at = where + " row " + std::to_string(row);
    if (static_cast<Eigen::Index>(cells.size()) != m + 1)
      throw IngestionError(at + ": expected " + std::to_string(m + 1) + " columns, got " +
                           std::to_string(cells.size()));
    long t = 0;
    auto [tp, tec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), t);
    if (tec != std::errc() || tp != cells[0].data() + cells[0].size())
      throw IngestionError(at + ": t must be an integer");
    if (t != static_cast<long>(ys.size()) + 1)
      throw IngestionError(at + ": expected t = " + std::to_string(ys.size() + 1) + ", got " +
                           std::to_string(t));
    Eigen::VectorXd y(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto cell = cells[static_cast<std::size_t>(j) + 1];
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v))
        throw IngestionError(at + ": column " + std::to_string(j + 2) + " is not a finite number");
      y(j) = v;
    }
    ys.push_back(std::move(y));
  }
  if (ys.empty()) throw IngestionError(where + ": no measurement rows");
  return ys;
}

}  // namespace robust_filter::cli
