#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rtrl/trainer.hpp"

namespace rtrl {

// Frozen metrics schema; tests assert the exact header string.
inline constexpr const char* kMetricsHeader =
    "iter,mean_return,mean_hitting_time,z_hat,effective_lr,grad_norm,censor_rate,wall_time_s";

inline constexpr const char* kOccupancyHeader = "row,col,count,normalized";

inline void write_metrics_header(std::ostream& os) { os << kMetricsHeader << '\n'; }

inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  os << r.iter << ',' << format_double(r.mean_return) << ',' << format_double(r.mean_hitting_time)
     << ',' << format_double(r.z_hat) << ',' << format_double(r.effective_lr) << ','
     << format_double(r.grad_norm) << ',' << format_double(r.censor_rate) << ','
     << format_double(r.wall_time_s) << '\n';
}

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}


inline double parse_double_field(const std::string& s, std::size_t row) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw CsvError("csv row " + std::to_string(row) + ": bad numeric field '" + s + "'");
  return value;
}

inline std::size_t parse_size_field(const std::string& s, std::size_t row) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw CsvError("csv row " + std::to_string(row) + ": bad integer field '" + s + "'");
  return value;
}

}  // namespace detail

// Reads a metrics CSV, validating the frozen header and every row; rows are
// numbered from 1 (the header) in diagnostics.
inline std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw CsvError("csv row 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader)
    throw CsvError("csv row 1: expected header '" + std::string(kMetricsHeader) + "'");
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 8)
      throw CsvError("csv row " + std::to_string(lineno) + ": expected 8 fields, got " +
                     std::to_string(fields.size()));
    MetricsRow r;
    r.iter = detail::parse_size_field(fields[0], lineno);
    r.mean_return = detail::parse_double_field(fields[1], lineno);
    r.mean_hitting_time = detail::parse_double_field(fields[2], lineno);
    r.z_hat = detail::parse_double_field(fields[3], lineno);
    r.effective_lr = detail::parse_double_field(fields[4], lineno);
    r.grad_norm = detail::parse_double_field(fields[5], lineno);
    r.censor_rate = detail::parse_double_field(fields[6], lineno);
    r.wall_time_s = detail::parse_double_field(fields[7], lineno);
    rows.push_back(r);
  }
  if (rows.empty()) throw CsvError("csv: no data rows");
  return rows;
}

struct OccupancyCsv {
  std::size_t n0 = 0, n1 = 0;
  std::vector<double> normalized;  // n0 x n1 row-major
  std::vector<std::int64_t> counts;
};

inline OccupancyCsv read_occupancy_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw CsvError("csv row 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kOccupancyHeader)
    throw CsvError("csv row 1: expected header '" + std::string(kOccupancyHeader) + "'");
  struct Cell {
    std::size_t row, col;
    std::int64_t count;
    double normalized;
  };
  std::vector<Cell> cells;
  std::size_t lineno = 1, n0 = 0, n1 = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4)
      throw CsvError("csv row " + std::to_string(lineno) + ": expected 4 fields, got " +
                     std::to_string(fields.size()));
    Cell c;
    c.row = detail::parse_size_field(fields[0], lineno);
    c.col = detail::parse_size_field(fields[1], lineno);
    c.count = static_cast<std::int64_t>(detail::parse_size_field(fields[2], lineno));
    c.normalized = detail::parse_double_field(fields[3], lineno);
    n0 = std::max(n0, c.row + 1);
    n1 = std::max(n1, c.col + 1);
    cells.push_back(c);
  }
  if (cells.empty()) throw CsvError("csv: no data rows");
  OccupancyCsv out;
  out.n0 = n0;
  out.n1 = n1;
  out.normalized.assign(n0 * n1, 0.0);
  out.counts.assign(n0 * n1, 0);
  for (const auto& c : cells) {
    out.normalized[c.row * n1 + c.col] = c.normalized;
    out.counts[c.row * n1 + c.col] = c.count;
  }
  return out;
}

}  // namespace rtrl
