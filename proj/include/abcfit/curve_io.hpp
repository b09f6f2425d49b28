#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/forward_model.hpp"

namespace abcfit {

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_number(const std::string& cell, std::size_t line, const char* column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size() || !std::isfinite(v))
    throw FormatError(std::string("non-numeric ") + column + " value '" + cell + "'", line);
  return v;
}

// 12 significant digits.
inline std::string format_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

// Reads a "vg,mobility" CSV. Rows may come in any order; they are returned
// sorted by gate voltage. No resampling happens here.
inline MobilityCurve parse_curve_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  int vg_col = -1, mu_col = -1;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw FormatError("empty curve file");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "vg") vg_col = static_cast<int>(i);
    if (header[i] == "mobility") mu_col = static_cast<int>(i);
  }
  if (vg_col < 0 || mu_col < 0)
    throw FormatError("curve header must contain columns 'vg' and 'mobility'", lineno);

  struct Row {
    double vg;
    double mu;
    std::size_t line;
  };
  std::vector<Row> rows;
  const auto need = static_cast<std::size_t>(std::max(vg_col, mu_col)) + 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < need) throw FormatError("missing column", lineno);
    const double vg = detail::parse_number(cells[static_cast<std::size_t>(vg_col)], lineno, "vg");
    const double mu =
        detail::parse_number(cells[static_cast<std::size_t>(mu_col)], lineno, "mobility");
    if (mu < 0.0) throw FormatError("negative mobility", lineno);
    rows.push_back({vg, mu, lineno});
  }
  if (rows.size() < 2) throw FormatError("curve needs at least 2 data rows", lineno);

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.vg < b.vg; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].vg == rows[i - 1].vg)
      throw FormatError("duplicate vg value " + detail::format_decimal(rows[i].vg),
                        std::max(rows[i].line, rows[i - 1].line));

  std::vector<double> vg, mu;
  for (const auto& r : rows) {
    vg.push_back(r.vg);
    mu.push_back(r.mu);
  }
  return MobilityCurve{VoltageGrid(std::move(vg)), std::move(mu)};
}

inline MobilityCurve load_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open curve file '" + path + "'");
  try {
    return parse_curve_csv(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_curve_csv(std::ostream& out, const MobilityCurve& curve) {
  out << "vg,mobility\n";
  for (std::size_t i = 0; i < curve.size(); ++i)
    out << detail::format_decimal(curve.grid[i]) << ',' << detail::format_decimal(curve.values[i])
        << '\n';
}

inline void save_curve_csv(const std::string& path, const MobilityCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_curve_csv(out, curve);
}

}  // namespace abcfit
