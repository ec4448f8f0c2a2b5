#pragma once

// Panel CSV (header `trajectory_id,time,count`) reading and writing, plus
// shortest round-trip number formatting shared by every text output.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "lbdp/core.hpp"
#include "lbdp/error.hpp"

namespace lbdp {

inline constexpr std::string_view panel_schema = "lbdp.panel/1";
inline constexpr std::string_view panel_header = "trajectory_id,time,count";

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

template <class T>
bool parse_full(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

/// Read a panel. Lines starting with '#' and blank lines are skipped; the
/// first remaining line must be the header. Rows may come in any order and
/// are grouped by id (first appearance order) and sorted by time.
inline Panel read_panel_csv(std::istream& in) {
  struct Row {
    double time;
    std::int64_t count;
    std::size_t line;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> groups;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      const auto cols = detail::split(line, ',');
      if (cols.size() != 3 || cols[0] != "trajectory_id" || cols[1] != "time" || cols[2] != "count") {
        throw parse_error("line " + std::to_string(line_no) + ": expected header '" + std::string(panel_header) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto cols = detail::split(line, ',');
    if (cols.size() != 3) {
      throw parse_error(where + "expected 3 fields, found " + std::to_string(cols.size()));
    }
    if (cols[0].empty()) throw parse_error(where + "empty trajectory_id");
    Row row{0.0, 0, line_no};
    if (!detail::parse_full(cols[1], row.time) || !std::isfinite(row.time)) {
      throw parse_error(where + "time '" + std::string(cols[1]) + "' is not a finite number");
    }
    if (!detail::parse_full(cols[2], row.count) || row.count < 0) {
      throw parse_error(where + "count '" + std::string(cols[2]) + "' is not a non-negative integer");
    }
    std::string id(cols[0]);
    auto [it, fresh] = groups.try_emplace(id);
    if (fresh) order.push_back(id);
    for (const auto& r : it->second) {
      if (r.time == row.time) {
        throw parse_error(where + "duplicate row for trajectory '" + id + "' at time " + std::string(cols[1]) +
                          " (first on line " + std::to_string(r.line) + ")");
      }
    }
    it->second.push_back(row);
  }
  if (!header_seen) throw parse_error("line " + std::to_string(line_no) + ": missing header");
  if (order.empty()) throw parse_error("no data rows");

  std::vector<Trajectory> trajectories;
  for (const auto& id : order) {
    auto& rows = groups[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    std::vector<double> times;
    std::vector<std::int64_t> counts;
    for (const auto& r : rows) {
      times.push_back(r.time);
      counts.push_back(r.count);
    }
    try {
      trajectories.emplace_back(std::move(times), std::move(counts));
    } catch (const domain_error& e) {
      throw parse_error("trajectory '" + id + "' (first row on line " + std::to_string(rows.front().line) +
                        "): " + e.what());
    }
  }
  return Panel(std::move(trajectories));
}

/// Write a panel; trajectory ids are 1..M unless given.
inline void write_panel_csv(std::ostream& out, const Panel& panel, const std::vector<std::string>& ids = {}) {
  out << "# schema: " << panel_schema << '\n' << panel_header << '\n';
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto id = i < ids.size() ? ids[i] : std::to_string(i + 1);
    const auto& tr = panel[i];
    for (std::size_t j = 0; j < tr.size(); ++j) {
      out << id << ',' << format_number(tr.times()[j]) << ',' << tr.counts()[j] << '\n';
    }
  }
}

}  // namespace lbdp
