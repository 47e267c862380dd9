#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/io_util.hpp"

namespace furnace {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Per-minute furnace log: named sensor channels plus the four tap-hole
/// temperature columns. Missing cells are NaN; cadence gaps are materialized
/// as explicit all-missing rows, never skipped.
struct SensorFrame {
  std::vector<std::int64_t> timestamps;  // minutes since epoch, +1 per row
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;  // column-major: channels[c][row]
  std::array<std::vector<double>, 4> tap_temps;

  std::size_t rows() const { return timestamps.size(); }
  std::size_t n_channels() const { return channel_names.size(); }

  std::size_t channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channel_names.size(); ++i)
      if (channel_names[i] == name) return i;
    throw std::out_of_range("SensorFrame: no channel named " + name);
  }

  void validate() const {
    if (channels.size() != channel_names.size())
      throw std::runtime_error("SensorFrame: channel/name count mismatch");
    for (const auto& c : channels)
      if (c.size() != rows()) throw std::runtime_error("SensorFrame: ragged channel");
    for (const auto& t : tap_temps)
      if (t.size() != rows()) throw std::runtime_error("SensorFrame: ragged tap column");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      if (timestamps[i] != timestamps[i - 1] + 1)
        throw std::runtime_error("SensorFrame: cadence break at row " + std::to_string(i));
  }
};

namespace detail {
inline double parse_cell(const std::string& cell, bool temp_column, std::size_t lineno) {
  if (cell.empty() || cell == "null") return kMissing;
  const double v = parse_double(cell, ("csv line " + std::to_string(lineno)).c_str());
  // Tap-temperature columns encode missing readings as 0 as well.
  if (temp_column && v == 0.0) return kMissing;
  return v;
}
}  // namespace detail

/// Reads the raw CSV format: header `timestamp,<channel...>,temp1..temp4`,
/// ISO-8601 minute timestamps, one row per minute. Gaps in the cadence are
/// filled with explicit all-missing rows.
inline SensorFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  auto header = split_csv_line(line);
  if (header.size() < 6 || header[0] != "timestamp")
    throw std::runtime_error(path + ": header must be timestamp,<channels...>,temp1..temp4");
  for (int k = 0; k < 4; ++k) {
    const std::string want = "temp" + std::to_string(k + 1);
    if (header[header.size() - 4 + k] != want)
      throw std::runtime_error(path + ": expected trailing temp columns temp1..temp4");
  }

  SensorFrame frame;
  frame.channel_names.assign(header.begin() + 1, header.end() - 4);
  frame.channels.assign(frame.channel_names.size(), {});
  const std::size_t n_ch = frame.channel_names.size();

  auto push_missing_row = [&](std::int64_t minute) {
    frame.timestamps.push_back(minute);
    for (auto& c : frame.channels) c.push_back(kMissing);
    for (auto& t : frame.tap_temps) t.push_back(kMissing);
  };

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + " has " +
                               std::to_string(cells.size()) + " fields, expected " +
                               std::to_string(header.size()));
    std::int64_t minute;
    try {
      minute = iso_to_minutes(cells[0]);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!frame.timestamps.empty()) {
      const std::int64_t prev = frame.timestamps.back();
      if (minute == prev)
        throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                 ": duplicate timestamp");
      if (minute < prev)
        throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                 ": timestamps out of order");
      for (std::int64_t m = prev + 1; m < minute; ++m) push_missing_row(m);
    }
    frame.timestamps.push_back(minute);
    for (std::size_t c = 0; c < n_ch; ++c)
      frame.channels[c].push_back(detail::parse_cell(cells[1 + c], false, lineno));
    for (int k = 0; k < 4; ++k)
      frame.tap_temps[k].push_back(detail::parse_cell(cells[1 + n_ch + k], true, lineno));
  }
  if (frame.rows() == 0) throw std::runtime_error(path + ": no data rows");
  frame.validate();
  return frame;
}

inline std::string frame_to_csv(const SensorFrame& frame) {
  std::string out = "timestamp";
  for (const auto& n : frame.channel_names) out += "," + n;
  out += ",temp1,temp2,temp3,temp4\n";
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out += minutes_to_iso(frame.timestamps[r]);
    for (const auto& c : frame.channels)
      out += "," + (is_missing(c[r]) ? "null" : format_double(c[r]));
    for (const auto& t : frame.tap_temps)
      out += "," + (is_missing(t[r]) ? "null" : format_double(t[r]));
    out += "\n";
  }
  return out;
}

inline void save_csv(const SensorFrame& frame, const std::string& path) {
  frame.validate();
  write_file_atomic(path, frame_to_csv(frame));
}

}  // namespace furnace
