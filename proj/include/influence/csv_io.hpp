#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "influence/data_model.hpp"
#include "influence/error.hpp"

namespace influence {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0 into 0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Fixed number of significant digits, for SVG coordinates and reports.
inline std::string format_number(double v, int precision) {
  if (v == 0.0 || std::abs(v) < 1e-300) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision);
  return std::string(buf, res.ptr);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    fail(ErrorCategory::file_not_found, "file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a truncated output behind.
inline void write_text_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCategory::io_error, "cannot create directory " + path.parent_path().string());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io_error, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorCategory::io_error, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCategory::io_error, "cannot move output into place: " + path.string());
  }
}

// ---------------------------------------------------------------------------
// generic CSV

struct CsvDocument {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column_index(std::string_view name, std::string_view source) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      fail(ErrorCategory::parse_error,
           std::string(source) + ": missing column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline std::vector<std::string> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? line.npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline CsvDocument parse_csv(std::string_view text, std::string_view source) {
  CsvDocument doc;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == text.npos ? text.npos : nl - pos);
    pos = nl == text.npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (!have_header) {
      if (!fields.empty() && fields[0].size() >= 3 &&
          fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        fields[0].erase(0, 3);  // UTF-8 BOM
      }
      doc.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != doc.header.size()) {
      fail(ErrorCategory::parse_error, std::string(source) + ": line " + std::to_string(line_no) +
                                           ": expected " + std::to_string(doc.header.size()) +
                                           " fields, found " + std::to_string(fields.size()));
    }
    doc.rows.push_back(std::move(fields));
    doc.line_numbers.push_back(line_no);
  }
  require(have_header, ErrorCategory::parse_error, std::string(source) + ": missing header");
  return doc;
}

inline double parse_number(std::string_view cell, std::string_view source, std::size_t line) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
    fail(ErrorCategory::parse_error, std::string(source) + ": line " + std::to_string(line) +
                                         ": non-numeric cell '" + std::string(cell) + "'");
  }
  return v;
}

inline CsvDocument read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

/// Numeric column by name, with the source line reported on bad cells.
inline std::vector<double> numeric_column(const CsvDocument& doc, std::string_view name,
                                          std::string_view source) {
  const auto idx = doc.column_index(name, source);
  std::vector<double> out;
  out.reserve(doc.rows.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    out.push_back(parse_number(doc.rows[r][idx], source, doc.line_numbers[r]));
  }
  return out;
}

inline std::string render_csv(const std::vector<std::string>& header,
                              const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto append_row = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  };
  append_row(header);
  for (const auto& r : rows) append_row(r);
  return out;
}

/// Writes numeric rows with a fixed column order and round-trip formatting.
inline void save_series(const std::filesystem::path& path, const std::vector<std::string>& header,
                        const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<std::string>> text_rows;
  text_rows.reserve(rows.size());
  for (const auto& r : rows) {
    require(r.size() == header.size(), ErrorCategory::invalid_argument,
            "row width does not match header");
    std::vector<std::string> fields;
    fields.reserve(r.size());
    for (double v : r) fields.push_back(format_number(v));
    text_rows.push_back(std::move(fields));
  }
  write_text_file_atomic(path, render_csv(header, text_rows));
}

// ---------------------------------------------------------------------------
// trajectory files

/// Column mapping for trajectory CSVs. Raw files are normalized on load:
/// actions by a symmetric per-channel velocity bound, observations by
/// per-trajectory min-max.
struct TrajectorySchema {
  std::string time_column = "t";
  std::vector<std::string> observation_columns{"depth"};
  std::vector<std::string> action_columns{"lin_vel", "ang_vel"};
  bool normalized = false;
  std::vector<double> action_vmax{0.5, 1.0};
  double sample_rate_hz = 10.0;

  void validate() const {
    require(!observation_columns.empty(), ErrorCategory::invalid_argument,
            "schema needs at least one observation column");
    require(sample_rate_hz > 0.0, ErrorCategory::invalid_argument, "sample rate must be positive");
    if (!normalized) {
      require(action_vmax.size() == action_columns.size(), ErrorCategory::invalid_argument,
              "one velocity bound is required per action column");
    }
  }
};

/// Raw columns of a trajectory file, before any normalization.
struct RawTrajectory {
  std::vector<double> time;
  std::vector<std::vector<double>> observations;  // per channel
  std::vector<std::vector<double>> actions;       // per channel
};

inline RawTrajectory load_raw_trajectory(const std::filesystem::path& path,
                                         const TrajectorySchema& schema) {
  schema.validate();
  const auto doc = read_csv(path);
  const auto src = path.string();
  RawTrajectory raw;
  raw.time = numeric_column(doc, schema.time_column, src);
  for (const auto& c : schema.observation_columns) raw.observations.push_back(numeric_column(doc, c, src));
  for (const auto& c : schema.action_columns) raw.actions.push_back(numeric_column(doc, c, src));
  return raw;
}

inline Trajectory make_trajectory(const RawTrajectory& raw, const TrajectorySchema& schema) {
  schema.validate();
  const std::size_t T = raw.time.size();
  Trajectory traj;
  traj.sample_rate_hz = schema.sample_rate_hz;
  traj.observation_names = schema.observation_columns;
  traj.action_names = schema.action_columns;
  traj.observations = FrameMatrix(T, raw.observations.size());
  traj.actions = FrameMatrix(T, raw.actions.size());
  for (std::size_t c = 0; c < raw.observations.size(); ++c) {
    require(raw.observations[c].size() == T, ErrorCategory::parse_error, "column length mismatch");
    if (schema.normalized || T == 0) {
      traj.observations.set_column(c, raw.observations[c]);
    } else {
      traj.observations.set_column(c, normalize_depth(raw.observations[c]));
    }
  }
  for (std::size_t c = 0; c < raw.actions.size(); ++c) {
    require(raw.actions[c].size() == T, ErrorCategory::parse_error, "column length mismatch");
    if (schema.normalized) {
      traj.actions.set_column(c, raw.actions[c]);
    } else {
      traj.actions.set_column(c, normalize_actions(raw.actions[c], schema.action_vmax[c]));
    }
  }
  traj.validate();
  return traj;
}

inline Trajectory load_trajectory(const std::filesystem::path& path, const TrajectorySchema& schema) {
  const auto raw = load_raw_trajectory(path, schema);
  try {
    return make_trajectory(raw, schema);
  } catch (const Error& e) {
    fail(e.category(), path.string() + ": " + e.what());
  }
}

/// Writes a trajectory in the CSV layout `t,<observations>,<actions>`.
inline void save_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                            const TrajectorySchema& schema) {
  std::vector<std::string> header{schema.time_column};
  header.insert(header.end(), schema.observation_columns.begin(), schema.observation_columns.end());
  header.insert(header.end(), schema.action_columns.begin(), schema.action_columns.end());
  std::vector<std::vector<double>> rows;
  rows.reserve(traj.length());
  for (std::size_t t = 0; t < traj.length(); ++t) {
    std::vector<double> r{static_cast<double>(t) / traj.sample_rate_hz};
    for (double v : traj.observations.row(t)) r.push_back(v);
    for (double v : traj.actions.row(t)) r.push_back(v);
    rows.push_back(std::move(r));
  }
  save_series(path, header, rows);
}

}  // namespace influence
