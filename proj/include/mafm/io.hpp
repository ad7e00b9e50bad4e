#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "mafm/error.hpp"
#include "mafm/series.hpp"

namespace mafm::io {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form; identical bits give identical text.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s == "nan" || s == "NaN") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_index(std::string_view s, long long& out) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    std::string field(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    const auto b = field.find_first_not_of(" \t");
    const auto e = field.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::io, "read error on " + path.string());
  return ss.str();
}

/// Writes via a sibling temporary file and a rename, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + path.parent_path().string());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorKind::io, "write error on " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io, "cannot move output into place at " + path.string());
  }
}

/// A panel with its axis labels.
struct LabeledPanel {
  MatrixSeries X;
  std::vector<std::string> t_labels;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
};

inline std::string to_long_csv(const MatrixSeries& x) {
  std::string out = "t,row,col,value\n";
  for (Index t = 0; t < x.size(); ++t)
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j) {
        out += std::to_string(t);
        out += ',';
        out += std::to_string(i);
        out += ',';
        out += std::to_string(j);
        out += ',';
        out += format_double(x[t](i, j));
        out += '\n';
      }
  return out;
}

inline void write_long_csv(const fs::path& path, const MatrixSeries& x) {
  write_file_atomic(path, to_long_csv(x));
}

namespace detail {

// Axis keys: numeric order when every key is an integer, otherwise lexicographic
// for the time axis (ISO dates sort correctly) and first-appearance for labels.
inline std::vector<std::string> order_keys(std::vector<std::string> keys, bool sort_text) {
  bool numeric = true;
  for (const auto& k : keys) {
    long long v = 0;
    if (!parse_index(k, v)) {
      numeric = false;
      break;
    }
  }
  if (numeric) {
    std::stable_sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
      long long x = 0, y = 0;
      parse_index(a, x);
      parse_index(b, y);
      return x < y;
    });
  } else if (sort_text) {
    std::stable_sort(keys.begin(), keys.end());
  }
  return keys;
}

}  // namespace detail

/// Parses `t,row,col,value` text. Every (t,row,col) cell must appear exactly once.
inline LabeledPanel parse_long_csv(std::string_view text, const std::string& source = "<input>") {
  std::vector<std::array<std::string, 3>> keys;
  std::vector<double> values;
  std::vector<std::string> t_seen, r_seen, c_seen;
  std::map<std::string, int> t_set, r_set, c_set;
  std::size_t line_no = 0;
  bool header_done = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (!header_done) {
      header_done = true;
      if (fields.size() != 4 || fields[0] != "t" || fields[1] != "row" || fields[2] != "col" ||
          fields[3] != "value")
        fail(ErrorKind::io,
             source + ":1: expected header t,row,col,value");
      continue;
    }
    if (fields.size() != 4)
      fail(ErrorKind::io,
           source + ":" + std::to_string(line_no) + ": expected 4 fields");
    double v = 0.0;
    if (!parse_double(fields[3], v))
      fail(ErrorKind::io, source + ":" + std::to_string(line_no) +
                                         ": value '" + fields[3] + "' is not a number");
    if (t_set.emplace(fields[0], 0).second) t_seen.push_back(fields[0]);
    if (r_set.emplace(fields[1], 0).second) r_seen.push_back(fields[1]);
    if (c_set.emplace(fields[2], 0).second) c_seen.push_back(fields[2]);
    keys.push_back({fields[0], fields[1], fields[2]});
    values.push_back(v);
  }
  if (keys.empty()) fail(ErrorKind::io, source + ": panel has no observations");

  LabeledPanel out;
  out.t_labels = detail::order_keys(t_seen, true);
  out.row_labels = detail::order_keys(r_seen, false);
  out.col_labels = detail::order_keys(c_seen, false);
  auto index_of = [](const std::vector<std::string>& v) {
    std::map<std::string, Index> m;
    for (std::size_t k = 0; k < v.size(); ++k) m[v[k]] = static_cast<Index>(k);
    return m;
  };
  const auto ti = index_of(out.t_labels), ri = index_of(out.row_labels), ci = index_of(out.col_labels);
  const Index n = static_cast<Index>(out.t_labels.size());
  const Index d1 = static_cast<Index>(out.row_labels.size());
  const Index d2 = static_cast<Index>(out.col_labels.size());
  out.X = MatrixSeries(d1, d2, n);
  std::vector<char> filled(static_cast<std::size_t>(n * d1 * d2), 0);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const Index t = ti.at(keys[k][0]), i = ri.at(keys[k][1]), j = ci.at(keys[k][2]);
    char& f = filled[static_cast<std::size_t>((t * d1 + i) * d2 + j)];
    if (f)
      fail(ErrorKind::io, source + ": duplicate cell (t=" + keys[k][0] +
                                         ", row=" + keys[k][1] + ", col=" + keys[k][2] + ")");
    f = 1;
    out.X[t](i, j) = values[k];
  }
  for (Index t = 0; t < n; ++t)
    for (Index i = 0; i < d1; ++i)
      for (Index j = 0; j < d2; ++j)
        if (!filled[static_cast<std::size_t>((t * d1 + i) * d2 + j)])
          fail(ErrorKind::io,
               source + ": missing cell (t=" + out.t_labels[static_cast<std::size_t>(t)] +
                   ", row=" + out.row_labels[static_cast<std::size_t>(i)] +
                   ", col=" + out.col_labels[static_cast<std::size_t>(j)] + ")");
  return out;
}

inline LabeledPanel read_long_csv(const fs::path& path) {
  return parse_long_csv(read_file(path), path.string());
}

/// Plain numeric matrix, one row per line, no header.
inline std::string to_matrix_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_matrix_csv(const fs::path& path, const Matrix& m) {
  write_file_atomic(path, to_matrix_csv(m));
}

inline Matrix parse_matrix_csv(std::string_view text, const std::string& source = "<input>") {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size(); ++k) numeric = numeric && parse_double(fields[k], row[k]);
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;  // tolerate one header line
      fail(ErrorKind::io,
           source + ":" + std::to_string(line_no) + ": non-numeric entry");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::io, source + ":" + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::io, source + ": empty matrix");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

inline Matrix read_matrix_csv(const fs::path& path) {
  return parse_matrix_csv(read_file(path), path.string());
}

/// Directory of per-slice matrix CSVs described by manifest.json:
/// {"slices": ["2001.csv", ...], "t_labels": [...], "row_labels": [...], "col_labels": [...]}.
/// Label lists are optional.
inline LabeledPanel read_slice_directory(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("slices") || !manifest["slices"].is_array() || manifest["slices"].empty())
    fail(ErrorKind::io, manifest_path.string() + ": 'slices' must be a nonempty array");
  std::vector<Matrix> slices;
  for (const auto& name : manifest["slices"]) {
    if (!name.is_string())
      fail(ErrorKind::io, manifest_path.string() + ": slice names must be strings");
    slices.push_back(read_matrix_csv(dir / name.get<std::string>()));
  }
  LabeledPanel out;
  try {
    out.X = MatrixSeries::from_slices(slices);
  } catch (const Error&) {
    fail(ErrorKind::io, dir.string() + ": slices have different shapes");
  }
  auto labels = [&](const char* key, Index count) {
    std::vector<std::string> v;
    if (manifest.contains(key)) {
      v = manifest[key].get<std::vector<std::string>>();
      if (static_cast<Index>(v.size()) != count)
        fail(ErrorKind::io,
             manifest_path.string() + ": '" + key + "' has the wrong length");
    } else {
      for (Index k = 0; k < count; ++k) v.push_back(std::to_string(k));
    }
    return v;
  };
  out.t_labels = labels("t_labels", out.X.size());
  out.row_labels = labels("row_labels", out.X.rows());
  out.col_labels = labels("col_labels", out.X.cols());
  return out;
}

/// Long CSV file or slice directory, chosen by what the path is.
inline LabeledPanel read_panel(const fs::path& path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) return read_slice_directory(path);
  return read_long_csv(path);
}

}  // namespace mafm::io
