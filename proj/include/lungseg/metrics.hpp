#pragma once

// Lung volumes, overlap scores, cohort summaries and cross-method volume
// correlations, plus the plain-text CSV inputs and report tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lungseg/error.hpp"
#include "lungseg/volume.hpp"

namespace lungseg::metrics {

/// Foreground volume in millilitres.
inline double volume_ml(const BinaryMask& mask) {
  return static_cast<double>(mask.count()) * mask.geometry.voxel_volume_mm3() / 1000.0;
}

struct OverlapCounts {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t intersection = 0;
  std::size_t union_ = 0;
};

inline OverlapCounts overlap_counts(const BinaryMask& a, const BinaryMask& b) {
  if (a.geometry.dims != b.geometry.dims) throw Error(ErrorCode::GeometryMismatch, "masks have different dims");
  OverlapCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values[i] != 0, y = b.values[i] != 0;
    c.a += x;
    c.b += y;
    c.intersection += x && y;
    c.union_ += x || y;
  }
  return c;
}

/// Intersection over union; 1 when both masks are empty.
inline double overlap_coefficient(const BinaryMask& a, const BinaryMask& b) {
  const auto c = overlap_counts(a, b);
  if (c.union_ == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(c.union_);
}

/// 2|a & b| / (|a| + |b|); 1 when both masks are empty.
inline double dice_coefficient(const BinaryMask& a, const BinaryMask& b) {
  const auto c = overlap_counts(a, b);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.intersection) / static_cast<double>(c.a + c.b);
}

struct OverlapSummary {
  std::string object_name;
  double mean = 0, std = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quantile of sorted data, linear interpolation between order statistics
/// at position (n - 1) * p.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Mean, population standard deviation, extremes and inclusive quartiles.
inline OverlapSummary summary_stats(std::vector<double> values, std::string object_name = {}) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "summary_stats needs at least one value");
  std::sort(values.begin(), values.end());
  OverlapSummary s;
  s.object_name = std::move(object_name);
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  if (s.min == s.max) {
    s.mean = s.min;
    s.std = 0.0;
    return s;
  }
  const double n = static_cast<double>(values.size());
  s.mean = std::clamp(std::accumulate(values.begin(), values.end(), 0.0) / n, s.min, s.max);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::IncompleteTable, "pearson needs >= 2 paired values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ConstantSeries, "series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct VolumeRecord {
  std::string case_id;
  std::string method;
  double volume_ml = 0.0;
};

struct CorrelationMatrix {
  std::vector<std::string> methods;   // first-appearance order
  std::vector<std::vector<double>> r;
};

inline CorrelationMatrix pearson_correlation_matrix(const std::vector<VolumeRecord>& table) {
  CorrelationMatrix out;
  std::vector<std::string> cases;
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const auto& rec : table) {
    if (std::find(out.methods.begin(), out.methods.end(), rec.method) == out.methods.end()) {
      out.methods.push_back(rec.method);
    }
    if (std::find(cases.begin(), cases.end(), rec.case_id) == cases.end()) cases.push_back(rec.case_id);
    if (!lookup.emplace(std::make_pair(rec.case_id, rec.method), rec.volume_ml).second) {
      throw Error(ErrorCode::IncompleteTable, "duplicate entry for case " + rec.case_id + ", method " + rec.method);
    }
  }
  if (cases.size() < 2) throw Error(ErrorCode::IncompleteTable, "at least two cases are required");
  std::vector<std::vector<double>> series(out.methods.size());
  for (std::size_t m = 0; m < out.methods.size(); ++m) {
    for (const auto& c : cases) {
      auto it = lookup.find({c, out.methods[m]});
      if (it == lookup.end()) {
        throw Error(ErrorCode::IncompleteTable, "method " + out.methods[m] + " has no volume for case " + c);
      }
      series[m].push_back(it->second);
    }
  }
  for (std::size_t m = 0; m < series.size(); ++m) {
    const auto [lo, hi] = std::minmax_element(series[m].begin(), series[m].end());
    if (*lo == *hi) throw Error(ErrorCode::ConstantSeries, "method " + out.methods[m] + " has constant volumes");
  }
  const std::size_t k = out.methods.size();
  out.r.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double r = pearson(series[i], series[j]);
      out.r[i][j] = out.r[j][i] = r;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

/// Rows of a headed CSV; blank lines are skipped. The header must start
/// with `required` (extra trailing columns are allowed).
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::vector<std::string>& required,
                                                       std::vector<std::string>* header_out = nullptr) {
  std::stringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields.size() < required.size() || !std::equal(required.begin(), required.end(), fields.begin())) {
        std::string expected;
        for (const auto& r : required) expected += (expected.empty() ? "" : ",") + r;
        throw Error(ErrorCode::ParseError, "CSV header must begin with " + expected);
      }
      if (header_out) *header_out = fields;
      have_header = true;
      continue;
    }
    if (fields.size() < required.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(required.size()) + " fields");
    }
    rows.push_back(std::move(fields));
  }
  if (!have_header) throw Error(ErrorCode::ParseError, "CSV is empty");
  return rows;
}

inline double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "invalid " + what + ": '" + s + "'");
  }
}

/// `case_id,method,volume_ml`
inline std::vector<VolumeRecord> parse_volume_table(const std::string& text) {
  std::vector<VolumeRecord> out;
  for (const auto& row : parse_csv(text, {"case_id", "method", "volume_ml"})) {
    const double v = parse_number(row[2], "volume_ml");
    if (v < 0) throw Error(ErrorCode::ParseError, "negative volume for case " + row[0]);
    out.push_back({row[0], row[1], v});
  }
  return out;
}

struct ManifestRow {
  std::string case_id;
  std::string reference_path;
  std::string predicted_path;
  std::string object_name = "lung";
  std::optional<int> label;            // selects voxels of the predicted image
  std::optional<int> reference_label;  // selects voxels of the reference image
};

/// `case_id,reference_path,predicted_path` plus optional `object`, `label`
/// and `reference_label` columns (any order).
inline std::vector<ManifestRow> parse_overlap_manifest(const std::string& text) {
  std::vector<std::string> header;
  const auto rows = parse_csv(text, {"case_id", "reference_path", "predicted_path"}, &header);
  std::optional<std::size_t> object_col, label_col, ref_label_col;
  for (std::size_t i = 3; i < header.size(); ++i) {
    if (header[i] == "object") object_col = i;
    if (header[i] == "label") label_col = i;
    if (header[i] == "reference_label") ref_label_col = i;
  }
  std::vector<ManifestRow> out;
  for (const auto& row : rows) {
    ManifestRow m{row[0], row[1], row[2], "lung", std::nullopt, std::nullopt};
    if (object_col && *object_col < row.size() && !row[*object_col].empty()) m.object_name = row[*object_col];
    if (label_col && *label_col < row.size() && !row[*label_col].empty()) {
      m.label = static_cast<int>(parse_number(row[*label_col], "label"));
    }
    if (ref_label_col && *ref_label_col < row.size() && !row[*ref_label_col].empty()) {
      m.reference_label = static_cast<int>(parse_number(row[*ref_label_col], "reference_label"));
    }
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

/// Lower-triangular correlation table, one row and column per method.
inline std::string format_correlation_table(const CorrelationMatrix& m) {
  std::size_t first = 0;
  for (const auto& name : m.methods) first = std::max(first, name.size());
  first += 2;
  std::vector<std::size_t> widths;
  for (const auto& name : m.methods) widths.push_back(std::max<std::size_t>(name.size(), 5) + 2);

  std::string out = pad_right("", first);
  for (std::size_t j = 0; j < m.methods.size(); ++j) out += pad_right(m.methods[j], widths[j]);
  out = out.substr(0, out.find_last_not_of(' ') + 1) + "\n";
  for (std::size_t i = 0; i < m.methods.size(); ++i) {
    std::string row = pad_right(m.methods[i], first);
    for (std::size_t j = 0; j <= i; ++j) row += pad_right(fixed3(m.r[i][j]), widths[j]);
    out += row.substr(0, row.find_last_not_of(' ') + 1) + "\n";
  }
  return out;
}

/// One row per object, then a `score` row holding the mean of the object means.
inline std::string format_overlap_table(const std::vector<OverlapSummary>& rows) {
  std::size_t first = 5;
  for (const auto& r : rows) first = std::max(first, r.object_name.size());
  first += 2;
  const std::vector<std::string> cols = {"mean", "std", "min", "Q1", "median", "Q3", "max"};
  auto line = [&](const std::string& name, const std::vector<std::string>& cells) {
    std::string s = pad_right(name, first);
    for (const auto& c : cells) s += pad_right(c, 8);
    return s.substr(0, s.find_last_not_of(' ') + 1) + "\n";
  };
  std::string out = line("obj", cols);
  double score = 0.0;
  for (const auto& r : rows) {
    out += line(r.object_name, {fixed3(r.mean), fixed3(r.std), fixed3(r.min), fixed3(r.q1), fixed3(r.median),
                                fixed3(r.q3), fixed3(r.max)});
    score += r.mean;
  }
  if (!rows.empty()) score /= static_cast<double>(rows.size());
  out += line("score", {fixed3(score)});
  out += "# score = mean of the per-object means; overlap = |A and B| / |A or B|; std uses the n divisor\n";
  return out;
}

}  // namespace lungseg::metrics
