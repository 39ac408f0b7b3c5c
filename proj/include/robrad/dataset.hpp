#pragma once

// Tabular data: numeric and categorical columns with missing cells,
// plus a small RFC 4180 CSV reader.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "robrad/error.hpp"

namespace robrad {

enum class ColumnKind { Numeric, Categorical };

/// One named column. Numeric cells hold NaN when missing; categorical cells
/// hold an index into `levels` (levels in first-observed order) or -1.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<double> numeric;
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t size() const {
    return kind == ColumnKind::Numeric ? numeric.size() : codes.size();
  }
  bool is_missing(std::size_t row) const {
    return kind == ColumnKind::Numeric ? std::isnan(numeric[row]) : codes[row] < 0;
  }
  /// Cell rendered as text (used for cluster keys); empty when missing.
  std::string text(std::size_t row) const {
    if (is_missing(row)) return {};
    if (kind == ColumnKind::Categorical) return levels[static_cast<std::size_t>(codes[row])];
    std::ostringstream os;
    os.precision(17);
    os << numeric[row];
    return os.str();
  }
};

/// True when a raw CSV cell denotes a missing value.
inline bool is_missing_token(std::string_view cell) { return cell.empty() || cell == "NA"; }

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

class Dataset {
 public:
  Dataset() = default;

  /// Builds a dataset; every column must have the same length.
  explicit Dataset(std::vector<Column> columns, std::optional<std::string> cluster_column = std::nullopt)
      : columns_(std::move(columns)) {
    rows_ = columns_.empty() ? 0 : columns_.front().size();
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (columns_[c].size() != rows_)
        throw ConfigError("column '" + columns_[c].name + "' has " + std::to_string(columns_[c].size()) +
                          " cells, expected " + std::to_string(rows_));
      if (!index_.emplace(columns_[c].name, c).second)
        throw ConfigError("duplicate column name '" + columns_[c].name + "'");
    }
    if (cluster_column) set_cluster_column(*cluster_column);
  }

  std::size_t row_count() const { return rows_; }
  std::size_t column_count() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const std::optional<std::string>& cluster_column() const { return cluster_; }

  bool has_column(std::string_view name) const { return index_.contains(std::string(name)); }

  const Column& column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown column '" + std::string(name) + "'");
    return columns_[it->second];
  }

  void set_cluster_column(const std::string& name) {
    const Column& col = column(name);
    for (std::size_t i = 0; i < rows_; ++i)
      if (col.is_missing(i)) throw ConfigError("cluster column '" + name + "' has a missing cell at row " + std::to_string(i + 1));
    cluster_ = name;
  }

  /// Cluster id per row (dense, first-seen order). One cluster per row when
  /// no cluster column is set.
  std::vector<std::size_t> cluster_ids() const {
    std::vector<std::size_t> ids(rows_);
    if (!cluster_) {
      for (std::size_t i = 0; i < rows_; ++i) ids[i] = i;
      return ids;
    }
    const Column& col = column(*cluster_);
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < rows_; ++i) ids[i] = seen.emplace(col.text(i), seen.size()).first->second;
    return ids;
  }

  /// New dataset made of the given rows (repeats allowed). Categorical level
  /// tables are carried over unchanged.
  Dataset take(std::span<const std::size_t> rows) const {
    Dataset out;
    out.columns_.reserve(columns_.size());
    for (const Column& src : columns_) {
      Column dst;
      dst.name = src.name;
      dst.kind = src.kind;
      dst.levels = src.levels;
      if (src.kind == ColumnKind::Numeric) {
        dst.numeric.reserve(rows.size());
        for (std::size_t r : rows) dst.numeric.push_back(src.numeric[r]);
      } else {
        dst.codes.reserve(rows.size());
        for (std::size_t r : rows) dst.codes.push_back(src.codes[r]);
      }
      out.columns_.push_back(std::move(dst));
    }
    out.index_ = index_;
    out.rows_ = rows.size();
    out.cluster_ = cluster_;
    return out;
  }

 private:
  std::vector<Column> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t rows_ = 0;
  std::optional<std::string> cluster_;
};

namespace csv {

/// Splits CSV text into records. Handles quoted fields with embedded commas,
/// doubled quotes and newlines; accepts LF or CRLF line endings.
inline std::vector<std::vector<std::string>> parse_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.starts_with("\xEF\xBB\xBF")) i = 3;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    if (!(record.size() == 1 && record.front().empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (; i < text.size(); ++i) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw ConfigError("CSV: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace csv

/// Parses CSV text with a header row. A column is numeric when every
/// non-missing cell parses as a finite number, categorical otherwise.
/// Empty cells and "NA" are missing.
inline Dataset dataset_from_csv_text(std::string_view text,
                                     std::optional<std::string> cluster_column = std::nullopt) {
  auto records = csv::parse_records(text);
  if (records.empty()) throw ConfigError("CSV: missing header row");
  const auto& header = records.front();
  const std::size_t ncol = header.size();
  for (std::size_t r = 1; r < records.size(); ++r)
    if (records[r].size() != ncol)
      throw ConfigError("CSV: row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                        " fields, header has " + std::to_string(ncol));
  const std::size_t nrow = records.size() - 1;
  std::vector<Column> columns(ncol);
  for (std::size_t c = 0; c < ncol; ++c) {
    Column& col = columns[c];
    col.name = header[c];
    bool numeric = true;
    std::vector<double> values(nrow, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < nrow && numeric; ++r) {
      const std::string& cell = records[r + 1][c];
      if (is_missing_token(cell)) continue;
      if (auto v = parse_number(cell)) values[r] = *v;
      else numeric = false;
    }
    if (numeric) {
      col.kind = ColumnKind::Numeric;
      col.numeric = std::move(values);
      continue;
    }
    col.kind = ColumnKind::Categorical;
    col.codes.assign(nrow, -1);
    std::unordered_map<std::string, int> lookup;
    for (std::size_t r = 0; r < nrow; ++r) {
      const std::string& cell = records[r + 1][c];
      if (is_missing_token(cell)) continue;
      auto [it, inserted] = lookup.emplace(cell, static_cast<int>(col.levels.size()));
      if (inserted) col.levels.push_back(cell);
      col.codes[r] = it->second;
    }
  }
  return Dataset(std::move(columns), std::move(cluster_column));
}

inline Dataset read_csv(const std::string& path, std::optional<std::string> cluster_column = std::nullopt) {
  return dataset_from_csv_text(csv::read_file(path), std::move(cluster_column));
}

/// Convenience constructors used by tests and the simulation tools.
inline Column numeric_column(std::string name, std::vector<double> values) {
  Column c;
  c.name = std::move(name);
  c.kind = ColumnKind::Numeric;
  c.numeric = std::move(values);
  return c;
}

inline Column categorical_column(std::string name, const std::vector<std::string>& cells) {
  Column c;
  c.name = std::move(name);
  c.kind = ColumnKind::Categorical;
  std::unordered_map<std::string, int> lookup;
  for (const auto& cell : cells) {
    if (is_missing_token(cell)) {
      c.codes.push_back(-1);
      continue;
    }
    auto [it, inserted] = lookup.emplace(cell, static_cast<int>(c.levels.size()));
    if (inserted) c.levels.push_back(cell);
    c.codes.push_back(it->second);
  }
  return c;
}

}  // namespace robrad
