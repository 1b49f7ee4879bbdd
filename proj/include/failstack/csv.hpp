#pragma once

#include <failstack/table.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace failstack {

struct CsvOptions {
  // Matched case-insensitively after trimming surrounding whitespace.
  std::set<std::string> na_tokens{"na", "nan", ""};
  // Column holding row labels. Used when present in the header; otherwise rows
  // are labelled 0..n-1. Never treated as a feature.
  std::optional<std::string> id_column;
};

namespace csv_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("cannot format value");
  return std::string(buf, ptr);
}

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline RawCsv read_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  RawCsv raw;
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path + "' is empty; a header row is required");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  raw.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != raw.header.size())
      throw Error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(raw.header.size()) +
                  " cells, found " + std::to_string(cells.size()));
    raw.rows.push_back(std::move(cells));
  }
  return raw;
}

}  // namespace csv_detail

struct CsvContents {
  Table features;
  std::optional<Labels> target;
};

// Parses a CSV file. When `target_column` is given it is removed from the
// features and returned as 0/1 labels; a missing or non-binary target is an error.
inline CsvContents read_csv(const std::string& path, const CsvOptions& opts = {},
                            const std::optional<std::string>& target_column = std::nullopt) {
  using namespace csv_detail;
  RawCsv raw = read_raw(path);
  std::set<std::string> na;
  for (const auto& t : opts.na_tokens) na.insert(lower(trim(t)));

  {
    std::set<std::string> seen;
    for (const auto& h : raw.header)
      if (!seen.insert(h).second) throw Error("duplicate column name '" + h + "' in '" + path + "'");
  }
  std::optional<std::size_t> id_pos, target_pos;
  for (std::size_t j = 0; j < raw.header.size(); ++j) {
    if (opts.id_column && raw.header[j] == *opts.id_column) id_pos = j;
    if (target_column && raw.header[j] == *target_column) target_pos = j;
  }
  if (target_column && !target_pos) throw Error("target column '" + *target_column + "' not found in '" + path + "'");

  const std::size_t n = raw.rows.size();
  std::vector<std::string> names;
  std::vector<std::size_t> feature_pos;
  for (std::size_t j = 0; j < raw.header.size(); ++j) {
    if (j == id_pos || j == target_pos) continue;
    names.push_back(raw.header[j]);
    feature_pos.push_back(j);
  }

  auto where = [&](std::size_t i, std::size_t j) {
    return path + ": row " + std::to_string(i + 1) + ", column '" + raw.header[j] + "'";
  };

  std::vector<RowLabel> row_index(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (id_pos) {
      auto v = parse_double(raw.rows[i][*id_pos]);
      if (!v || *v != std::floor(*v)) throw Error(where(i, *id_pos) + ": row id is not an integer");
      row_index[i] = static_cast<RowLabel>(*v);
    } else {
      row_index[i] = static_cast<RowLabel>(i);
    }
  }

  Columns values(names.size(), Column(n, 0.0));
  std::vector<std::vector<std::uint8_t>> mask(names.size(), std::vector<std::uint8_t>(n, 0));
  for (std::size_t k = 0; k < feature_pos.size(); ++k) {
    const std::size_t j = feature_pos[k];
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& cell = raw.rows[i][j];
      if (na.count(lower(cell))) {
        mask[k][i] = 1;
        continue;
      }
      auto v = parse_double(cell);
      if (!v) throw Error(where(i, j) + ": cannot parse '" + cell + "' as a number");
      if (std::isnan(*v)) {
        mask[k][i] = 1;
        continue;
      }
      values[k][i] = *v;
    }
  }

  CsvContents out;
  out.features = Table(std::move(names), std::move(row_index), std::move(values), std::move(mask));
  if (target_pos) {
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& cell = raw.rows[i][*target_pos];
      if (na.count(lower(cell))) throw Error(where(i, *target_pos) + ": missing target value");
      auto v = parse_double(cell);
      if (!v || (*v != 0.0 && *v != 1.0)) throw Error(where(i, *target_pos) + ": target '" + cell + "' is not 0 or 1");
      y[i] = static_cast<int>(*v);
    }
    out.target = std::move(y);
  }
  return out;
}

inline LabeledDataset read_labeled_csv(const std::string& path, const std::string& target_column,
                                       const CsvOptions& opts = {}) {
  auto c = read_csv(path, opts, target_column);
  return {std::move(c.features), std::move(*c.target)};
}

// Writes a leading "id" column with the row labels, then the features, then
// the target (if given). Missing cells are written as "na"; values use the
// shortest representation that round-trips exactly.
inline void write_csv(const std::string& path, const Table& t, const Labels* target = nullptr,
                      const std::string& target_name = "target") {
  using csv_detail::format_double;
  if (target && target->size() != t.rows()) throw Error("target length does not match table rows");
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "id";
  for (const auto& n : t.names()) out << ',' << n;
  if (target) out << ',' << target_name;
  out << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out << t.row_index()[i];
    for (std::size_t j = 0; j < t.cols(); ++j) {
      out << ',';
      if (t.is_missing(i, j))
        out << "na";
      else
        out << format_double(t.value(i, j));
    }
    if (target) out << ',' << (*target)[i];
    out << '\n';
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

inline void write_csv(const std::string& path, const LabeledDataset& d, const std::string& target_name = "target") {
  write_csv(path, d.features, &d.target, target_name);
}

}  // namespace failstack
