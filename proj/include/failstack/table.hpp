#pragma once

#include <failstack/common.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace failstack {

using RowLabel = std::int64_t;

// Column-major numeric table with a missing-value mask and stable row labels.
// Missing cells hold NaN as a placeholder; readers consult the mask, never the
// placeholder. Immutable after construction apart from column appends.
class Table {
 public:
  Table() = default;

  Table(std::vector<std::string> names, std::vector<RowLabel> row_index, Columns values,
        std::vector<std::vector<std::uint8_t>> missing)
      : names_(std::move(names)),
        row_index_(std::move(row_index)),
        values_(std::move(values)),
        missing_(std::move(missing)) {
    validate();
  }

  // Complete table (no missing cells) with row labels 0..n-1.
  static Table from_columns(std::vector<std::string> names, Columns values) {
    const std::size_t n = values.empty() ? 0 : values.front().size();
    std::vector<RowLabel> idx(n);
    std::iota(idx.begin(), idx.end(), RowLabel{0});
    std::vector<std::vector<std::uint8_t>> mask(values.size(), std::vector<std::uint8_t>(n, 0));
    return Table(std::move(names), std::move(idx), std::move(values), std::move(mask));
  }

  // Empty table with the given row labels and no columns.
  static Table with_rows(std::vector<RowLabel> row_index) {
    return Table({}, std::move(row_index), {}, {});
  }

  std::size_t rows() const { return row_index_.size(); }
  std::size_t cols() const { return names_.size(); }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<RowLabel>& row_index() const { return row_index_; }
  const std::string& name(std::size_t j) const { return names_.at(j); }

  std::span<const double> column(std::size_t j) const { return values_.at(j); }
  std::span<const double> column(const std::string& name) const { return values_[index_of(name)]; }
  std::span<const std::uint8_t> mask(std::size_t j) const { return missing_.at(j); }
  std::span<const std::uint8_t> mask(const std::string& name) const { return missing_[index_of(name)]; }

  double value(std::size_t i, std::size_t j) const { return values_[j][i]; }
  bool is_missing(std::size_t i, std::size_t j) const { return missing_[j][i] != 0; }

  bool has_column(const std::string& name) const { return lookup_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw Error("unknown column '" + name + "'");
    return it->second;
  }

  std::optional<std::size_t> position_of(RowLabel label) const {
    auto it = row_lookup_.find(label);
    if (it == row_lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t missing_count(std::size_t j) const {
    std::size_t c = 0;
    for (auto m : missing_[j]) c += m;
    return c;
  }

  std::size_t total_missing() const {
    std::size_t c = 0;
    for (std::size_t j = 0; j < cols(); ++j) c += missing_count(j);
    return c;
  }

  bool complete() const { return total_missing() == 0; }

  void add_column(std::string name, Column values, std::vector<std::uint8_t> missing = {}) {
    if (missing.empty()) missing.assign(values.size(), 0);
    if (values.size() != rows() || missing.size() != rows())
      throw Error("column '" + name + "' has " + std::to_string(values.size()) + " rows, table has " +
                  std::to_string(rows()));
    if (has_column(name)) throw Error("duplicate column name '" + name + "'");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (missing[i]) values[i] = std::numeric_limits<double>::quiet_NaN();
    lookup_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(values));
    missing_.push_back(std::move(missing));
  }

  // Rows at the given positions (not labels), in that order.
  Table select_rows(std::span<const std::size_t> positions) const {
    std::vector<RowLabel> idx;
    idx.reserve(positions.size());
    for (auto p : positions) idx.push_back(row_index_.at(p));
    Columns vals(cols());
    std::vector<std::vector<std::uint8_t>> mask(cols());
    for (std::size_t j = 0; j < cols(); ++j) {
      vals[j].reserve(positions.size());
      mask[j].reserve(positions.size());
      for (auto p : positions) {
        vals[j].push_back(values_[j][p]);
        mask[j].push_back(missing_[j][p]);
      }
    }
    return Table(names_, std::move(idx), std::move(vals), std::move(mask));
  }

  Table select_columns(std::span<const std::string> names) const {
    Columns vals;
    std::vector<std::vector<std::uint8_t>> mask;
    for (const auto& n : names) {
      const auto j = index_of(n);
      vals.push_back(values_[j]);
      mask.push_back(missing_[j]);
    }
    return Table(std::vector<std::string>(names.begin(), names.end()), row_index_, std::move(vals),
                 std::move(mask));
  }

  Table drop_columns(std::span<const std::string> names) const {
    std::unordered_set<std::string> drop(names.begin(), names.end());
    std::vector<std::string> keep;
    for (const auto& n : names_)
      if (!drop.count(n)) keep.push_back(n);
    return select_columns(keep);
  }

  // Same structure with selected cells overwritten; mask cleared where filled.
  Table with_column_values(std::size_t j, Column values, std::vector<std::uint8_t> missing) const {
    Table t = *this;
    t.values_.at(j) = std::move(values);
    t.missing_.at(j) = std::move(missing);
    t.validate();
    return t;
  }

  // Dense column-major copy. Throws if any cell is missing.
  Columns dense() const {
    if (!complete()) throw Error("table has missing values where a complete table is required");
    return values_;
  }

  ColumnView view() const {
    if (!complete()) throw Error("table has missing values where a complete table is required");
    return view_of(values_);
  }

  ColumnView view(std::span<const std::string> names) const {
    ColumnView v;
    v.reserve(names.size());
    for (const auto& n : names) {
      const auto j = index_of(n);
      if (missing_count(j) != 0) throw Error("column '" + n + "' has missing values");
      v.emplace_back(values_[j]);
    }
    return v;
  }

  friend bool operator==(const Table& a, const Table& b) {
    if (a.names_ != b.names_ || a.row_index_ != b.row_index_ || a.missing_ != b.missing_) return false;
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t i = 0; i < a.rows(); ++i)
        if (!a.missing_[j][i] && a.values_[j][i] != b.values_[j][i]) return false;
    return true;
  }

 private:
  void validate() {
    if (values_.size() != names_.size() || missing_.size() != names_.size())
      throw Error("table column count mismatch");
    lookup_.clear();
    for (std::size_t j = 0; j < names_.size(); ++j) {
      if (!lookup_.emplace(names_[j], j).second) throw Error("duplicate column name '" + names_[j] + "'");
      if (values_[j].size() != row_index_.size() || missing_[j].size() != row_index_.size())
        throw Error("column '" + names_[j] + "' length does not match row count");
      for (std::size_t i = 0; i < row_index_.size(); ++i)
        if (missing_[j][i]) values_[j][i] = std::numeric_limits<double>::quiet_NaN();
    }
    row_lookup_.clear();
    row_lookup_.reserve(row_index_.size());
    for (std::size_t i = 0; i < row_index_.size(); ++i)
      if (!row_lookup_.emplace(row_index_[i], i).second)
        throw Error("duplicate row label " + std::to_string(row_index_[i]));
  }

  std::vector<std::string> names_;
  std::vector<RowLabel> row_index_;
  Columns values_;
  std::vector<std::vector<std::uint8_t>> missing_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::unordered_map<RowLabel, std::size_t> row_lookup_;
};

using Labels = std::vector<int>;

struct LabeledDataset {
  Table features;
  Labels target;

  LabeledDataset() = default;
  LabeledDataset(Table f, Labels y) : features(std::move(f)), target(std::move(y)) {
    if (target.size() != features.rows()) throw Error("target length does not match feature rows");
    for (int v : target)
      if (v != 0 && v != 1) throw Error("target labels must be 0 or 1");
  }

  std::size_t rows() const { return target.size(); }

  LabeledDataset select_rows(std::span<const std::size_t> positions) const {
    Labels y;
    y.reserve(positions.size());
    for (auto p : positions) y.push_back(target.at(p));
    return {features.select_rows(positions), std::move(y)};
  }

  // Rows whose labels appear in `table`, in the order of `table`, with its features.
  LabeledDataset aligned_to(Table table) const {
    Labels y;
    y.reserve(table.rows());
    for (auto label : table.row_index()) {
      auto pos = features.position_of(label);
      if (!pos) throw Error("row label " + std::to_string(label) + " has no target");
      y.push_back(target[*pos]);
    }
    return {std::move(table), std::move(y)};
  }
};

inline std::array<std::size_t, 2> class_counts(std::span<const int> y) {
  std::array<std::size_t, 2> c{0, 0};
  for (int v : y) ++c.at(static_cast<std::size_t>(v));
  return c;
}

// Rows present in every table, ordered as in the first; columns concatenated in
// argument order.
inline Table join_on_index(std::span<const Table> tables) {
  if (tables.empty()) return {};
  std::unordered_set<std::string> seen;
  for (const auto& t : tables)
    for (const auto& n : t.names())
      if (!seen.insert(n).second) throw Error("duplicate column name '" + n + "' across joined tables");

  std::vector<RowLabel> rows;
  std::vector<std::vector<std::size_t>> positions(tables.size());
  for (std::size_t i = 0; i < tables[0].rows(); ++i) {
    const RowLabel label = tables[0].row_index()[i];
    std::vector<std::size_t> pos{i};
    bool everywhere = true;
    for (std::size_t k = 1; k < tables.size() && everywhere; ++k) {
      auto p = tables[k].position_of(label);
      if (p)
        pos.push_back(*p);
      else
        everywhere = false;
    }
    if (!everywhere) continue;
    rows.push_back(label);
    for (std::size_t k = 0; k < tables.size(); ++k) positions[k].push_back(pos[k]);
  }

  std::vector<std::string> names;
  Columns vals;
  std::vector<std::vector<std::uint8_t>> mask;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const Table& t = tables[k];
    for (std::size_t j = 0; j < t.cols(); ++j) {
      names.push_back(t.name(j));
      Column c;
      std::vector<std::uint8_t> m;
      c.reserve(rows.size());
      m.reserve(rows.size());
      for (auto p : positions[k]) {
        c.push_back(t.value(p, j));
        m.push_back(t.is_missing(p, j) ? 1 : 0);
      }
      vals.push_back(std::move(c));
      mask.push_back(std::move(m));
    }
  }
  return Table(std::move(names), std::move(rows), std::move(vals), std::move(mask));
}

inline Table join_on_index(std::initializer_list<Table> tables) {
  std::vector<Table> v(tables);
  return join_on_index(std::span<const Table>(v));
}

inline std::vector<std::size_t> complete_row_positions(const Table& t) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < t.cols() && ok; ++j) ok = !t.is_missing(i, j);
    if (ok) keep.push_back(i);
  }
  return keep;
}

inline Table drop_rows_with_missing(const Table& t) { return t.select_rows(complete_row_positions(t)); }

// Stratified split into (train, test). round(n * test_fraction) rows (clamped to
// [1, n-1]) go to test, shared between classes by largest remainder with seeded
// tie-breaking. A class with at least 2 rows keeps at least one on each side.
// Both outputs keep input order.
inline std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& d, double test_fraction,
                                                                   std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must lie in (0, 1)");
  if (d.rows() < 2) throw Error("need at least 2 rows to split");
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < d.rows(); ++i) members[static_cast<std::size_t>(d.target[i])].push_back(i);
  Rng rng(derive_seed(seed, tag_of("stratified_split")));

  const auto n = static_cast<double>(d.rows());
  const auto total = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(n * test_fraction)), 1, d.rows() - 1);
  std::array<std::size_t, 2> k{};
  std::array<double, 2> rem{};
  std::size_t given = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double quota = static_cast<double>(members[c].size()) * static_cast<double>(total) / n;
    k[c] = static_cast<std::size_t>(std::floor(quota));
    rem[c] = quota - static_cast<double>(k[c]);
    given += k[c];
  }
  const double coin = rng.uniform();
  while (given < total) {
    std::size_t c = rem[0] > rem[1] ? 0 : rem[1] > rem[0] ? 1 : (coin < 0.5 ? 0 : 1);
    if (k[c] == members[c].size()) c = 1 - c;
    ++k[c];
    rem[c] = -1.0;
    ++given;
  }
  for (std::size_t c = 0; c < 2; ++c)
    if (members[c].size() >= 2) k[c] = std::clamp<std::size_t>(k[c], 1, members[c].size() - 1);

  std::vector<std::uint8_t> in_test(d.rows(), 0);
  for (std::size_t c = 0; c < 2; ++c) {
    rng.shuffle(members[c]);
    for (std::size_t i = 0; i < k[c]; ++i) in_test[members[c][i]] = 1;
  }
  std::vector<std::size_t> train_pos, test_pos;
  for (std::size_t i = 0; i < d.rows(); ++i) (in_test[i] ? test_pos : train_pos).push_back(i);
  return {d.select_rows(train_pos), d.select_rows(test_pos)};
}

// Stratified k-fold assignment: fold id per row, classes dealt round-robin after
// a seeded shuffle.
inline std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error("need at least 2 folds");
  const auto counts = class_counts(y);
  for (std::size_t c = 0; c < 2; ++c)
    if (counts[c] < folds)
      throw Error("class " + std::to_string(c) + " has " + std::to_string(counts[c]) + " rows, fewer than " +
                  std::to_string(folds) + " folds");
  std::vector<std::size_t> fold(y.size(), 0);
  Rng rng(derive_seed(seed, tag_of("stratified_folds")));
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> m;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) m.push_back(i);
    rng.shuffle(m);
    for (std::size_t k = 0; k < m.size(); ++k) fold[m[k]] = k % folds;
  }
  return fold;
}

}  // namespace failstack
