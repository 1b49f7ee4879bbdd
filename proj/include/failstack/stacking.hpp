#pragma once

#include <failstack/classifier.hpp>
#include <failstack/table.hpp>

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <unordered_set>

namespace failstack {

struct StackingConfig {
  std::size_t n_base = 500;
  // Columns drawn per base (with replacement, then deduplicated) = ceil(col_fraction * p).
  // 1.0 means every base uses every column.
  double col_fraction = 0.5;
  ClassifierSpec meta = ClassifierSpec::boosting(100);
  TreeConfig base_tree;  // unlimited depth, min_samples_split 2
  // Feed base P(class 1) to the meta-classifier instead of hard labels.
  bool probability_outputs = false;
  std::size_t max_bootstrap_attempts = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void check() const {
    if (n_base < 1) throw Error("stacking: n_base must be >= 1");
    if (!(col_fraction > 0.0 && col_fraction <= 1.0)) throw Error("stacking: col_fraction must lie in (0, 1]");
    if (max_bootstrap_attempts < 1) throw Error("stacking: max_bootstrap_attempts must be >= 1");
  }

  std::string describe() const {
    return "stacked: " + std::to_string(n_base) + "×tree + " + meta.describe();
  }
};

inline void to_json(nlohmann::ordered_json& j, const StackingConfig& c) {
  j = nlohmann::ordered_json{{"n_base", c.n_base},
                             {"col_fraction", c.col_fraction},
                             {"meta", c.meta},
                             {"base_tree", c.base_tree},
                             {"probability_outputs", c.probability_outputs},
                             {"max_bootstrap_attempts", c.max_bootstrap_attempts},
                             {"seed", c.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, StackingConfig& c) {
  c = StackingConfig{};
  c.n_base = j.at("n_base").get<std::size_t>();
  c.col_fraction = j.at("col_fraction").get<double>();
  c.meta = j.at("meta").get<ClassifierSpec>();
  c.base_tree = j.at("base_tree").get<TreeConfig>();
  c.probability_outputs = j.at("probability_outputs").get<bool>();
  c.max_bootstrap_attempts = j.at("max_bootstrap_attempts").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

// A base tree and the column names it was trained on, in training order.
struct BaseEstimator {
  std::vector<std::string> columns;
  DecisionTreeClassifier tree;
};

struct StackedEnsembleModel {
  StackingConfig config;
  std::vector<BaseEstimator> bases;
  Classifier meta;
};

// Stratified 50/50 split into (H1, H2), each keeping input row order. Odd
// totals give H1 the extra row.
inline std::pair<LabeledDataset, LabeledDataset> split_halves(const LabeledDataset& d, std::uint64_t seed) {
  if (d.rows() < 2) throw Error("split_halves: need at least 2 rows");
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < d.rows(); ++i) members[static_cast<std::size_t>(d.target[i])].push_back(i);
  if (members[0].empty() || members[1].empty()) throw Error("split_halves: both classes must be present");
  Rng rng(derive_seed(seed, tag_of("stacking.halves")));
  std::vector<std::uint8_t> first(d.rows(), 0);
  const bool class0_odd = members[0].size() % 2 == 1;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& m = members[c];
    rng.shuffle(m);
    // Class 0 rounds up; class 1 rounds up only when class 0 did not, so
    // |H1| = ceil(n / 2).
    const bool round_up = c == 0 || !class0_odd;
    const std::size_t k = round_up ? (m.size() + 1) / 2 : m.size() / 2;
    for (std::size_t i = 0; i < k; ++i) first[m[i]] = 1;
  }
  std::vector<std::size_t> h1, h2;
  for (std::size_t i = 0; i < d.rows(); ++i) (first[i] ? h1 : h2).push_back(i);
  return {d.select_rows(h1), d.select_rows(h2)};
}

// Trains cfg.n_base trees on H1, each on a bootstrap of rows (redrawn until
// both classes appear) and a with-replacement draw of column names,
// deduplicated in first-draw order (all columns, in table order, when
// col_fraction is 1).
inline std::vector<BaseEstimator> train_base_estimators(const LabeledDataset& h1, const StackingConfig& cfg) {
  cfg.check();
  if (h1.rows() == 0) throw Error("train_base_estimators: empty training half");
  if (!h1.features.complete()) throw Error("train_base_estimators: features must be complete");
  const std::size_t n = h1.rows();
  const std::size_t p = h1.features.cols();
  if (p == 0) throw Error("train_base_estimators: no feature columns");
  const auto draws = static_cast<std::size_t>(std::ceil(cfg.col_fraction * static_cast<double>(p)));
  std::vector<BaseEstimator> bases(cfg.n_base);
  parallel_for(cfg.n_base, cfg.threads, [&](std::size_t b) {
    Rng rng(derive_seed(cfg.seed, tag_of("stacking.base"), b));
    std::vector<std::size_t> rows(n);
    bool both = false;
    for (std::size_t attempt = 0; attempt < cfg.max_bootstrap_attempts && !both; ++attempt) {
      std::array<bool, 2> seen{false, false};
      for (auto& r : rows) {
        r = rng.below(n);
        seen[static_cast<std::size_t>(h1.target[r])] = true;
      }
      both = seen[0] && seen[1];
    }
    if (!both)
      throw Error("train_base_estimators: bootstrap for base " + std::to_string(b) + " missed a class after " +
                  std::to_string(cfg.max_bootstrap_attempts) + " attempts");

    std::vector<std::string> columns;
    std::vector<std::size_t> col_pos;
    std::vector<std::uint8_t> taken(p, 0);
    const bool all_columns = cfg.col_fraction >= 1.0;
    for (std::size_t k = 0; k < (all_columns ? p : std::max<std::size_t>(1, draws)); ++k) {
      const std::size_t c = all_columns ? k : rng.below(p);
      if (taken[c]) continue;
      taken[c] = 1;
      col_pos.push_back(c);
      columns.push_back(h1.features.name(c));
    }

    Columns x(col_pos.size(), Column(n));
    for (std::size_t k = 0; k < col_pos.size(); ++k) {
      const auto src = h1.features.column(col_pos[k]);
      for (std::size_t i = 0; i < n; ++i) x[k][i] = src[rows[i]];
    }
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = h1.target[rows[i]];
    auto tree = DecisionTreeClassifier::fit(view_of(x), y, {}, cfg.base_tree,
                                            derive_seed(cfg.seed, tag_of("stacking.tree"), b), columns);
    bases[b] = BaseEstimator{std::move(columns), std::move(tree)};
  });
  return bases;
}

// Called once per (base, column) as each base's inputs are gathered.
using ColumnReadObserver = std::function<void(std::size_t base, const std::string& column)>;

// Column b holds base b's output on `t` restricted to its stored columns:
// the predicted label (or P(class 1) in probability mode).
inline Columns build_meta_features(std::span<const BaseEstimator> bases, const Table& t, bool probability_outputs = false,
                                   unsigned threads = 1, const ColumnReadObserver& observer = {}) {
  std::vector<ColumnView> inputs(bases.size());
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (const auto& c : bases[b].columns) {
      if (!t.has_column(c)) throw Error("meta features: input lacks column '" + c + "' used by base " + std::to_string(b));
      const auto j = t.index_of(c);
      if (t.missing_count(j) != 0) throw Error("meta features: column '" + c + "' has missing values");
      if (observer) observer(b, c);
      inputs[b].push_back(t.column(j));
    }
  }
  Columns out(bases.size(), Column(t.rows()));
  parallel_for(bases.size(), threads, [&](std::size_t b) {
    const auto& tree = bases[b].tree;
    for (std::size_t i = 0; i < t.rows(); ++i)
      out[b][i] = probability_outputs ? tree.proba_row(inputs[b], i) : static_cast<double>(tree.predict_row(inputs[b], i));
  });
  return out;
}

inline std::vector<std::string> meta_feature_names(std::size_t n_base) {
  std::vector<std::string> names(n_base);
  for (std::size_t b = 0; b < n_base; ++b) names[b] = "base_" + std::to_string(b);
  return names;
}

// Row labels of the two halves, for leakage audits.
struct HalfSplitAudit {
  std::vector<RowLabel> h1;
  std::vector<RowLabel> h2;

  bool disjoint() const {
    std::unordered_set<RowLabel> a(h1.begin(), h1.end());
    for (auto r : h2)
      if (a.count(r)) return false;
    return true;
  }
};

// H1 trains the bases; the meta-classifier is trained on the bases' outputs
// over H2, so it never sees a base-training row.
inline StackedEnsembleModel train_stacked(const LabeledDataset& train, const StackingConfig& cfg,
                                          HalfSplitAudit* audit = nullptr) {
  cfg.check();
  if (train.rows() < 4) throw Error("train_stacked: need at least 4 rows");
  const auto counts = class_counts(train.target);
  if (counts[0] < 2 || counts[1] < 2) throw Error("train_stacked: each class needs at least 2 rows");
  auto [h1, h2] = split_halves(train, cfg.seed);

  HalfSplitAudit local;
  local.h1 = h1.features.row_index();
  local.h2 = h2.features.row_index();
  if (!local.disjoint()) throw Error("train_stacked: halves overlap");
  if (local.h1.size() + local.h2.size() != train.rows()) throw Error("train_stacked: halves do not cover the input");
  if (audit) *audit = std::move(local);

  StackedEnsembleModel m;
  m.config = cfg;
  m.bases = train_base_estimators(h1, cfg);
  const Columns meta_x = build_meta_features(m.bases, h2.features, cfg.probability_outputs, cfg.threads);
  m.meta = Classifier::fit(cfg.meta, view_of(meta_x), h2.target, meta_feature_names(cfg.n_base),
                           derive_seed(cfg.seed, tag_of("stacking.meta")), cfg.threads);
  return m;
}

inline std::vector<double> predict_proba_stacked(const StackedEnsembleModel& m, const Table& t, unsigned threads = 1,
                                                 const ColumnReadObserver& observer = {}) {
  const Columns meta_x = build_meta_features(m.bases, t, m.config.probability_outputs, threads, observer);
  return m.meta.predict_proba(view_of(meta_x));
}

inline Labels predict_stacked(const StackedEnsembleModel& m, const Table& t, unsigned threads = 1,
                              const ColumnReadObserver& observer = {}) {
  const Columns meta_x = build_meta_features(m.bases, t, m.config.probability_outputs, threads, observer);
  return m.meta.predict(view_of(meta_x));
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

inline constexpr int kBundleVersion = 1;

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json bundle_header(const std::string& kind) {
  return {{"format", "failstack-bundle"}, {"version", kBundleVersion}, {"kind", kind}, {"created", utc_timestamp()}};
}

inline void check_bundle_header(const nlohmann::ordered_json& j, const std::string& kind) {
  if (!j.is_object() || !j.contains("header")) throw Error("corrupt bundle: no header");
  const auto& h = j.at("header");
  if (h.value("format", "") != "failstack-bundle") throw Error("corrupt bundle: unrecognized format");
  const int v = h.at("version").get<int>();
  if (v != kBundleVersion)
    throw Error("unsupported bundle version " + std::to_string(v) + " (this build reads version " +
                std::to_string(kBundleVersion) + ")");
  if (h.at("kind").get<std::string>() != kind)
    throw Error("bundle holds '" + h.at("kind").get<std::string>() + "', expected '" + kind + "'");
}

inline void to_json(nlohmann::ordered_json& j, const StackedEnsembleModel& m) {
  auto bases = nlohmann::ordered_json::array();
  for (const auto& b : m.bases) bases.push_back({{"columns", b.columns}, {"tree", b.tree.tree()}});
  j = nlohmann::ordered_json{{"config", m.config}, {"bases", bases}, {"meta", m.meta}};
}

inline void from_json(const nlohmann::ordered_json& j, StackedEnsembleModel& m) {
  m.config = j.at("config").get<StackingConfig>();
  m.bases.clear();
  for (const auto& b : j.at("bases")) {
    auto cols = b.at("columns").get<std::vector<std::string>>();
    auto tree = b.at("tree").get<Tree>();
    m.bases.push_back(BaseEstimator{cols, DecisionTreeClassifier(cols, std::move(tree))});
  }
  if (m.bases.size() != m.config.n_base) throw Error("corrupt bundle: base count does not match config");
  m.meta = j.at("meta").get<Classifier>();
}

inline nlohmann::ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt file '" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& j, int indent = -1) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << j.dump(indent) << '\n';
  if (!out) throw Error("write to '" + path + "' failed");
}

inline void save_model(const StackedEnsembleModel& m, const std::string& path) {
  auto header = bundle_header("stacked");
  header["config"] = m.config;
  nlohmann::ordered_json j{{"header", header}, {"model", m}};
  write_json_file(path, j);
}

inline StackedEnsembleModel load_model(const std::string& path) {
  const auto j = read_json_file(path);
  check_bundle_header(j, "stacked");
  try {
    return j.at("model").get<StackedEnsembleModel>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt bundle '" + path + "': " + e.what());
  }
}

}  // namespace failstack
