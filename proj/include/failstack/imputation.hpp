#pragma once

#include <failstack/extra_trees.hpp>
#include <failstack/linear.hpp>
#include <failstack/profile.hpp>
#include <failstack/table.hpp>

#include <json.hpp>

#include <array>
#include <map>
#include <variant>

namespace failstack {

// ---------------------------------------------------------------------------
// Missingness bands
// ---------------------------------------------------------------------------

struct BandThresholds {
  double t1 = 0.05;
  double t2 = 0.30;
  double t3 = 0.75;

  void check() const {
    if (!(0.0 < t1 && t1 < t2 && t2 < t3 && t3 < 1.0))
      throw Error("band thresholds must satisfy 0 < t1 < t2 < t3 < 1");
  }
  friend bool operator==(const BandThresholds&, const BandThresholds&) = default;
};

enum class Band { d1, d2, d3, dropped };

inline const char* band_name(Band b) {
  switch (b) {
    case Band::d1:
      return "D1";
    case Band::d2:
      return "D2";
    case Band::d3:
      return "D3";
    case Band::dropped:
      return "dropped";
  }
  return "?";
}

// f < t1 -> D1; t1 <= f < t2 -> D2; t2 <= f <= t3 -> D3; f > t3 -> dropped.
inline Band band_of(double missing_fraction, const BandThresholds& th) {
  if (missing_fraction < th.t1) return Band::d1;
  if (missing_fraction < th.t2) return Band::d2;
  if (missing_fraction <= th.t3) return Band::d3;
  return Band::dropped;
}

struct MissingnessPartition {
  std::vector<std::string> d1, d2, d3, dropped;
  BandThresholds thresholds;

  std::map<std::string, std::string> assignment() const {
    std::map<std::string, std::string> m;
    for (const auto& c : d1) m[c] = "D1";
    for (const auto& c : d2) m[c] = "D2";
    for (const auto& c : d3) m[c] = "D3";
    for (const auto& c : dropped) m[c] = "dropped";
    return m;
  }
};

inline MissingnessPartition partition_by_missingness(std::span<const ColumnProfile> profiles,
                                                     const BandThresholds& th = {}) {
  th.check();
  MissingnessPartition p;
  p.thresholds = th;
  for (const auto& prof : profiles) {
    switch (band_of(prof.missing_fraction, th)) {
      case Band::d1:
        p.d1.push_back(prof.name);
        break;
      case Band::d2:
        p.d2.push_back(prof.name);
        break;
      case Band::d3:
        p.d3.push_back(prof.name);
        break;
      case Band::dropped:
        p.dropped.push_back(prof.name);
        break;
    }
  }
  return p;
}

inline void to_json(nlohmann::ordered_json& j, const MissingnessPartition& p) {
  j = nlohmann::ordered_json{{"thresholds", {p.thresholds.t1, p.thresholds.t2, p.thresholds.t3}},
                             {"D1", p.d1},
                             {"D2", p.d2},
                             {"D3", p.d3},
                             {"dropped", p.dropped}};
}
inline void from_json(const nlohmann::ordered_json& j, MissingnessPartition& p) {
  const auto t = j.at("thresholds").get<std::array<double, 3>>();
  p.thresholds = {t[0], t[1], t[2]};
  p.d1 = j.at("D1").get<std::vector<std::string>>();
  p.d2 = j.at("D2").get<std::vector<std::string>>();
  p.d3 = j.at("D3").get<std::vector<std::string>>();
  p.dropped = j.at("dropped").get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------
// Iterative (chained-equations) imputer
// ---------------------------------------------------------------------------

enum class RegressorKind { extra_trees, ridge };

NLOHMANN_JSON_SERIALIZE_ENUM(RegressorKind, {{RegressorKind::extra_trees, "extra_trees"}, {RegressorKind::ridge, "ridge"}})

struct RegressorSpec {
  RegressorKind kind = RegressorKind::ridge;
  std::size_t n_trees = 50;  // extra_trees
  TreeConfig tree;           // extra_trees
  double alpha = 1.0;        // ridge

  static RegressorSpec ridge(double alpha = 1.0) {
    RegressorSpec s;
    s.kind = RegressorKind::ridge;
    s.alpha = alpha;
    return s;
  }
  static RegressorSpec extra_trees(std::size_t n_trees = 50, TreeConfig cfg = {}) {
    RegressorSpec s;
    s.kind = RegressorKind::extra_trees;
    s.n_trees = n_trees;
    s.tree = cfg;
    return s;
  }
};

struct ImputerConfig {
  RegressorSpec regressor;
  std::size_t max_iter = 10;
  // Convergence when every imputed cell moved by at most tol * (observed std of its column).
  double tol = 1e-3;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline void to_json(nlohmann::ordered_json& j, const RegressorSpec& s) {
  j = nlohmann::ordered_json{{"kind", s.kind}, {"n_trees", s.n_trees}, {"tree", s.tree}, {"alpha", s.alpha}};
}
inline void from_json(const nlohmann::ordered_json& j, RegressorSpec& s) {
  s = RegressorSpec{};
  s.kind = j.at("kind").get<RegressorKind>();
  if (j.contains("n_trees")) s.n_trees = j.at("n_trees").get<std::size_t>();
  if (j.contains("tree")) s.tree = j.at("tree").get<TreeConfig>();
  if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
}
inline void to_json(nlohmann::ordered_json& j, const ImputerConfig& c) {
  j = nlohmann::ordered_json{{"regressor", c.regressor}, {"max_iter", c.max_iter}, {"tol", c.tol}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::ordered_json& j, ImputerConfig& c) {
  c = ImputerConfig{};
  c.regressor = j.at("regressor").get<RegressorSpec>();
  c.max_iter = j.at("max_iter").get<std::size_t>();
  c.tol = j.at("tol").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

using Regressor = std::variant<RidgeModel, ExtraTreesRegressor>;

inline void to_json(nlohmann::ordered_json& j, const Regressor& r) {
  if (std::holds_alternative<RidgeModel>(r))
    j = {{"ridge", std::get<RidgeModel>(r)}};
  else
    j = {{"extra_trees", std::get<ExtraTreesRegressor>(r)}};
}
inline void from_json(const nlohmann::ordered_json& j, Regressor& r) {
  if (j.contains("ridge"))
    r = j.at("ridge").get<RidgeModel>();
  else
    r = j.at("extra_trees").get<ExtraTreesRegressor>();
}

struct ImputationModel {
  std::vector<std::string> columns;       // every column seen at fit time, in table order
  std::vector<double> fill_means;         // aligned with `columns`
  std::vector<double> scale;              // observed std per column (1 when zero)
  std::vector<std::string> column_order;  // imputed columns, ascending missing fraction
  std::vector<Regressor> regressors;      // final-sweep regressors, aligned with column_order
  ImputerConfig config;
  bool mean_only = false;
  std::size_t sweeps = 0;
  std::vector<double> sweep_change;  // max scaled change per fit sweep

  std::size_t position(const std::string& c) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == c) return j;
    throw Error("imputer: unknown column '" + c + "'");
  }
};

inline void to_json(nlohmann::ordered_json& j, const ImputationModel& m) {
  j = nlohmann::ordered_json{{"columns", m.columns},       {"fill_means", m.fill_means},
                             {"scale", m.scale},           {"column_order", m.column_order},
                             {"regressors", m.regressors}, {"config", m.config},
                             {"mean_only", m.mean_only},   {"sweeps", m.sweeps},
                             {"sweep_change", m.sweep_change}};
}
inline void from_json(const nlohmann::ordered_json& j, ImputationModel& m) {
  m.columns = j.at("columns").get<std::vector<std::string>>();
  m.fill_means = j.at("fill_means").get<std::vector<double>>();
  m.scale = j.at("scale").get<std::vector<double>>();
  m.column_order = j.at("column_order").get<std::vector<std::string>>();
  m.regressors = j.at("regressors").get<std::vector<Regressor>>();
  m.config = j.at("config").get<ImputerConfig>();
  m.mean_only = j.at("mean_only").get<bool>();
  m.sweeps = j.at("sweeps").get<std::size_t>();
  m.sweep_change = j.at("sweep_change").get<std::vector<double>>();
  if (!m.mean_only && m.regressors.size() != m.column_order.size())
    throw Error("imputer: regressor count does not match column order");
}

namespace imputation_detail {

inline Column gather(const Column& c, std::span<const std::size_t> rows) {
  Column out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = c[rows[k]];
  return out;
}

// Predictors for column `target`: every other column restricted to `rows`.
inline Columns predictors(const Columns& state, std::size_t target, std::span<const std::size_t> rows) {
  Columns out;
  out.reserve(state.size() - 1);
  for (std::size_t j = 0; j < state.size(); ++j)
    if (j != target) out.push_back(gather(state[j], rows));
  return out;
}

inline Regressor fit_regressor(const RegressorSpec& spec, const Columns& x, std::span<const double> y,
                               std::uint64_t seed, unsigned threads) {
  const ColumnView v = view_of(x);
  if (spec.kind == RegressorKind::ridge) return RidgeModel::fit(v, y, spec.alpha);
  return ExtraTreesRegressor::fit(v, y, spec.n_trees, spec.tree, seed, threads);
}

inline std::vector<double> predict_regressor(const Regressor& r, const Columns& x) {
  const ColumnView v = view_of(x);
  return std::visit([&](const auto& m) { return m.predict(v); }, r);
}

struct MissingRows {
  std::vector<std::size_t> observed, missing;
};

inline MissingRows split_rows(std::span<const std::uint8_t> mask) {
  MissingRows r;
  for (std::size_t i = 0; i < mask.size(); ++i) (mask[i] ? r.missing : r.observed).push_back(i);
  return r;
}

// One chained sweep over `order` (positions into `state`). When `fit_spec` is
// set, regressors are refit and stored into `fitted`; otherwise `fitted` is used.
// Returns the max scaled change over imputed cells.
inline double sweep(Columns& state, const std::vector<std::size_t>& order, const std::vector<MissingRows>& rows,
                    std::span<const double> scale, std::vector<Regressor>& fitted, const ImputerConfig* fit_cfg,
                    std::size_t sweep_index) {
  double max_change = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t j = order[k];
    const auto& r = rows[j];
    if (r.missing.empty()) continue;
    if (fit_cfg) {
      const Columns x = predictors(state, j, r.observed);
      const Column y = gather(state[j], r.observed);
      const auto seed = derive_seed(fit_cfg->seed, tag_of("imputer.column"), sweep_index * 1000003ULL + j);
      fitted[k] = fit_regressor(fit_cfg->regressor, x, y, seed, fit_cfg->threads);
    }
    const auto pred = predict_regressor(fitted[k], predictors(state, j, r.missing));
    for (std::size_t m = 0; m < r.missing.size(); ++m) {
      double& cell = state[j][r.missing[m]];
      max_change = std::max(max_change, std::abs(pred[m] - cell) / scale[j]);
      cell = pred[m];
    }
  }
  return max_change;
}

inline Table rebuild(const Table& t, const std::vector<std::string>& columns, const Columns& state) {
  Columns values(t.cols());
  std::vector<std::vector<std::uint8_t>> masks(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    values[j].assign(t.column(j).begin(), t.column(j).end());
    masks[j].assign(t.mask(j).begin(), t.mask(j).end());
  }
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto pos = t.index_of(columns[k]);
    values[pos] = state[k];
    masks[pos].assign(t.rows(), 0);
  }
  return Table(t.names(), t.row_index(), std::move(values), std::move(masks));
}

}  // namespace imputation_detail

struct FittedImputation {
  ImputationModel model;
  Table imputed;
};

// Mean fill for every column (used where a band has a single column and no
// predictors exist).
inline FittedImputation fit_mean_imputer(const Table& t) {
  FittedImputation f;
  auto& m = f.model;
  m.mean_only = true;
  m.columns = t.names();
  Columns state(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    auto prof = profile_column(t.name(j), t.column(j), t.mask(j));
    if (prof.count == 0) throw Error("imputer: column '" + t.name(j) + "' has no observed values");
    m.fill_means.push_back(*prof.mean);
    m.scale.push_back(1.0);
    if (prof.count < t.rows()) m.column_order.push_back(t.name(j));
    state[j].assign(t.column(j).begin(), t.column(j).end());
    for (std::size_t i = 0; i < t.rows(); ++i)
      if (t.is_missing(i, j)) state[j][i] = m.fill_means[j];
  }
  f.imputed = imputation_detail::rebuild(t, m.columns, state);
  return f;
}

// Chained-equations imputation: mean fill, then sweeps in ascending
// missingness order regressing each incomplete column on all others (rows
// where it was observed), until the scaled change falls to tol or max_iter.
inline FittedImputation fit_transform_iterative(const Table& t, const ImputerConfig& cfg) {
  using namespace imputation_detail;
  if (t.cols() < 2) throw Error("imputer: need at least 2 columns");
  if (cfg.max_iter == 0) throw Error("imputer: max_iter must be >= 1");
  FittedImputation f;
  auto& m = f.model;
  m.config = cfg;
  m.columns = t.names();
  const std::size_t p = t.cols();
  Columns state(p);
  std::vector<MissingRows> rows(p);
  std::vector<std::pair<double, std::size_t>> by_fraction;
  for (std::size_t j = 0; j < p; ++j) {
    auto prof = profile_column(t.name(j), t.column(j), t.mask(j));
    if (prof.count == 0) throw Error("imputer: column '" + t.name(j) + "' has no observed values");
    m.fill_means.push_back(*prof.mean);
    const double sd = std_of(gather(Column(t.column(j).begin(), t.column(j).end()), split_rows(t.mask(j)).observed));
    m.scale.push_back(sd > 0.0 ? sd : 1.0);
    rows[j] = split_rows(t.mask(j));
    state[j].assign(t.column(j).begin(), t.column(j).end());
    for (auto i : rows[j].missing) state[j][i] = m.fill_means[j];
    if (!rows[j].missing.empty()) by_fraction.emplace_back(prof.missing_fraction, j);
  }
  std::stable_sort(by_fraction.begin(), by_fraction.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> order;
  for (const auto& [frac, j] : by_fraction) {
    order.push_back(j);
    m.column_order.push_back(t.name(j));
  }
  m.regressors.resize(order.size());
  if (!order.empty()) {
    for (std::size_t s = 0; s < cfg.max_iter; ++s) {
      const double change = sweep(state, order, rows, m.scale, m.regressors, &cfg, s);
      m.sweep_change.push_back(change);
      ++m.sweeps;
      if (change <= cfg.tol) break;
    }
  }
  f.imputed = rebuild(t, m.columns, state);
  return f;
}

inline ImputationModel fit_iterative_imputer(const Table& t, const ImputerConfig& cfg) {
  return fit_transform_iterative(t, cfg).model;
}

// Fills the fitted columns of `t` (extra columns pass through untouched):
// mean fill with fit-time means, then chained sweeps with the stored
// regressors until the scaled change falls to tol or the fit's max_iter.
// Only cells missing in `t` are written.
inline Table apply_imputer(const ImputationModel& m, const Table& t) {
  using namespace imputation_detail;
  for (const auto& c : m.columns)
    if (!t.has_column(c)) throw Error("imputer: input lacks fitted column '" + c + "'");
  const std::size_t p = m.columns.size();
  Columns state(p);
  std::vector<MissingRows> rows(p);
  bool any = false;
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = t.column(m.columns[j]);
    const auto mask = t.mask(m.columns[j]);
    state[j].assign(col.begin(), col.end());
    rows[j] = split_rows(mask);
    for (auto i : rows[j].missing) state[j][i] = m.fill_means[j];
    any = any || !rows[j].missing.empty();
  }
  if (!any) return t;
  if (!m.mean_only && !m.column_order.empty()) {
    std::vector<std::size_t> order;
    for (const auto& c : m.column_order) order.push_back(m.position(c));
    std::vector<Regressor> regs = m.regressors;
    const std::size_t limit = std::max<std::size_t>(1, m.config.max_iter);
    for (std::size_t s = 0; s < limit; ++s)
      if (sweep(state, order, rows, m.scale, regs, nullptr, s) <= m.config.tol) break;
  }
  return rebuild(t, m.columns, state);
}

// ---------------------------------------------------------------------------
// Band-wise measures imputation
// ---------------------------------------------------------------------------

struct MeasuresImputer {
  MissingnessPartition partition;
  std::optional<ImputationModel> d2;
  std::optional<ImputationModel> d3;

  // Rows with a missing D1 cell are dropped; D2/D3 are filled by their fitted
  // imputers; dropped-band columns are removed. Columns come out as D1, D2, D3.
  Table transform(const Table& measures, std::size_t* rows_dropped = nullptr) const {
    const Table d1 = drop_rows_with_missing(measures.select_columns(partition.d1));
    if (rows_dropped) *rows_dropped = measures.rows() - d1.rows();
    std::vector<Table> parts{partition.d1.empty() ? Table::with_rows(d1.row_index()) : d1};
    if (d2) parts.push_back(apply_imputer(*d2, measures.select_columns(partition.d2)));
    if (d3) parts.push_back(apply_imputer(*d3, measures.select_columns(partition.d3)));
    return join_on_index(std::span<const Table>(parts));
  }
};

inline void to_json(nlohmann::ordered_json& j, const MeasuresImputer& m) {
  j = nlohmann::ordered_json{{"partition", m.partition},
                             {"d2", m.d2 ? nlohmann::ordered_json(*m.d2) : nlohmann::ordered_json()},
                             {"d3", m.d3 ? nlohmann::ordered_json(*m.d3) : nlohmann::ordered_json()}};
}
inline void from_json(const nlohmann::ordered_json& j, MeasuresImputer& m) {
  m.partition = j.at("partition").get<MissingnessPartition>();
  m.d2.reset();
  m.d3.reset();
  if (!j.at("d2").is_null()) m.d2 = j.at("d2").get<ImputationModel>();
  if (!j.at("d3").is_null()) m.d3 = j.at("d3").get<ImputationModel>();
}

struct MeasuresImputation {
  Table imputed;
  MeasuresImputer state;
  std::size_t rows_dropped = 0;
};

inline FittedImputation fit_band(const Table& t, const ImputerConfig& cfg) {
  if (t.cols() < 2) return fit_mean_imputer(t);
  return fit_transform_iterative(t, cfg);
}

// D1 (< t1 missing): drop incomplete rows. D2: chained imputation with the
// `d2_cfg` regressor (extremely randomized trees by default). D3: chained
// imputation with `d3_cfg` (ridge by default). Columns above t3 are removed.
// The three parts are rejoined on row labels.
inline MeasuresImputation impute_measures_pipeline(const Table& measures, const BandThresholds& th,
                                                   const ImputerConfig& d2_cfg, const ImputerConfig& d3_cfg) {
  MeasuresImputation out;
  const auto profiles = profile_columns(measures);
  out.state.partition = partition_by_missingness(profiles, th);
  const auto& part = out.state.partition;

  const Table d1 = drop_rows_with_missing(measures.select_columns(part.d1));
  out.rows_dropped = measures.rows() - d1.rows();
  std::vector<Table> parts{part.d1.empty() ? Table::with_rows(d1.row_index()) : d1};
  if (!part.d2.empty()) {
    auto f = fit_band(measures.select_columns(part.d2), d2_cfg);
    out.state.d2 = std::move(f.model);
    parts.push_back(std::move(f.imputed));
  }
  if (!part.d3.empty()) {
    auto f = fit_band(measures.select_columns(part.d3), d3_cfg);
    out.state.d3 = std::move(f.model);
    parts.push_back(std::move(f.imputed));
  }
  out.imputed = join_on_index(std::span<const Table>(parts));
  return out;
}

inline ImputerConfig default_d2_config(std::uint64_t seed = 0) {
  ImputerConfig c;
  c.regressor = RegressorSpec::extra_trees(50);
  c.seed = seed;
  return c;
}

inline ImputerConfig default_d3_config(std::uint64_t seed = 0) {
  ImputerConfig c;
  c.regressor = RegressorSpec::ridge(1.0);
  c.seed = seed;
  return c;
}

}  // namespace failstack
