#pragma once

#include <failstack/classifier.hpp>
#include <failstack/csv.hpp>
#include <failstack/imputation.hpp>
#include <failstack/metrics.hpp>
#include <failstack/selection.hpp>
#include <failstack/stacking.hpp>
#include <failstack/transforms.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <map>
#include <set>

namespace failstack {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DataConfig {
  std::string train;  // labeled CSV
  std::string test;   // optional labeled CSV; a stratified split of `train` otherwise
  std::vector<std::string> na_tokens{"na", "nan", ""};
  std::string target_column = "target";
  std::string id_column = "id";  // used only when present in the header
  std::string histogram_marker = "_histogram_bin";
  double test_fraction = 0.2;

  CsvOptions csv_options() const {
    CsvOptions o;
    o.na_tokens = {na_tokens.begin(), na_tokens.end()};
    if (!id_column.empty()) o.id_column = id_column;
    return o;
  }
};

struct ImputationSettings {
  BandThresholds bands;
  ImputerConfig d2 = default_d2_config();
  ImputerConfig d3 = default_d3_config();
};

struct SelectionSettings {
  bool enabled = false;
  ClassifierSpec estimator = ClassifierSpec::boosting(100, 3);
  std::size_t folds = 5;
  std::size_t step = 1;
  std::optional<std::size_t> keep;  // plain RFE to this many features instead of RFECV
  // Select on imputed measures instead of selecting first and imputing the survivors.
  bool after_imputation = false;
};

enum class ModelType { stacked, single };

NLOHMANN_JSON_SERIALIZE_ENUM(ModelType, {{ModelType::stacked, "stacked"}, {ModelType::single, "single"}})

struct ModelSettings {
  ModelType type = ModelType::stacked;
  StackingConfig stacking;
  ClassifierSpec single = ClassifierSpec::boosting(100);
};

struct PipelineConfig {
  DataConfig data;
  ImputationSettings imputation;
  std::vector<EngineeredFeatureSpec> engineered;
  SelectionSettings selection;
  ModelSettings model;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  // Model description used in reports, e.g. "stacked: 500×tree + gbt(100)".
  std::string model_id() const {
    return model.type == ModelType::stacked ? model.stacking.describe() : model.single.describe();
  }
};

inline void to_json(nlohmann::ordered_json& j, const DataConfig& c) {
  j = nlohmann::ordered_json{{"train", c.train},
                             {"test", c.test},
                             {"na_tokens", c.na_tokens},
                             {"target_column", c.target_column},
                             {"id_column", c.id_column},
                             {"histogram_marker", c.histogram_marker},
                             {"test_fraction", c.test_fraction}};
}
inline void from_json(const nlohmann::ordered_json& j, DataConfig& c) {
  c.train = j.at("train").get<std::string>();
  c.test = j.at("test").get<std::string>();
  c.na_tokens = j.at("na_tokens").get<std::vector<std::string>>();
  c.target_column = j.at("target_column").get<std::string>();
  c.id_column = j.at("id_column").get<std::string>();
  c.histogram_marker = j.at("histogram_marker").get<std::string>();
  c.test_fraction = j.at("test_fraction").get<double>();
}

inline void to_json(nlohmann::ordered_json& j, const ImputationSettings& c) {
  j = nlohmann::ordered_json{{"bands", {{"t1", c.bands.t1}, {"t2", c.bands.t2}, {"t3", c.bands.t3}}},
                             {"d2", c.d2},
                             {"d3", c.d3}};
}
inline void from_json(const nlohmann::ordered_json& j, ImputationSettings& c) {
  const auto& b = j.at("bands");
  c.bands = {b.at("t1").get<double>(), b.at("t2").get<double>(), b.at("t3").get<double>()};
  c.d2 = j.at("d2").get<ImputerConfig>();
  c.d3 = j.at("d3").get<ImputerConfig>();
}

inline void to_json(nlohmann::ordered_json& j, const SelectionSettings& c) {
  j = nlohmann::ordered_json{{"enabled", c.enabled},
                             {"estimator", c.estimator},
                             {"folds", c.folds},
                             {"step", c.step},
                             {"keep", c.keep ? nlohmann::ordered_json(*c.keep) : nlohmann::ordered_json()},
                             {"after_imputation", c.after_imputation}};
}
inline void from_json(const nlohmann::ordered_json& j, SelectionSettings& c) {
  c.enabled = j.at("enabled").get<bool>();
  c.estimator = j.at("estimator").get<ClassifierSpec>();
  c.folds = j.at("folds").get<std::size_t>();
  c.step = j.at("step").get<std::size_t>();
  c.keep.reset();
  if (!j.at("keep").is_null()) c.keep = j.at("keep").get<std::size_t>();
  c.after_imputation = j.at("after_imputation").get<bool>();
}

inline void to_json(nlohmann::ordered_json& j, const ModelSettings& c) {
  j = nlohmann::ordered_json{{"type", c.type}, {"stacking", c.stacking}, {"single", c.single}};
}
inline void from_json(const nlohmann::ordered_json& j, ModelSettings& c) {
  c.type = j.at("type").get<ModelType>();
  c.stacking = j.at("stacking").get<StackingConfig>();
  c.single = j.at("single").get<ClassifierSpec>();
}

inline void to_json(nlohmann::ordered_json& j, const PipelineConfig& c) {
  j = nlohmann::ordered_json{{"data", c.data},         {"imputation", c.imputation}, {"engineered", c.engineered},
                             {"selection", c.selection}, {"model", c.model},           {"seed", c.seed},
                             {"out_dir", c.out_dir}};
}
inline void from_json(const nlohmann::ordered_json& j, PipelineConfig& c) {
  c.data = j.at("data").get<DataConfig>();
  c.imputation = j.at("imputation").get<ImputationSettings>();
  c.engineered = j.at("engineered").get<std::vector<EngineeredFeatureSpec>>();
  c.selection = j.at("selection").get<SelectionSettings>();
  c.model = j.at("model").get<ModelSettings>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.out_dir = j.at("out_dir").get<std::string>();
}

namespace config_detail {

// Overlays `patch` onto `base`, rejecting any key `base` does not have.
// Objects merge recursively; everything else (arrays included) is replaced.
inline void overlay(nlohmann::ordered_json& base, const nlohmann::ordered_json& patch, const std::string& path) {
  if (!patch.is_object()) throw Error("config: '" + path + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string where = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw Error("config: unknown key '" + where + "'");
    auto& slot = base[k];
    if (slot.is_object() && v.is_object())
      overlay(slot, v, where);
    else
      slot = v;
  }
}

}  // namespace config_detail

inline void validate(const PipelineConfig& c) {
  c.imputation.bands.check();
  if (!(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0))
    throw Error("config: data.test_fraction must lie in (0, 1)");
  if (c.data.target_column.empty()) throw Error("config: data.target_column must be set");
  if (c.selection.folds < 2) throw Error("config: selection.folds must be >= 2");
  if (c.selection.step < 1) throw Error("config: selection.step must be >= 1");
  if (c.selection.keep && *c.selection.keep < 1) throw Error("config: selection.keep must be >= 1");
  c.model.stacking.check();
  for (const auto& e : c.engineered) e.check_arity();
  for (const auto* ic : {&c.imputation.d2, &c.imputation.d3})
    if (ic->max_iter < 1 || !(ic->tol >= 0.0)) throw Error("config: imputer max_iter must be >= 1 and tol >= 0");
}

// Parses a (possibly partial) config object over the defaults. Every key is
// checked before any work starts.
inline PipelineConfig parse_config(const nlohmann::ordered_json& patch) {
  nlohmann::ordered_json base = PipelineConfig{};
  config_detail::overlay(base, patch, "");
  PipelineConfig c;
  try {
    c = base.get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline PipelineConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

// Module seeds are derived from the single top-level seed.
inline PipelineConfig with_derived_seeds(PipelineConfig c) {
  c.imputation.d2.seed = derive_seed(c.seed, tag_of("imputation.d2"));
  c.imputation.d3.seed = derive_seed(c.seed, tag_of("imputation.d3"));
  c.model.stacking.seed = derive_seed(c.seed, tag_of("stacking"));
  return c;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

// What to do with evaluation rows that fit-time rules would drop (a missing
// cell in a D1 or histogram column).
enum class RowPolicy {
  drop,  // mirror fitting: remove them (evaluation)
  fill   // fill with fit-time column means so every row is scored (prediction)
};

struct Preprocessor {
  std::vector<std::string> measure_inputs;  // raw measure columns kept before engineering
  std::vector<std::string> histogram_columns;
  std::vector<std::string> dropped_columns;  // raw measures beyond the drop threshold
  std::vector<EngineeredFeatureSpec> engineered;
  std::vector<std::string> measures_selected;  // measures + engineered surviving selection
  bool select_after_impute = false;            // imputer sees every prepared measure
  MeasuresImputer imputer;
  std::map<std::string, double> fallback_means;  // D1 and histogram columns, raw scale
  Standardizer standardizer;

  const std::vector<std::string>& features() const { return standardizer.columns; }

  Table transform(const Table& t, RowPolicy policy, std::size_t* rows_dropped = nullptr) const {
    for (const auto* cols : {&measure_inputs, &histogram_columns})
      for (const auto& c : *cols)
        if (!t.has_column(c)) throw Error("input lacks column '" + c + "' seen during fitting");
    Table measures = apply_engineered(t.select_columns(measure_inputs), engineered);
    if (!select_after_impute) measures = measures.select_columns(measures_selected);
    Table hist = t.select_columns(histogram_columns);
    if (policy == RowPolicy::fill) {
      measures = fill_from(measures, imputer.partition.d1);
      hist = fill_from(hist, histogram_columns);
    }
    Table m = imputer.transform(measures);
    if (select_after_impute) m = m.select_columns(measures_selected);
    const Table h = drop_rows_with_missing(hist);
    const Table joined = join_on_index({m, h});
    if (rows_dropped) *rows_dropped = t.rows() - joined.rows();
    return standardizer.transform(joined);
  }

 private:
  Table fill_from(const Table& t, const std::vector<std::string>& cols) const {
    Table out = t;
    for (const auto& c : cols) {
      const auto j = out.index_of(c);
      if (out.missing_count(j) == 0) continue;
      Column v(out.column(j).begin(), out.column(j).end());
      const auto mask = out.mask(j);
      for (std::size_t i = 0; i < v.size(); ++i)
        if (mask[i]) v[i] = fallback_means.at(c);
      std::vector<std::uint8_t> none(v.size(), 0);
      out = out.with_column_values(j, std::move(v), std::move(none));
    }
    return out;
  }
};

inline void to_json(nlohmann::ordered_json& j, const Preprocessor& p) {
  j = nlohmann::ordered_json{{"measure_inputs", p.measure_inputs},
                             {"histogram_columns", p.histogram_columns},
                             {"dropped_columns", p.dropped_columns},
                             {"engineered", p.engineered},
                             {"measures_selected", p.measures_selected},
                             {"select_after_impute", p.select_after_impute},
                             {"imputer", p.imputer},
                             {"fallback_means", p.fallback_means},
                             {"standardizer", p.standardizer}};
}
inline void from_json(const nlohmann::ordered_json& j, Preprocessor& p) {
  p.measure_inputs = j.at("measure_inputs").get<std::vector<std::string>>();
  p.histogram_columns = j.at("histogram_columns").get<std::vector<std::string>>();
  p.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
  p.engineered = j.at("engineered").get<std::vector<EngineeredFeatureSpec>>();
  p.measures_selected = j.at("measures_selected").get<std::vector<std::string>>();
  p.select_after_impute = j.at("select_after_impute").get<bool>();
  p.imputer = j.at("imputer").get<MeasuresImputer>();
  p.fallback_means = j.at("fallback_means").get<std::map<std::string, double>>();
  p.standardizer = j.at("standardizer").get<Standardizer>();
}

struct PreprocessResult {
  Preprocessor preprocessor;
  LabeledDataset data;  // transformed training rows
  std::optional<SelectionResult> selection;
  std::size_t rows_dropped = 0;
};

inline std::pair<std::vector<std::string>, std::vector<std::string>> split_measures_histogram(const Table& t,
                                                                                              const std::string& marker) {
  std::vector<std::string> measures, hist;
  for (const auto& n : t.names()) (!marker.empty() && n.find(marker) != std::string::npos ? hist : measures).push_back(n);
  return {measures, hist};
}

inline double observed_mean(const Table& t, std::size_t j) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.rows(); ++i)
    if (!t.is_missing(i, j)) {
      s += t.value(i, j);
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

// Raw measures split off the histogram block, with over-threshold columns
// dropped and engineered features appended.
struct PreparedMeasures {
  std::vector<std::string> measure_inputs;
  std::vector<std::string> dropped_columns;
  std::vector<std::string> histogram_columns;
  std::vector<EngineeredFeatureSpec> engineered;  // fitted
  Table measures;                                 // kept measures + engineered columns
};

inline PreparedMeasures prepare_measures(const LabeledDataset& train, const PipelineConfig& cfg) {
  PreparedMeasures out;
  auto [measure_cols, hist_cols] = split_measures_histogram(train.features, cfg.data.histogram_marker);
  out.histogram_columns = hist_cols;
  const auto profiles = profile_columns(train.features.select_columns(measure_cols));
  for (const auto& pr : profiles)
    (band_of(pr.missing_fraction, cfg.imputation.bands) == Band::dropped ? out.dropped_columns : out.measure_inputs)
        .push_back(pr.name);
  const Table kept = train.features.select_columns(out.measure_inputs);
  out.engineered = fit_engineered(cfg.engineered, kept, train.target);
  out.measures = apply_engineered(kept, out.engineered);
  return out;
}

// RFECV (or RFE when `keep` is set) over the prepared measure columns.
inline SelectionResult select_measures(const LabeledDataset& train, const Table& measures, const PipelineConfig& cfg,
                                       unsigned threads = 1) {
  const LabeledDataset d{measures, train.target};
  const std::uint64_t seed = derive_seed(cfg.seed, tag_of("selection"));
  const auto& s = cfg.selection;
  return s.keep ? rfe(d, s.estimator, *s.keep, s.step, seed, threads) : rfecv(d, s.estimator, s.folds, s.step, seed, threads);
}

// Fit order: drop measures beyond the drop threshold, engineer features,
// optional selection (on mean-filled data), band imputation of the measures,
// row drop on histograms, join on row labels, standardize.
inline PreprocessResult fit_preprocessor(const LabeledDataset& train, const PipelineConfig& cfg_in, unsigned threads = 1) {
  const PipelineConfig cfg = with_derived_seeds(cfg_in);
  PreprocessResult out;
  Preprocessor& p = out.preprocessor;
  auto prepared = prepare_measures(train, cfg);
  p.measure_inputs = prepared.measure_inputs;
  p.dropped_columns = prepared.dropped_columns;
  p.histogram_columns = prepared.histogram_columns;
  p.engineered = prepared.engineered;
  Table measures = std::move(prepared.measures);

  p.select_after_impute = cfg.selection.enabled && cfg.selection.after_imputation;
  p.measures_selected = measures.names();
  if (cfg.selection.enabled && !p.select_after_impute) {
    out.selection = select_measures(train, measures, cfg, threads);
    p.measures_selected = out.selection->selected;
    measures = measures.select_columns(p.measures_selected);
  }

  ImputerConfig d2 = cfg.imputation.d2, d3 = cfg.imputation.d3;
  d2.threads = d3.threads = threads;
  auto imputed = impute_measures_pipeline(measures, cfg.imputation.bands, d2, d3);
  p.imputer = std::move(imputed.state);
  if (p.select_after_impute) {
    out.selection = select_measures(train.aligned_to(imputed.imputed), imputed.imputed, cfg, threads);
    p.measures_selected = out.selection->selected;
    imputed.imputed = imputed.imputed.select_columns(p.measures_selected);
  }

  const Table hist = train.features.select_columns(p.histogram_columns);
  for (const auto& c : p.imputer.partition.d1) p.fallback_means[c] = observed_mean(measures, measures.index_of(c));
  for (std::size_t j = 0; j < hist.cols(); ++j) p.fallback_means[hist.name(j)] = observed_mean(hist, j);

  const Table joined = join_on_index({imputed.imputed, drop_rows_with_missing(hist)});
  if (joined.rows() == 0) throw Error("preprocessing removed every training row");
  out.rows_dropped = train.rows() - joined.rows();
  p.standardizer = Standardizer::fit(joined);
  out.data = train.aligned_to(p.standardizer.transform(joined));
  return out;
}

// ---------------------------------------------------------------------------
// Trained model (stacked ensemble or a single classifier)
// ---------------------------------------------------------------------------

struct TrainedModel {
  ModelType type = ModelType::stacked;
  std::optional<StackedEnsembleModel> stacked;
  std::optional<Classifier> single;

  static TrainedModel fit(const LabeledDataset& d, const PipelineConfig& cfg_in, unsigned threads = 1,
                          HalfSplitAudit* audit = nullptr) {
    const PipelineConfig cfg = with_derived_seeds(cfg_in);
    TrainedModel m;
    m.type = cfg.model.type;
    if (m.type == ModelType::stacked) {
      StackingConfig sc = cfg.model.stacking;
      sc.threads = threads;
      m.stacked = train_stacked(d, sc, audit);
    } else {
      if (!d.features.complete()) throw Error("single model: features must be complete");
      m.single = Classifier::fit(cfg.model.single, d.features.view(), d.target, d.features.names(),
                                 derive_seed(cfg.seed, tag_of("single")), threads);
    }
    return m;
  }

  Labels predict(const Table& t, unsigned threads = 1) const {
    if (stacked) return predict_stacked(*stacked, t, threads);
    if (!single) throw Error("model is empty");
    return single->predict(t.view(single->features()));
  }
};

inline void to_json(nlohmann::ordered_json& j, const TrainedModel& m) {
  j = nlohmann::ordered_json{{"type", m.type}};
  if (m.stacked) j["stacked"] = *m.stacked;
  if (m.single) j["single"] = *m.single;
}
inline void from_json(const nlohmann::ordered_json& j, TrainedModel& m) {
  m.type = j.at("type").get<ModelType>();
  m.stacked.reset();
  m.single.reset();
  if (m.type == ModelType::stacked)
    m.stacked = j.at("stacked").get<StackedEnsembleModel>();
  else
    m.single = j.at("single").get<Classifier>();
}

// Self-describing file holding everything `evaluate` and `predict` need.
struct ModelBundle {
  PipelineConfig config;
  Preprocessor preprocessor;
  TrainedModel model;
  std::vector<std::string> selected_features;
  std::map<std::string, std::string> band_assignment;
};

inline void save_bundle(const ModelBundle& b, const std::string& path) {
  auto header = bundle_header("pipeline");
  header["config"] = b.config;
  header["seed"] = b.config.seed;
  nlohmann::ordered_json j{{"header", header},
                           {"preprocessor", b.preprocessor},
                           {"model", b.model},
                           {"selected_features", b.selected_features},
                           {"band_assignment", b.band_assignment}};
  write_json_file(path, j);
}

inline ModelBundle load_bundle(const std::string& path) {
  const auto j = read_json_file(path);
  check_bundle_header(j, "pipeline");
  try {
    ModelBundle b;
    b.config = j.at("header").at("config").get<PipelineConfig>();
    b.preprocessor = j.at("preprocessor").get<Preprocessor>();
    b.model = j.at("model").get<TrainedModel>();
    b.selected_features = j.at("selected_features").get<std::vector<std::string>>();
    b.band_assignment = j.at("band_assignment").get<std::map<std::string, std::string>>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt bundle '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

inline constexpr const char* kReportSchemaVersion = "1.0";

struct RunReport {
  std::string schema_version = kReportSchemaVersion;
  std::string run_id;
  std::string component = "primary";
  std::string command;
  std::string model;  // e.g. "stacked: 500×tree + gbt(100)"
  std::string model_family;
  std::size_t n_estimators = 0;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::string started_utc;
  double seconds = 0.0;
  std::size_t train_rows = 0;
  std::size_t eval_rows = 0;
  std::size_t rows_dropped = 0;
  ClassificationReport metrics;
  std::vector<std::string> selected_features;
  std::map<std::string, std::string> band_assignment;
  // Top-level fields written by other producers, carried through unchanged.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

inline void to_json(nlohmann::ordered_json& j, const RunReport& r) {
  j = nlohmann::ordered_json{{"schema_version", r.schema_version},
                             {"run_id", r.run_id},
                             {"component", r.component},
                             {"command", r.command},
                             {"model", r.model},
                             {"model_family", r.model_family},
                             {"n_estimators", r.n_estimators},
                             {"seed", r.seed},
                             {"config", r.config},
                             {"timing", {{"started_utc", r.started_utc}, {"seconds", r.seconds}}},
                             {"data", {{"train_rows", r.train_rows}, {"eval_rows", r.eval_rows}, {"rows_dropped", r.rows_dropped}}},
                             {"metrics", r.metrics},
                             {"selected_features", r.selected_features},
                             {"band_assignment", r.band_assignment}};
  for (const auto& [k, v] : r.extra.items()) j[k] = v;
}

inline void from_json(const nlohmann::ordered_json& j, RunReport& r) {
  static const std::set<std::string> known{"schema_version", "run_id", "component", "command",  "model",
                                           "model_family",   "n_estimators", "seed", "config", "timing",
                                           "data",           "metrics", "selected_features", "band_assignment"};
  r = RunReport{};
  r.schema_version = j.at("schema_version").get<std::string>();
  if (r.schema_version.substr(0, r.schema_version.find('.')) != "1")
    throw Error("unsupported report schema_version '" + r.schema_version + "'");
  r.run_id = j.at("run_id").get<std::string>();
  r.component = j.at("component").get<std::string>();
  r.command = j.at("command").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.model_family = j.at("model_family").get<std::string>();
  r.n_estimators = j.at("n_estimators").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.at("config");
  r.started_utc = j.at("timing").at("started_utc").get<std::string>();
  r.seconds = j.at("timing").at("seconds").get<double>();
  r.train_rows = j.at("data").at("train_rows").get<std::size_t>();
  r.eval_rows = j.at("data").at("eval_rows").get<std::size_t>();
  r.rows_dropped = j.at("data").at("rows_dropped").get<std::size_t>();
  r.metrics = j.at("metrics").get<ClassificationReport>();
  r.selected_features = j.at("selected_features").get<std::vector<std::string>>();
  r.band_assignment = j.at("band_assignment").get<std::map<std::string, std::string>>();
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) r.extra[k] = v;
}

inline RunReport read_report(const std::string& path) {
  const auto j = read_json_file(path);
  try {
    return j.get<RunReport>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("report '" + path + "' does not match the schema: " + e.what());
  }
}

inline void write_report(const RunReport& r, const std::string& path) {
  write_json_file(path, nlohmann::ordered_json(r), 2);
}

// Stable identifier of a run: hash of command, config echo and seed.
inline std::string make_run_id(const std::string& command, const nlohmann::ordered_json& config, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(tag_of(command + "\n" + config.dump() + "\n" + std::to_string(seed)));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string model_family_of(const PipelineConfig& c) {
  if (c.model.type == ModelType::stacked) return "stacked";
  return nlohmann::ordered_json(c.model.single.kind).get<std::string>();
}

inline RunReport make_report(const std::string& command, const PipelineConfig& cfg, const ClassificationReport& metrics) {
  RunReport r;
  r.command = command;
  r.config = nlohmann::ordered_json(cfg);
  r.seed = cfg.seed;
  r.run_id = make_run_id(command, r.config, cfg.seed);
  r.model = cfg.model_id();
  r.model_family = model_family_of(cfg);
  r.n_estimators = cfg.model.type == ModelType::stacked ? cfg.model.stacking.n_base : cfg.model.single.n_estimators();
  r.metrics = metrics;
  return r;
}

// ---------------------------------------------------------------------------
// End-to-end runs
// ---------------------------------------------------------------------------

struct TrainOutcome {
  ModelBundle bundle;
  RunReport report;
  LabeledDataset holdout;  // raw held-out rows (before preprocessing)
};

inline ClassificationReport score_bundle(const ModelBundle& b, const LabeledDataset& raw, unsigned threads,
                                         std::size_t* eval_rows, std::size_t* rows_dropped) {
  std::size_t dropped = 0;
  const Table x = b.preprocessor.transform(raw.features, RowPolicy::drop, &dropped);
  if (x.rows() == 0) throw Error("no evaluation rows survive preprocessing");
  const LabeledDataset d = raw.aligned_to(x);
  if (eval_rows) *eval_rows = d.rows();
  if (rows_dropped) *rows_dropped = dropped;
  return evaluate_labels(d.target, b.model.predict(d.features, threads));
}

inline TrainOutcome train_pipeline(const LabeledDataset& labeled, const PipelineConfig& cfg,
                                   const std::optional<LabeledDataset>& test = std::nullopt, unsigned threads = 1,
                                   HalfSplitAudit* audit = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_timestamp();
  LabeledDataset train, holdout;
  if (test) {
    train = labeled;
    holdout = *test;
  } else {
    std::tie(train, holdout) = stratified_split(labeled, cfg.data.test_fraction, derive_seed(cfg.seed, tag_of("split")));
  }
  auto pre = fit_preprocessor(train, cfg, threads);
  TrainOutcome out;
  out.bundle.config = cfg;
  out.bundle.preprocessor = std::move(pre.preprocessor);
  out.bundle.model = TrainedModel::fit(pre.data, cfg, threads, audit);
  out.bundle.selected_features = out.bundle.preprocessor.features();
  out.bundle.band_assignment = out.bundle.preprocessor.imputer.partition.assignment();
  for (const auto& c : out.bundle.preprocessor.dropped_columns) out.bundle.band_assignment[c] = "dropped";

  std::size_t eval_rows = 0, dropped = 0;
  const auto metrics = score_bundle(out.bundle, holdout, threads, &eval_rows, &dropped);
  out.report = make_report("train", cfg, metrics);
  out.report.train_rows = pre.data.rows();
  out.report.eval_rows = eval_rows;
  out.report.rows_dropped = dropped;
  out.report.selected_features = out.bundle.selected_features;
  out.report.band_assignment = out.bundle.band_assignment;
  out.report.started_utc = started;
  out.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.holdout = std::move(holdout);
  return out;
}

inline RunReport evaluate_pipeline(const ModelBundle& b, const LabeledDataset& raw, unsigned threads = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport r;
  std::size_t eval_rows = 0, dropped = 0;
  const std::string started = utc_timestamp();
  const auto metrics = score_bundle(b, raw, threads, &eval_rows, &dropped);
  r = make_report("evaluate", b.config, metrics);
  r.eval_rows = eval_rows;
  r.rows_dropped = dropped;
  r.selected_features = b.selected_features;
  r.band_assignment = b.band_assignment;
  r.started_utc = started;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Every input row receives a label (rows fit-time rules would drop are
// mean-filled instead).
inline std::pair<std::vector<RowLabel>, Labels> predict_pipeline(const ModelBundle& b, const Table& raw,
                                                                 unsigned threads = 1) {
  const Table x = b.preprocessor.transform(raw, RowPolicy::fill);
  return {x.row_index(), b.model.predict(x, threads)};
}

// ---------------------------------------------------------------------------
// Comparison tables
// ---------------------------------------------------------------------------

struct ComparisonRow {
  std::string source;
  RunReport report;
};

// Sorted by macro F1, highest first; ties keep input order.
inline std::vector<ComparisonRow> compare_reports(std::vector<ComparisonRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.report.metrics.macro_f1 > b.report.metrics.macro_f1;
  });
  return rows;
}

inline std::string render_comparison(const std::vector<ComparisonRow>& rows) {
  std::vector<std::array<std::string, 6>> cells;
  cells.push_back({"Model", "Size", "Macro F1", "Precision 1", "Recall 1", "Misclassified"});
  char buf[64];
  for (const auto& r : rows) {
    std::array<std::string, 6> row;
    row[0] = r.report.model + (r.report.component == "primary" ? "" : " [" + r.report.component + "]");
    row[1] = std::to_string(r.report.n_estimators);
    std::snprintf(buf, sizeof(buf), "%.5f", r.report.metrics.macro_f1);
    row[2] = buf;
    std::snprintf(buf, sizeof(buf), "%.5f", r.report.metrics.precision[1]);
    row[3] = buf;
    std::snprintf(buf, sizeof(buf), "%.5f", r.report.metrics.recall[1]);
    row[4] = buf;
    row[5] = format_percent(r.report.metrics.misclassification_rate);
    cells.push_back(row);
  }
  // Width in code points so multi-byte characters in model names line up.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::array<std::size_t, 6> w{};
  for (const auto& row : cells)
    for (std::size_t k = 0; k < 6; ++k) w[k] = std::max(w[k], width(row[k]));
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t k = 0; k < 6; ++k) {
      const auto& s = cells[r][k];
      const std::string pad(w[k] - width(s), ' ');
      out += k == 0 ? s + pad : "  " + pad + s;
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = w[0];
      for (std::size_t k = 1; k < 6; ++k) total += 2 + w[k];
      out += std::string(total, '-') + '\n';
    }
  }
  return out;
}

inline nlohmann::ordered_json comparison_json(const std::vector<ComparisonRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    arr.push_back({{"source", r.source},
                   {"model", r.report.model},
                   {"component", r.report.component},
                   {"n_estimators", r.report.n_estimators},
                   {"macro_f1", r.report.metrics.macro_f1},
                   {"precision_1", r.report.metrics.precision[1]},
                   {"recall_1", r.report.metrics.recall[1]},
                   {"misclassification_rate", r.report.metrics.misclassification_rate},
                   {"report", r.report}});
  return {{"schema_version", kReportSchemaVersion}, {"rows", arr}};
}

}  // namespace failstack
