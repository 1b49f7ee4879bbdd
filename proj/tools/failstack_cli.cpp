#include <failstack.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace failstack;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
};

// Paths written by the running subcommand; removed if it fails.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  std::string path(const std::string& name) {
    fs::create_directories(dir_);
    auto p = dir_ / name;
    written_.push_back(p);
    return p.string();
  }

  void rollback() {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig cfg = c.config_path.empty() ? parse_config(nlohmann::ordered_json::object()) : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

LabeledDataset read_labeled(const std::string& path, const PipelineConfig& cfg) {
  return read_labeled_csv(path, cfg.data.target_column, cfg.data.csv_options());
}

std::string require(const std::string& v, const std::string& fallback, const std::string& what) {
  if (!v.empty()) return v;
  if (!fallback.empty()) return fallback;
  throw Error("no " + what + " given (pass a file argument or set it in the config)");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

void print_summary(const RunReport& r) {
  std::cout << r.model << "\n  macro F1 " << r.metrics.macro_f1 << "  misclassified "
            << format_percent(r.metrics.misclassification_rate) << "  rows " << r.eval_rows
            << " (dropped " << r.rows_dropped << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"failstack: imputation, selection and stacked-ensemble pipeline for tabular failure data"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "Pipeline config JSON (partial configs overlay the defaults)");
  app.add_option("--seed", common.seed, "Seed for every random stream");
  app.add_option("--threads", common.threads, "Worker threads (0 = all cores)");
  app.add_option("--out", common.out, "Output directory");

  std::string data, test, model_path, target, spec_path;
  std::vector<std::string> reports;

  auto* profile = app.add_subcommand("profile", "Per-column statistics and missingness bands as JSON");
  profile->add_option("data", data, "CSV file")->required();
  profile->add_option("--target", target, "Target column to exclude");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--spec", spec_path, "Synthetic spec JSON");

  auto* preprocess = app.add_subcommand("preprocess", "Fit preprocessing and export transformed train/test CSVs");
  preprocess->add_option("data", data, "Labeled training CSV");
  preprocess->add_option("--test", test, "Labeled test CSV (default: stratified split)");

  auto* select = app.add_subcommand("select", "Recursive feature elimination on the measure columns");
  select->add_option("data", data, "Labeled CSV");

  auto* train = app.add_subcommand("train", "Fit preprocessing and model; write bundle and report");
  train->add_option("data", data, "Labeled training CSV");
  train->add_option("--test", test, "Labeled test CSV (default: stratified split)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a model bundle on labeled data");
  evaluate->add_option("--model", model_path, "Model bundle")->required();
  evaluate->add_option("data", data, "Labeled CSV")->required();

  auto* predict = app.add_subcommand("predict", "Write (id, prediction) rows for a CSV");
  predict->add_option("--model", model_path, "Model bundle")->required();
  predict->add_option("data", data, "CSV (target column optional)")->required();

  auto* compare = app.add_subcommand("compare", "Merge run reports into a table sorted by macro F1");
  compare->add_option("reports", reports, "RunReport JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::unique_ptr<Outputs> outputs;
  try {
    PipelineConfig cfg = resolve_config(common);
    outputs = std::make_unique<Outputs>(cfg.out_dir);
    const unsigned threads = common.threads;

    if (*profile) {
      auto opts = cfg.data.csv_options();
      const auto contents = read_csv(data, opts, target.empty() ? std::nullopt : std::optional<std::string>(target));
      const auto profiles = profile_columns(contents.features);
      const auto partition = partition_by_missingness(profiles, cfg.imputation.bands);
      nlohmann::ordered_json j{{"rows", contents.features.rows()}, {"columns", profiles}, {"bands", partition}};
      write_json_file(outputs->path("profile.json"), j, 2);
    } else if (*synth) {
      SyntheticSpec spec;
      if (!spec_path.empty()) spec = read_json_file(spec_path).get<SyntheticSpec>();
      else spec.missingness = default_missingness(spec.n_measures);
      if (common.seed) spec.seed = *common.seed;
      const auto d = generate(spec);
      for (auto name : {"data.csv", "ground_truth.csv", "manifest.json"}) outputs->path(name);
      write_synthetic(d, outputs->dir(), cfg.data.target_column);
      std::cout << "wrote " << d.data.rows() << " rows x " << d.data.features.cols() << " columns to "
                << outputs->dir().string() << "\n";
    } else if (*preprocess) {
      const auto labeled = read_labeled(require(data, cfg.data.train, "training data"), cfg);
      const std::string test_path = test.empty() ? cfg.data.test : test;
      LabeledDataset tr, te;
      if (!test_path.empty()) {
        tr = labeled;
        te = read_labeled(test_path, cfg);
      } else {
        std::tie(tr, te) = stratified_split(labeled, cfg.data.test_fraction, derive_seed(cfg.seed, tag_of("split")));
      }
      const auto fitted = fit_preprocessor(tr, cfg, threads);
      const Table te_x = fitted.preprocessor.transform(te.features, RowPolicy::drop);
      const auto te_d = te.aligned_to(te_x);
      auto header = bundle_header("preprocessor");
      header["config"] = cfg;
      write_json_file(outputs->path("preprocessor.json"),
                      nlohmann::ordered_json{{"header", header}, {"preprocessor", fitted.preprocessor}});
      write_csv(outputs->path("train_preprocessed.csv"), fitted.data, cfg.data.target_column);
      write_csv(outputs->path("test_preprocessed.csv"), te_d, cfg.data.target_column);
      std::cout << "train " << fitted.data.rows() << " rows, test " << te_d.rows() << " rows, "
                << fitted.preprocessor.features().size() << " features\n";
    } else if (*select) {
      const auto labeled = read_labeled(require(data, cfg.data.train, "training data"), cfg);
      const auto prepared = prepare_measures(labeled, cfg);
      const auto result = select_measures(labeled, prepared.measures, cfg, threads);
      nlohmann::ordered_json j = result;
      j["config"] = cfg;
      j["seed"] = cfg.seed;
      write_json_file(outputs->path("selection.json"), j, 2);
      std::cout << "selected " << result.selected.size() << " of " << result.features.size() << " features\n";
    } else if (*train) {
      // Echo the files actually used in the report's config.
      cfg.data.train = require(data, cfg.data.train, "training data");
      if (!test.empty()) cfg.data.test = test;
      const auto labeled = read_labeled(cfg.data.train, cfg);
      const std::string test_path = cfg.data.test;
      std::optional<LabeledDataset> te;
      if (!test_path.empty()) te = read_labeled(test_path, cfg);
      const auto outcome = train_pipeline(labeled, cfg, te, threads);
      save_bundle(outcome.bundle, outputs->path("model.json"));
      write_report(outcome.report, outputs->path("report.json"));
      write_csv(outputs->path("holdout.csv"), outcome.holdout, cfg.data.target_column);
      print_summary(outcome.report);
    } else if (*evaluate) {
      const auto bundle = load_bundle(model_path);
      const auto labeled = read_labeled(data, bundle.config);
      const auto report = evaluate_pipeline(bundle, labeled, threads);
      write_report(report, outputs->path("evaluation.json"));
      print_summary(report);
    } else if (*predict) {
      const auto bundle = load_bundle(model_path);
      auto contents = read_csv(data, bundle.config.data.csv_options());
      Table x = contents.features;
      if (x.has_column(bundle.config.data.target_column))
        x = x.drop_columns(std::vector<std::string>{bundle.config.data.target_column});
      const auto [ids, labels] = predict_pipeline(bundle, x, threads);
      std::string text = "id,prediction\n";
      for (std::size_t i = 0; i < ids.size(); ++i) text += std::to_string(ids[i]) + "," + std::to_string(labels[i]) + "\n";
      write_text(outputs->path("predictions.csv"), text);
      std::cout << "wrote " << ids.size() << " predictions\n";
    } else if (*compare) {
      std::vector<ComparisonRow> rows;
      for (const auto& r : reports) rows.push_back({r, read_report(r)});
      rows = compare_reports(std::move(rows));
      const std::string table = render_comparison(rows);
      write_text(outputs->path("comparison.txt"), table);
      write_json_file(outputs->path("comparison.json"), comparison_json(rows), 2);
      std::cout << table;
    }
  } catch (const std::exception& e) {
    if (outputs) outputs->rollback();
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << command << ": " << msg << "\n";
    return 1;
  }
  return 0;
}
