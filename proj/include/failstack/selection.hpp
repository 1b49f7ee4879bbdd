#pragma once

#include <failstack/classifier.hpp>
#include <failstack/metrics.hpp>
#include <failstack/table.hpp>

#include <json.hpp>

#include <map>

namespace failstack {

struct SelectionResult {
  std::vector<std::string> features;  // input order
  std::vector<std::size_t> ranking;   // aligned with `features`; 1 = kept longest
  std::vector<std::string> selected;  // rank-1 features, input order
  std::map<std::size_t, double> cv_scores;  // feature count -> mean macro F1 (rfecv only)
  std::size_t chosen_k = 0;

  std::size_t rank_of(const std::string& f) const {
    for (std::size_t j = 0; j < features.size(); ++j)
      if (features[j] == f) return ranking[j];
    throw Error("feature '" + f + "' not ranked");
  }
};

inline void to_json(nlohmann::ordered_json& j, const SelectionResult& r) {
  nlohmann::ordered_json ranking = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < r.features.size(); ++k) ranking[r.features[k]] = r.ranking[k];
  nlohmann::ordered_json scores = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.cv_scores) scores[std::to_string(k)] = v;
  j = nlohmann::ordered_json{
      {"ranking", ranking}, {"cv_scores", scores}, {"chosen_k", r.chosen_k}, {"selected", r.selected}};
}

// Copy of `t` with missing cells replaced by column means (observed values).
// Selection estimators need complete input; this is used only to rank features.
inline Table mean_filled(const Table& t) {
  Columns values(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    values[j].assign(t.column(j).begin(), t.column(j).end());
    if (t.missing_count(j) == 0) continue;
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.rows(); ++i)
      if (!t.is_missing(i, j)) {
        s += t.value(i, j);
        ++n;
      }
    const double m = n ? s / static_cast<double>(n) : 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i)
      if (t.is_missing(i, j)) values[j][i] = m;
  }
  return Table(t.names(), t.row_index(), std::move(values),
               std::vector<std::vector<std::uint8_t>>(t.cols(), std::vector<std::uint8_t>(t.rows(), 0)));
}

namespace selection_detail {

inline ColumnView subset(const ColumnView& all, std::span<const std::size_t> cols, std::span<const std::size_t> rows,
                         Columns& storage) {
  storage.assign(cols.size(), {});
  for (std::size_t k = 0; k < cols.size(); ++k) {
    storage[k].resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) storage[k][i] = all[cols[k]][rows[i]];
  }
  return view_of(storage);
}

// Positions of the `count` least important features among `surviving`; ties
// eliminate the later input column first.
inline std::vector<std::size_t> weakest(const FeatureImportances& imp, const std::vector<std::size_t>& surviving,
                                        std::size_t count) {
  std::vector<std::size_t> idx(surviving.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (imp.values[a] != imp.values[b]) return imp.values[a] < imp.values[b];
    return surviving[a] > surviving[b];
  });
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(surviving[idx[k]]);
  return out;
}

inline std::vector<std::string> names_of(const std::vector<std::string>& all, const std::vector<std::size_t>& pos) {
  std::vector<std::string> out;
  for (auto p : pos) out.push_back(all[p]);
  return out;
}

// Runs elimination from all features down to `keep`, calling
// on_step(surviving, model) after each fit (including the final one).
template <class OnStep>
std::vector<std::size_t> eliminate(const ColumnView& x, std::span<const int> y, std::span<const std::size_t> rows,
                                   const std::vector<std::string>& names, const ClassifierSpec& spec, std::size_t keep,
                                   std::size_t step, std::uint64_t seed, unsigned threads, OnStep&& on_step) {
  const std::size_t p = x.size();
  std::vector<std::size_t> elimination_round(p, 0);
  std::vector<std::size_t> surviving(p);
  std::iota(surviving.begin(), surviving.end(), std::size_t{0});
  std::vector<int> ysub(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ysub[i] = y[rows[i]];
  std::size_t round = 0;
  while (true) {
    Columns storage;
    const ColumnView v = subset(x, surviving, rows, storage);
    Classifier model = Classifier::fit(spec, v, ysub, names_of(names, surviving), derive_seed(seed, tag_of("rfe"), round),
                                       threads);
    on_step(surviving, model);
    if (surviving.size() <= keep) break;
    const auto drop = weakest(model.importances(), surviving, std::min(step, surviving.size() - keep));
    ++round;
    for (auto d : drop) elimination_round[d] = round;
    std::vector<std::size_t> next;
    for (auto s : surviving)
      if (std::find(drop.begin(), drop.end(), s) == drop.end()) next.push_back(s);
    surviving = std::move(next);
  }
  // Surviving features rank 1; the last round eliminated ranks 2, and so on.
  std::vector<std::size_t> ranking(p, 1);
  for (std::size_t j = 0; j < p; ++j)
    if (elimination_round[j] > 0) ranking[j] = round - elimination_round[j] + 2;
  return ranking;
}

}  // namespace selection_detail

// Recursive feature elimination: fit, drop the `step` least important
// features, repeat until `keep` remain.
inline SelectionResult rfe(const LabeledDataset& d, const ClassifierSpec& spec, std::size_t keep, std::size_t step = 1,
                           std::uint64_t seed = 0, unsigned threads = 1) {
  const std::size_t p = d.features.cols();
  if (keep < 1 || keep > p) throw Error("rfe: keep must lie in [1, " + std::to_string(p) + "]");
  if (step < 1) throw Error("rfe: step must be >= 1");
  const Table filled = mean_filled(d.features);
  const ColumnView x = filled.view();
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  SelectionResult r;
  r.features = d.features.names();
  r.ranking = selection_detail::eliminate(x, d.target, rows, r.features, spec, keep, step, seed, threads,
                                          [](const auto&, const auto&) {});
  for (std::size_t j = 0; j < p; ++j)
    if (r.ranking[j] == 1) r.selected.push_back(r.features[j]);
  r.chosen_k = r.selected.size();
  return r;
}

// Cross-validated RFE: for every feature count on the elimination path, mean
// macro F1 over stratified folds; the best count (ties -> fewer features) is
// then selected by one RFE pass on all rows.
inline SelectionResult rfecv(const LabeledDataset& d, const ClassifierSpec& spec, std::size_t folds = 5,
                             std::size_t step = 1, std::uint64_t seed = 0, unsigned threads = 1) {
  const std::size_t p = d.features.cols();
  if (p == 0) throw Error("rfecv: no features");
  if (step < 1) throw Error("rfecv: step must be >= 1");
  const auto fold_of = stratified_folds(d.target, folds, seed);
  const Table filled = mean_filled(d.features);
  const ColumnView x = filled.view();
  const auto names = d.features.names();

  std::vector<std::map<std::size_t, double>> per_fold(folds);
  parallel_for(folds, threads, [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < d.rows(); ++i) (fold_of[i] == f ? test : train).push_back(i);
    Labels ytest;
    for (auto i : test) ytest.push_back(d.target[i]);
    selection_detail::eliminate(x, d.target, train, names, spec, 1, step, derive_seed(seed, tag_of("rfecv.fold"), f), 1,
                                [&](const std::vector<std::size_t>& surviving, const Classifier& model) {
                                  Columns storage;
                                  const ColumnView v = selection_detail::subset(x, surviving, test, storage);
                                  per_fold[f][surviving.size()] = evaluate_labels(ytest, model.predict(v)).macro_f1;
                                });
  });

  SelectionResult r;
  for (const auto& [k, _] : per_fold[0]) {
    double s = 0.0;
    for (const auto& m : per_fold) s += m.at(k);
    r.cv_scores[k] = s / static_cast<double>(folds);
  }
  double best = -1.0;
  for (const auto& [k, score] : r.cv_scores)  // ascending k: strict > keeps the smaller k on ties
    if (score > best) {
      best = score;
      r.chosen_k = k;
    }
  const auto final_pass = rfe(d, spec, r.chosen_k, step, seed, threads);
  r.features = final_pass.features;
  r.ranking = final_pass.ranking;
  r.selected = final_pass.selected;
  return r;
}

}  // namespace failstack
