#pragma once

#include <failstack/table.hpp>
#include <failstack/tree.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace failstack {

inline std::vector<std::string> default_feature_names(std::size_t p) {
  std::vector<std::string> names(p);
  for (std::size_t j = 0; j < p; ++j) names[j] = "x" + std::to_string(j);
  return names;
}

inline void check_training_input(const ColumnView& x, std::span<const int> y, const char* who) {
  if (x.empty()) throw Error(std::string(who) + ": no features");
  if (y.empty() || view_rows(x) == 0) throw Error(std::string(who) + ": empty input");
  for (const auto& c : x)
    if (c.size() != y.size()) throw Error(std::string(who) + ": feature/target length mismatch");
  for (int v : y)
    if (v != 0 && v != 1) throw Error(std::string(who) + ": labels must be 0 or 1");
}

// Inverse class-frequency weights normalized so the per-sample mean is 1.
inline std::array<double, 2> balanced_class_weights(std::span<const int> y) {
  const auto c = class_counts(y);
  const double n = static_cast<double>(y.size());
  if (c[0] == 0 || c[1] == 0) throw Error("balanced weights need both classes present");
  return {n / (2.0 * static_cast<double>(c[0])), n / (2.0 * static_cast<double>(c[1]))};
}

// Greedy CART classifier on weighted Gini impurity.
class DecisionTreeClassifier {
 public:
  DecisionTreeClassifier() = default;
  DecisionTreeClassifier(std::vector<std::string> features, Tree tree)
      : features_(std::move(features)), tree_(std::move(tree)) {
    if (tree_.max_feature() >= static_cast<int>(features_.size())) throw Error("tree references unknown feature");
  }

  // `weights` may be empty (all ones). `rows` restricts training to a subset
  // of row positions (empty = all rows).
  static DecisionTreeClassifier fit(const ColumnView& x, std::span<const int> y, std::span<const double> weights,
                                    const TreeConfig& cfg, std::uint64_t seed,
                                    std::vector<std::string> names = {}, std::span<const RowId> rows = {}) {
    check_training_input(x, y, "decision tree");
    if (names.empty()) names = default_feature_names(x.size());
    if (names.size() != x.size()) throw Error("decision tree: feature name count mismatch");
    std::vector<double> ones;
    if (weights.empty()) {
      ones.assign(y.size(), 1.0);
      weights = ones;
    }
    std::vector<RowId> all;
    if (rows.empty()) {
      all.resize(y.size());
      std::iota(all.begin(), all.end(), RowId{0});
      rows = all;
    }
    GiniCriterion crit{y, weights};
    Rng rng(derive_seed(seed, tag_of("decision_tree")));
    PresortedGrower<GiniCriterion> grower(x, presort(x, rows), crit, cfg, &rng);
    return DecisionTreeClassifier(std::move(names), grower.grow());
  }

  const std::vector<std::string>& features() const { return features_; }
  const Tree& tree() const { return tree_; }

  double proba_row(const ColumnView& x, std::size_t row) const { return tree_.leaf(x, row).value; }

  int predict_row(const ColumnView& x, std::size_t row) const {
    const auto& leaf = tree_.leaf(x, row);
    return leaf.weight1 > leaf.weight0 ? 1 : 0;
  }

  std::vector<double> predict_proba(const ColumnView& x) const {
    std::vector<double> out(view_rows(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = proba_row(x, i);
    return out;
  }

  Labels predict(const ColumnView& x) const {
    Labels out(view_rows(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict_row(x, i);
    return out;
  }

  // Raw (unnormalized) impurity decrease per feature.
  std::vector<double> raw_importance() const {
    std::vector<double> imp(features_.size(), 0.0);
    tree_.accumulate_gain(imp);
    return imp;
  }

  friend bool operator==(const DecisionTreeClassifier&, const DecisionTreeClassifier&) = default;

 private:
  std::vector<std::string> features_;
  Tree tree_;
};

inline void to_json(nlohmann::ordered_json& j, const DecisionTreeClassifier& m) {
  j = nlohmann::ordered_json{{"features", m.features()}, {"nodes", m.tree()}};
}

inline void from_json(const nlohmann::ordered_json& j, DecisionTreeClassifier& m) {
  m = DecisionTreeClassifier(j.at("features").get<std::vector<std::string>>(), j.at("nodes").get<Tree>());
}

// Bagged CART trees with a random feature subset of size ceil(sqrt(p)) per
// node. Majority vote; ties go to class 0.
class RandomForestClassifier {
 public:
  RandomForestClassifier() = default;
  explicit RandomForestClassifier(std::vector<DecisionTreeClassifier> trees) : trees_(std::move(trees)) {}

  static RandomForestClassifier fit(const ColumnView& x, std::span<const int> y, std::size_t n_trees, TreeConfig cfg,
                                    std::uint64_t seed, std::vector<std::string> names = {},
                                    std::span<const double> sample_weights = {}, unsigned threads = 1) {
    check_training_input(x, y, "random forest");
    if (n_trees == 0) throw Error("random forest: n_trees must be >= 1");
    if (!cfg.max_features)
      cfg.max_features = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.size()))));
    if (names.empty()) names = default_feature_names(x.size());
    const std::size_t n = y.size();
    std::vector<DecisionTreeClassifier> trees(n_trees);
    parallel_for(n_trees, threads, [&](std::size_t t) {
      Rng rng(derive_seed(seed, tag_of("random_forest.bootstrap"), t));
      std::vector<double> w(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) w[rng.below(n)] += 1.0;
      std::vector<RowId> rows;
      for (std::size_t i = 0; i < n; ++i) {
        if (w[i] > 0.0) rows.push_back(static_cast<RowId>(i));
        if (!sample_weights.empty()) w[i] *= sample_weights[i];
      }
      trees[t] = DecisionTreeClassifier::fit(x, y, w, cfg, derive_seed(seed, tag_of("random_forest.tree"), t), names,
                                             rows);
    });
    return RandomForestClassifier(std::move(trees));
  }

  const std::vector<DecisionTreeClassifier>& trees() const { return trees_; }
  const std::vector<std::string>& features() const { return trees_.at(0).features(); }

  std::vector<double> predict_proba(const ColumnView& x) const {
    std::vector<double> votes(view_rows(x), 0.0);
    for (const auto& t : trees_)
      for (std::size_t i = 0; i < votes.size(); ++i) votes[i] += t.predict_row(x, i);
    for (auto& v : votes) v /= static_cast<double>(trees_.size());
    return votes;
  }

  Labels predict(const ColumnView& x) const {
    const auto p = predict_proba(x);
    Labels out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.5 ? 1 : 0;
    return out;
  }

  std::vector<double> raw_importance() const {
    std::vector<double> imp(features().size(), 0.0);
    for (const auto& t : trees_) t.tree().accumulate_gain(imp);
    return imp;
  }

 private:
  std::vector<DecisionTreeClassifier> trees_;
};

}  // namespace failstack
