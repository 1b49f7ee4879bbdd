#pragma once

#include <failstack/cart.hpp>
#include <failstack/gbt.hpp>
#include <failstack/linear.hpp>

#include <json.hpp>

#include <map>
#include <variant>

namespace failstack {

enum class ClassifierKind { decision_tree, random_forest, gradient_boosting, logistic };

NLOHMANN_JSON_SERIALIZE_ENUM(ClassifierKind, {{ClassifierKind::decision_tree, "decision_tree"},
                                              {ClassifierKind::random_forest, "random_forest"},
                                              {ClassifierKind::gradient_boosting, "gradient_boosting"},
                                              {ClassifierKind::logistic, "logistic"}})

// Which learner to train and how. Fields irrelevant to `kind` are ignored.
struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::gradient_boosting;
  TreeConfig tree;               // decision_tree, random_forest
  std::size_t n_trees = 100;     // random_forest
  GbtConfig gbt;                 // gradient_boosting
  double C = 1.0;                // logistic
  // Inverse-class-frequency weights (normalized to mean 1) for tree, forest
  // and boosting; ignored for logistic.
  bool balanced = false;

  static ClassifierSpec boosting(std::size_t n_estimators, std::size_t max_depth = 6, bool balanced = false) {
    ClassifierSpec s;
    s.kind = ClassifierKind::gradient_boosting;
    s.gbt.n_estimators = n_estimators;
    s.gbt.max_depth = max_depth;
    s.balanced = balanced;
    return s;
  }

  static ClassifierSpec logistic(double C) {
    ClassifierSpec s;
    s.kind = ClassifierKind::logistic;
    s.C = C;
    return s;
  }

  static ClassifierSpec decision_tree(TreeConfig cfg = {}) {
    ClassifierSpec s;
    s.kind = ClassifierKind::decision_tree;
    s.tree = cfg;
    return s;
  }

  static ClassifierSpec random_forest(std::size_t n_trees, TreeConfig cfg = {}) {
    ClassifierSpec s;
    s.kind = ClassifierKind::random_forest;
    s.n_trees = n_trees;
    s.tree = cfg;
    return s;
  }

  // Short human-readable identifier, e.g. "gbt(100)" or "logistic(C=0.1)".
  std::string describe() const {
    const std::string w = balanced ? ", weighted" : "";
    switch (kind) {
      case ClassifierKind::decision_tree:
        return "tree" + std::string(balanced ? "(weighted)" : "");
      case ClassifierKind::random_forest:
        return "forest(" + std::to_string(n_trees) + w + ")";
      case ClassifierKind::gradient_boosting:
        return "gbt(" + std::to_string(gbt.n_estimators) + w + ")";
      case ClassifierKind::logistic: {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "logistic(C=%g)", C);
        return buf;
      }
    }
    return "?";
  }

  // Primary size hyperparameter, reported alongside scores.
  std::size_t n_estimators() const {
    switch (kind) {
      case ClassifierKind::random_forest:
        return n_trees;
      case ClassifierKind::gradient_boosting:
        return gbt.n_estimators;
      default:
        return 1;
    }
  }
};

inline void to_json(nlohmann::ordered_json& j, const ClassifierSpec& s) {
  j = nlohmann::ordered_json{{"kind", s.kind}, {"tree", s.tree}, {"n_trees", s.n_trees},
                             {"gbt", s.gbt},   {"C", s.C},       {"balanced", s.balanced}};
}

inline void from_json(const nlohmann::ordered_json& j, ClassifierSpec& s) {
  s = ClassifierSpec{};
  s.kind = j.at("kind").get<ClassifierKind>();
  s.tree = j.at("tree").get<TreeConfig>();
  s.n_trees = j.at("n_trees").get<std::size_t>();
  s.gbt = j.at("gbt").get<GbtConfig>();
  s.C = j.at("C").get<double>();
  s.balanced = j.at("balanced").get<bool>();
}

struct FeatureImportances {
  std::vector<std::string> names;
  std::vector<double> values;  // sums to 1 unless degenerate
  bool degenerate = false;     // model made no splits; all values are 0

  double of(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return values[j];
    throw Error("no importance recorded for '" + name + "'");
  }
};

inline FeatureImportances normalize_importances(std::vector<std::string> names, std::vector<double> raw) {
  FeatureImportances fi;
  fi.names = std::move(names);
  double s = 0.0;
  for (auto& v : raw) {
    v = std::max(0.0, v);
    s += v;
  }
  if (s <= 0.0) {
    fi.values.assign(raw.size(), 0.0);
    fi.degenerate = true;
    return fi;
  }
  for (auto& v : raw) v /= s;
  fi.values = std::move(raw);
  return fi;
}

// Type-erased fitted classifier.
class Classifier {
 public:
  using Model = std::variant<DecisionTreeClassifier, RandomForestClassifier, GradientBoostedClassifier, LogisticModel>;

  Classifier() = default;
  explicit Classifier(Model m) : model_(std::move(m)) {}

  static Classifier fit(const ClassifierSpec& spec, const ColumnView& x, std::span<const int> y,
                        std::vector<std::string> names, std::uint64_t seed, unsigned threads = 1) {
    switch (spec.kind) {
      case ClassifierKind::decision_tree: {
        std::vector<double> w;
        if (spec.balanced) w = per_sample(y);
        return Classifier(DecisionTreeClassifier::fit(x, y, w, spec.tree, seed, std::move(names)));
      }
      case ClassifierKind::random_forest: {
        std::vector<double> w;
        if (spec.balanced) w = per_sample(y);
        return Classifier(RandomForestClassifier::fit(x, y, spec.n_trees, spec.tree, seed, std::move(names), w, threads));
      }
      case ClassifierKind::gradient_boosting: {
        GbtConfig cfg = spec.gbt;
        if (spec.balanced) cfg.class_weights = balanced_class_weights(y);
        return Classifier(GradientBoostedClassifier::fit(x, y, cfg, std::move(names)));
      }
      case ClassifierKind::logistic:
        return Classifier(LogisticModel::fit(x, y, spec.C, 1e-8, 100, std::move(names)));
    }
    throw Error("unknown classifier kind");
  }

  const Model& model() const { return model_; }

  const std::vector<std::string>& features() const {
    return std::visit(
        [](const auto& m) -> const std::vector<std::string>& {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LogisticModel>)
            return m.features;
          else
            return m.features();
        },
        model_);
  }

  std::vector<double> predict_proba(const ColumnView& x) const {
    return std::visit([&](const auto& m) { return m.predict_proba(x); }, model_);
  }

  Labels predict(const ColumnView& x) const {
    return std::visit([&](const auto& m) { return m.predict(x); }, model_);
  }

  // Total impurity (or loss) decrease per feature over all trees, normalized
  // to sum 1. Only tree-based models have importances.
  FeatureImportances importances() const {
    return std::visit(
        [](const auto& m) -> FeatureImportances {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LogisticModel>)
            throw Error("feature importances require a tree-based model");
          else
            return normalize_importances(m.features(), m.raw_importance());
        },
        model_);
  }

 private:
  static std::vector<double> per_sample(std::span<const int> y) {
    const auto cw = balanced_class_weights(y);
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) w[i] = cw[static_cast<std::size_t>(y[i])];
    return w;
  }

  Model model_;
};

inline FeatureImportances feature_importances(const Classifier& c) { return c.importances(); }

inline void to_json(nlohmann::ordered_json& j, const Classifier& c) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, DecisionTreeClassifier>)
          j = {{"kind", "decision_tree"}, {"model", m}};
        else if constexpr (std::is_same_v<T, RandomForestClassifier>)
          j = {{"kind", "random_forest"}, {"model", m.trees()}};
        else if constexpr (std::is_same_v<T, GradientBoostedClassifier>)
          j = {{"kind", "gradient_boosting"}, {"model", m}};
        else
          j = {{"kind", "logistic"}, {"model", m}};
      },
      c.model());
}

inline void from_json(const nlohmann::ordered_json& j, Classifier& c) {
  const auto kind = j.at("kind").get<std::string>();
  const auto& m = j.at("model");
  if (kind == "decision_tree")
    c = Classifier(m.get<DecisionTreeClassifier>());
  else if (kind == "random_forest")
    c = Classifier(RandomForestClassifier(m.get<std::vector<DecisionTreeClassifier>>()));
  else if (kind == "gradient_boosting")
    c = Classifier(m.get<GradientBoostedClassifier>());
  else if (kind == "logistic")
    c = Classifier(m.get<LogisticModel>());
  else
    throw Error("unknown classifier kind '" + kind + "'");
}

}  // namespace failstack
