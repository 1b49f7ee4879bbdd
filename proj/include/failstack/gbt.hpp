#pragma once

#include <failstack/cart.hpp>

#include <json.hpp>

#include <array>
#include <optional>

namespace failstack {

struct GbtConfig {
  std::size_t n_estimators = 100;
  double learning_rate = 0.3;
  std::size_t max_depth = 6;
  double lambda = 1.0;
  double min_child_weight = 1.0;
  // Multiplies each sample's gradient and hessian by its class weight.
  std::optional<std::array<double, 2>> class_weights;

  friend bool operator==(const GbtConfig&, const GbtConfig&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const GbtConfig& c) {
  j = nlohmann::ordered_json{{"n_estimators", c.n_estimators},
                             {"learning_rate", c.learning_rate},
                             {"max_depth", c.max_depth},
                             {"lambda", c.lambda},
                             {"min_child_weight", c.min_child_weight},
                             {"class_weights", c.class_weights ? nlohmann::ordered_json(*c.class_weights)
                                                               : nlohmann::ordered_json()}};
}

inline void from_json(const nlohmann::ordered_json& j, GbtConfig& c) {
  c = GbtConfig{};
  c.n_estimators = j.at("n_estimators").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.min_child_weight = j.at("min_child_weight").get<double>();
  if (!j.at("class_weights").is_null()) c.class_weights = j.at("class_weights").get<std::array<double, 2>>();
}

// Second-order gradient boosting on the logistic loss.
//   p(x) = sigmoid(base_score + learning_rate * sum_t tree_t(x))
// Each round fits a regression tree to per-sample gradients g = w (p - y) and
// hessians h = w p (1 - p); leaf weight is -G / (H + lambda).
class GradientBoostedClassifier {
 public:
  GradientBoostedClassifier() = default;
  GradientBoostedClassifier(std::vector<std::string> features, GbtConfig cfg, double base_score, std::vector<Tree> trees)
      : features_(std::move(features)), cfg_(cfg), base_score_(base_score), trees_(std::move(trees)) {}

  static GradientBoostedClassifier fit(const ColumnView& x, std::span<const int> y, const GbtConfig& cfg,
                                       std::vector<std::string> names = {}) {
    check_training_input(x, y, "gradient boosting");
    if (cfg.n_estimators == 0) throw Error("gradient boosting: n_estimators must be >= 1");
    const auto counts = class_counts(y);
    if (counts[0] == 0 || counts[1] == 0) throw Error("gradient boosting: target has a single class");
    if (names.empty()) names = default_feature_names(x.size());
    if (names.size() != x.size()) throw Error("gradient boosting: feature name count mismatch");

    const std::size_t n = y.size();
    std::vector<double> w(n, 1.0);
    if (cfg.class_weights)
      for (std::size_t i = 0; i < n; ++i) w[i] = (*cfg.class_weights)[static_cast<std::size_t>(y[i])];

    double wpos = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wsum += w[i];
      wpos += w[i] * y[i];
    }
    const double rate = wpos / wsum;
    const double base = std::log(rate / (1.0 - rate));

    std::vector<RowId> rows(n);
    std::iota(rows.begin(), rows.end(), RowId{0});
    const FeatureOrders sorted = presort(x, rows);

    TreeConfig tcfg;
    tcfg.max_depth = cfg.max_depth;
    tcfg.min_samples_split = 2;
    tcfg.min_samples_leaf = 1;
    tcfg.min_child_weight = cfg.min_child_weight;

    std::vector<double> margin(n, base), g(n), h(n);
    GradientBoostedClassifier model(std::move(names), cfg, base, {});
    model.train_loss_.push_back(loss(margin, y, w));
    for (std::size_t round = 0; round < cfg.n_estimators; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = sigmoid(margin[i]);
        g[i] = w[i] * (p - y[i]);
        h[i] = w[i] * p * (1.0 - p);
      }
      NewtonCriterion crit{g, h, cfg.lambda};
      Tree tree = PresortedGrower<NewtonCriterion>(x, sorted, crit, tcfg, nullptr).grow();
      for (std::size_t i = 0; i < n; ++i) margin[i] += cfg.learning_rate * tree.predict_value(x, i);
      model.trees_.push_back(std::move(tree));
      model.train_loss_.push_back(loss(margin, y, w));
    }
    return model;
  }

  const std::vector<std::string>& features() const { return features_; }
  const GbtConfig& config() const { return cfg_; }
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }
  // Weighted mean log-loss on the training data before round 1 and after every round.
  const std::vector<double>& train_loss() const { return train_loss_; }

  double margin_row(const ColumnView& x, std::size_t row) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict_value(x, row);
    return base_score_ + cfg_.learning_rate * s;
  }

  std::vector<double> predict_proba(const ColumnView& x) const {
    if (x.size() != features_.size()) throw Error("gradient boosting: feature count mismatch");
    std::vector<double> out(view_rows(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(margin_row(x, i));
    return out;
  }

  Labels predict(const ColumnView& x) const {
    const auto p = predict_proba(x);
    Labels out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= 0.5 ? 1 : 0;
    return out;
  }

  std::vector<double> raw_importance() const {
    std::vector<double> imp(features_.size(), 0.0);
    for (const auto& t : trees_) t.accumulate_gain(imp);
    return imp;
  }

 private:
  static double loss(std::span<const double> margin, std::span<const int> y, std::span<const double> w) {
    double s = 0.0, ws = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double z = margin[i];
      const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      s += w[i] * (softplus - y[i] * z);
      ws += w[i];
    }
    return s / ws;
  }

  std::vector<std::string> features_;
  GbtConfig cfg_;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
  std::vector<double> train_loss_;
};

inline void to_json(nlohmann::ordered_json& j, const GradientBoostedClassifier& m) {
  j = nlohmann::ordered_json{{"features", m.features()},
                             {"config", m.config()},
                             {"base_score", m.base_score()},
                             {"trees", m.trees()}};
}

inline void from_json(const nlohmann::ordered_json& j, GradientBoostedClassifier& m) {
  m = GradientBoostedClassifier(j.at("features").get<std::vector<std::string>>(), j.at("config").get<GbtConfig>(),
                                j.at("base_score").get<double>(), j.at("trees").get<std::vector<Tree>>());
}

}  // namespace failstack
