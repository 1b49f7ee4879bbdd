#pragma once

#include <failstack/table.hpp>

#include <json.hpp>

#include <array>
#include <cstdio>
#include <string>

namespace failstack {

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  std::size_t at(int truth, int pred) const { return counts[truth][pred]; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size())
    throw Error("confusion: length mismatch (" + std::to_string(y_true.size()) + " vs " +
                std::to_string(y_pred.size()) + ")");
  if (y_true.empty()) throw Error("confusion: no rows");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1))
      throw Error("confusion: label outside {0,1} at row " + std::to_string(i));
    ++cm.counts[t][p];
  }
  return cm;
}

struct ClassificationReport {
  ConfusionMatrix cm;
  std::array<double, 2> precision{}, recall{}, f1{};
  // Set when the corresponding denominator was zero and the value defaulted to 0.
  std::array<bool, 2> precision_undefined{}, recall_undefined{};
  std::array<std::array<double, 2>, 2> precision_matrix{}, recall_matrix{};
  std::array<std::size_t, 2> class_counts{};
  double macro_f1 = 0.0;
  double misclassification_rate = 0.0;
};

inline ClassificationReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("report: empty confusion matrix");
  ClassificationReport r;
  r.cm = cm;
  for (int c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double col = static_cast<double>(cm.at(0, c) + cm.at(1, c));
    const double row = static_cast<double>(cm.at(c, 0) + cm.at(c, 1));
    r.class_counts[c] = cm.at(c, 0) + cm.at(c, 1);
    r.precision_undefined[c] = col == 0.0;
    r.recall_undefined[c] = row == 0.0;
    r.precision[c] = col == 0.0 ? 0.0 : tp / col;
    r.recall[c] = row == 0.0 ? 0.0 : tp / row;
    const double s = r.precision[c] + r.recall[c];
    r.f1[c] = s == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / s;
  }
  for (int t = 0; t < 2; ++t)
    for (int p = 0; p < 2; ++p) {
      const double col = static_cast<double>(cm.at(0, p) + cm.at(1, p));
      const double row = static_cast<double>(cm.at(t, 0) + cm.at(t, 1));
      r.precision_matrix[t][p] = col == 0.0 ? 0.0 : static_cast<double>(cm.at(t, p)) / col;
      r.recall_matrix[t][p] = row == 0.0 ? 0.0 : static_cast<double>(cm.at(t, p)) / row;
    }
  r.macro_f1 = 0.5 * (r.f1[0] + r.f1[1]);
  r.misclassification_rate = static_cast<double>(cm.at(0, 1) + cm.at(1, 0)) / static_cast<double>(cm.total());
  return r;
}

inline ClassificationReport evaluate_labels(std::span<const int> y_true, std::span<const int> y_pred) {
  return report(confusion(y_true, y_pred));
}

// Percentage to 5 significant figures, e.g. 0.0037443 -> "0.37443%".
inline std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.5g%%", fraction * 100.0);
  return buf;
}

inline void to_json(nlohmann::ordered_json& j, const ClassificationReport& r) {
  using nlohmann::ordered_json;
  auto mat = [](const auto& m) { return ordered_json::array({{m[0][0], m[0][1]}, {m[1][0], m[1][1]}}); };
  j = ordered_json{
      {"confusion_matrix", mat(r.cm.counts)},
      {"class_counts", {r.class_counts[0], r.class_counts[1]}},
      {"precision", {r.precision[0], r.precision[1]}},
      {"recall", {r.recall[0], r.recall[1]}},
      {"f1", {r.f1[0], r.f1[1]}},
      {"precision_undefined", {r.precision_undefined[0], r.precision_undefined[1]}},
      {"recall_undefined", {r.recall_undefined[0], r.recall_undefined[1]}},
      {"precision_matrix", mat(r.precision_matrix)},
      {"recall_matrix", mat(r.recall_matrix)},
      {"macro_f1", r.macro_f1},
      {"misclassification_rate", r.misclassification_rate},
  };
}

inline void from_json(const nlohmann::ordered_json& j, ClassificationReport& r) {
  const auto& cm = j.at("confusion_matrix");
  for (int t = 0; t < 2; ++t)
    for (int p = 0; p < 2; ++p) {
      r.cm.counts[t][p] = cm.at(t).at(p).get<std::size_t>();
      r.precision_matrix[t][p] = j.at("precision_matrix").at(t).at(p).get<double>();
      r.recall_matrix[t][p] = j.at("recall_matrix").at(t).at(p).get<double>();
    }
  for (int c = 0; c < 2; ++c) {
    r.class_counts[c] = j.at("class_counts").at(c).get<std::size_t>();
    r.precision[c] = j.at("precision").at(c).get<double>();
    r.recall[c] = j.at("recall").at(c).get<double>();
    r.f1[c] = j.at("f1").at(c).get<double>();
    r.precision_undefined[c] = j.at("precision_undefined").at(c).get<bool>();
    r.recall_undefined[c] = j.at("recall_undefined").at(c).get<bool>();
  }
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.misclassification_rate = j.at("misclassification_rate").get<double>();
}

}  // namespace failstack
