#pragma once

#include <failstack/table.hpp>

#include <json.hpp>

#include <iostream>
#include <optional>
#include <regex>
#include <set>

namespace failstack {

// Per-column (x - mean) / std with population std. Zero-variance columns map
// to 0 everywhere.
struct Standardizer {
  std::vector<std::string> columns;
  std::vector<double> mean;
  std::vector<double> std;

  static Standardizer fit(const Table& t) {
    if (!t.complete()) throw Error("standardizer: fit table must not contain missing values");
    Standardizer s;
    s.columns = t.names();
    for (std::size_t j = 0; j < t.cols(); ++j) {
      s.mean.push_back(mean_of(t.column(j)));
      s.std.push_back(std_of(t.column(j)));
    }
    return s;
  }

  // Every fitted column must be present and no others. Missing cells stay missing.
  Table transform(const Table& t) const {
    if (t.cols() != columns.size())
      throw Error("standardizer: table has " + std::to_string(t.cols()) + " columns, fitted on " +
                  std::to_string(columns.size()));
    for (const auto& n : t.names())
      if (std::find(columns.begin(), columns.end(), n) == columns.end())
        throw Error("standardizer: unknown column '" + n + "'");
    Table out = t.select_columns(columns);
    Table result = Table::with_rows(out.row_index());
    for (std::size_t j = 0; j < columns.size(); ++j) {
      auto src = out.column(j);
      Column c(src.size());
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = std[j] > 0.0 ? (src[i] - mean[j]) / std[j] : 0.0;
      auto m = out.mask(j);
      result.add_column(columns[j], std::move(c), std::vector<std::uint8_t>(m.begin(), m.end()));
    }
    return result;
  }
};

inline void to_json(nlohmann::ordered_json& j, const Standardizer& s) {
  j = nlohmann::ordered_json{{"columns", s.columns}, {"mean", s.mean}, {"std", s.std}};
}
inline void from_json(const nlohmann::ordered_json& j, Standardizer& s) {
  s.columns = j.at("columns").get<std::vector<std::string>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.columns.size() || s.std.size() != s.columns.size())
    throw Error("standardizer: inconsistent serialized state");
}

// ---------------------------------------------------------------------------
// Engineered features
// ---------------------------------------------------------------------------

enum class FeatureKind { product, difference, minus_class_percentile };

NLOHMANN_JSON_SERIALIZE_ENUM(FeatureKind, {{FeatureKind::product, "product"},
                                           {FeatureKind::difference, "difference"},
                                           {FeatureKind::minus_class_percentile, "minus_class_percentile"}})

struct EngineeredFeatureSpec {
  FeatureKind kind = FeatureKind::product;
  std::vector<std::string> inputs;
  std::string name;  // derived from inputs when empty
  // minus_class_percentile only
  int class_label = 0;
  double q = 0.75;
  std::optional<double> fitted;

  static EngineeredFeatureSpec product(std::string a, std::string b) {
    return {FeatureKind::product, {std::move(a), std::move(b)}, "", 0, 0.75, std::nullopt};
  }
  static EngineeredFeatureSpec difference(std::string a, std::string b) {
    return {FeatureKind::difference, {std::move(a), std::move(b)}, "", 0, 0.75, std::nullopt};
  }
  static EngineeredFeatureSpec minus_class_percentile(std::string a, int label, double q) {
    return {FeatureKind::minus_class_percentile, {std::move(a)}, "", label, q, std::nullopt};
  }

  // "sensor12_measure" -> "s12"; other names unchanged.
  static std::string short_name(const std::string& column) {
    static const std::regex sensor(R"(sensor(\d+)_measure)");
    std::smatch m;
    if (std::regex_match(column, m, sensor)) return "s" + m[1].str();
    return column;
  }

  std::string output_name() const {
    if (!name.empty()) return name;
    switch (kind) {
      case FeatureKind::product:
        return short_name(inputs.at(0)) + "_x_" + short_name(inputs.at(1));
      case FeatureKind::difference:
        return short_name(inputs.at(0)) + "_minus_" + short_name(inputs.at(1));
      case FeatureKind::minus_class_percentile:
        return short_name(inputs.at(0)) + "_minus_p" + std::to_string(static_cast<int>(std::lround(q * 100))) + "c" +
               std::to_string(class_label);
    }
    return name;
  }

  void check_arity() const {
    const std::size_t want = kind == FeatureKind::minus_class_percentile ? 1 : 2;
    if (inputs.size() != want)
      throw Error("engineered feature of kind '" + nlohmann::ordered_json(kind).get<std::string>() + "' needs " +
                  std::to_string(want) + " input column(s)");
    if (kind == FeatureKind::minus_class_percentile && !(q >= 0.0 && q <= 1.0))
      throw Error("engineered feature percentile q must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::ordered_json& j, const EngineeredFeatureSpec& s) {
  j = nlohmann::ordered_json{{"kind", s.kind}, {"inputs", s.inputs}, {"name", s.output_name()}};
  if (s.kind == FeatureKind::minus_class_percentile) {
    j["class_label"] = s.class_label;
    j["q"] = s.q;
    j["fitted"] = s.fitted ? nlohmann::ordered_json(*s.fitted) : nlohmann::ordered_json();
  }
}

inline void from_json(const nlohmann::ordered_json& j, EngineeredFeatureSpec& s) {
  static const std::set<std::string> known{"kind", "inputs", "name", "class_label", "q", "fitted"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw Error("engineered feature: unknown key '" + k + "'");
  s = EngineeredFeatureSpec{};
  s.kind = j.at("kind").get<FeatureKind>();
  s.inputs = j.at("inputs").get<std::vector<std::string>>();
  if (j.contains("name")) s.name = j.at("name").get<std::string>();
  if (j.contains("class_label")) s.class_label = j.at("class_label").get<int>();
  if (j.contains("q")) s.q = j.at("q").get<double>();
  if (j.contains("fitted") && !j.at("fitted").is_null()) s.fitted = j.at("fitted").get<double>();
  s.check_arity();
}

// Fits percentile references on the rows of the requested class (observed
// values only). Specs that need no fitting are returned unchanged.
inline std::vector<EngineeredFeatureSpec> fit_engineered(std::vector<EngineeredFeatureSpec> specs, const Table& t,
                                                         std::span<const int> labels) {
  if (labels.size() != t.rows()) throw Error("engineered features: label count does not match rows");
  for (auto& s : specs) {
    s.check_arity();
    if (s.kind != FeatureKind::minus_class_percentile) continue;
    const auto j = t.index_of(s.inputs[0]);
    std::vector<double> v;
    for (std::size_t i = 0; i < t.rows(); ++i)
      if (labels[i] == s.class_label && !t.is_missing(i, j)) v.push_back(t.value(i, j));
    if (v.empty())
      throw Error("engineered feature '" + s.output_name() + "': no observed rows of class " +
                  std::to_string(s.class_label));
    s.fitted = percentile(std::move(v), s.q);
  }
  return specs;
}

// Appends one column per spec. A result cell is missing when any input is.
inline Table apply_engineered(const Table& t, std::span<const EngineeredFeatureSpec> specs) {
  Table out = t;
  for (const auto& s : specs) {
    s.check_arity();
    for (const auto& in : s.inputs)
      if (!t.has_column(in)) throw Error("engineered feature '" + s.output_name() + "': missing input '" + in + "'");
    if (s.kind == FeatureKind::minus_class_percentile && !s.fitted)
      throw Error("engineered feature '" + s.output_name() + "' has not been fitted");
    const auto a = t.index_of(s.inputs[0]);
    const auto b = s.inputs.size() > 1 ? t.index_of(s.inputs[1]) : a;
    Column c(t.rows());
    std::vector<std::uint8_t> m(t.rows(), 0);
    for (std::size_t i = 0; i < t.rows(); ++i) {
      if (t.is_missing(i, a) || t.is_missing(i, b)) {
        m[i] = 1;
        continue;
      }
      switch (s.kind) {
        case FeatureKind::product:
          c[i] = t.value(i, a) * t.value(i, b);
          break;
        case FeatureKind::difference:
          c[i] = t.value(i, a) - t.value(i, b);
          break;
        case FeatureKind::minus_class_percentile:
          c[i] = t.value(i, a) - *s.fitted;
          break;
      }
    }
    out.add_column(s.output_name(), std::move(c), std::move(m));
  }
  return out;
}

// Fits (when labels are supplied) and applies in one step.
inline Table engineer_features(const Table& t, const Labels* labels, std::vector<EngineeredFeatureSpec>& specs) {
  if (labels) specs = fit_engineered(std::move(specs), t, *labels);
  return apply_engineered(t, specs);
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

struct Correlation {
  double value = 0.0;
  bool defined = true;  // false when either input has zero variance
};

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least 2 values");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, false};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), true};
}

// Pairwise correlations over rows where both columns are observed. Undefined
// entries are reported as 0 with a warning on stderr.
inline std::vector<std::vector<double>> correlation_matrix(const Table& t, bool warn = true) {
  const std::size_t p = t.cols();
  std::vector<std::vector<double>> r(p, std::vector<double>(p, 0.0));
  for (std::size_t a = 0; a < p; ++a) {
    r[a][a] = 1.0;
    for (std::size_t b = a + 1; b < p; ++b) {
      std::vector<double> x, y;
      for (std::size_t i = 0; i < t.rows(); ++i)
        if (!t.is_missing(i, a) && !t.is_missing(i, b)) {
          x.push_back(t.value(i, a));
          y.push_back(t.value(i, b));
        }
      Correlation c = x.size() >= 2 ? pearson(x, y) : Correlation{0.0, false};
      if (!c.defined && warn)
        std::cerr << "warning: correlation of '" << t.name(a) << "' and '" << t.name(b) << "' is undefined\n";
      r[a][b] = r[b][a] = c.value;
    }
  }
  return r;
}

}  // namespace failstack
