#pragma once

#include <failstack/csv.hpp>
#include <failstack/table.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace failstack {

enum class Mechanism { mcar, mar };

NLOHMANN_JSON_SERIALIZE_ENUM(Mechanism, {{Mechanism::mcar, "MCAR"}, {Mechanism::mar, "MAR"}})

// Masks `rate` of the rows of each listed column. `group` may name a column
// list directly or use "measures" / "histogram" / "all". Under MAR the
// probability of masking a row grows with the driver column's value.
struct MissingnessRule {
  std::string group;
  std::vector<std::string> columns;
  Mechanism mechanism = Mechanism::mcar;
  double rate = 0.0;
  std::string driver;          // MAR only; never masked
  double mar_strength = 2.0;   // log-odds slope per driver standard deviation
  bool shared_rows = false;    // mask the same rows in every listed column
};

inline void to_json(nlohmann::ordered_json& j, const MissingnessRule& r) {
  j = nlohmann::ordered_json{{"group", r.group}, {"columns", r.columns}, {"mechanism", r.mechanism}, {"rate", r.rate}};
  if (r.mechanism == Mechanism::mar) {
    j["driver"] = r.driver;
    j["mar_strength"] = r.mar_strength;
  }
  j["shared_rows"] = r.shared_rows;
}

inline void from_json(const nlohmann::ordered_json& j, MissingnessRule& r) {
  r = MissingnessRule{};
  r.group = j.value("group", std::string{});
  if (j.contains("columns")) r.columns = j.at("columns").get<std::vector<std::string>>();
  r.mechanism = j.at("mechanism").get<Mechanism>();
  r.rate = j.at("rate").get<double>();
  r.driver = j.value("driver", std::string{});
  r.mar_strength = j.value("mar_strength", 2.0);
  r.shared_rows = j.value("shared_rows", false);
}

struct SyntheticSpec {
  std::size_t n_rows = 6000;
  std::size_t n_measures = 30;
  std::size_t n_histogram_sensors = 7;
  std::size_t bins_per_sensor = 10;
  double positive_fraction = 0.0167;
  std::size_t n_informative = 8;
  // Class-1 shift of each informative measure's latent value, in latent
  // standard deviations.
  double signal_strength = 1.5;
  std::size_t n_factors = 4;
  double noise = 0.6;  // latent idiosyncratic noise
  bool heavy_tail = true;
  double lognormal_sigma = 1.0;
  std::vector<MissingnessRule> missingness;
  std::uint64_t seed = 0;

  std::size_t n_columns() const { return n_measures + n_histogram_sensors * bins_per_sensor; }
};

inline void to_json(nlohmann::ordered_json& j, const SyntheticSpec& s) {
  j = nlohmann::ordered_json{{"n_rows", s.n_rows},
                             {"n_measures", s.n_measures},
                             {"n_histogram_sensors", s.n_histogram_sensors},
                             {"bins_per_sensor", s.bins_per_sensor},
                             {"positive_fraction", s.positive_fraction},
                             {"n_informative", s.n_informative},
                             {"signal_strength", s.signal_strength},
                             {"n_factors", s.n_factors},
                             {"noise", s.noise},
                             {"heavy_tail", s.heavy_tail},
                             {"lognormal_sigma", s.lognormal_sigma},
                             {"missingness", s.missingness},
                             {"seed", s.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, SyntheticSpec& s) {
  static const std::set<std::string> known{"n_rows",         "n_measures", "n_histogram_sensors", "bins_per_sensor",
                                           "positive_fraction", "n_informative", "signal_strength", "n_factors",
                                           "noise",          "heavy_tail", "lognormal_sigma",     "missingness",
                                           "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw Error("synthetic spec: unknown key '" + k + "'");
  s = SyntheticSpec{};
  s.n_rows = j.value("n_rows", s.n_rows);
  s.n_measures = j.value("n_measures", s.n_measures);
  s.n_histogram_sensors = j.value("n_histogram_sensors", s.n_histogram_sensors);
  s.bins_per_sensor = j.value("bins_per_sensor", s.bins_per_sensor);
  s.positive_fraction = j.value("positive_fraction", s.positive_fraction);
  s.n_informative = j.value("n_informative", s.n_informative);
  s.signal_strength = j.value("signal_strength", s.signal_strength);
  s.n_factors = j.value("n_factors", s.n_factors);
  s.noise = j.value("noise", s.noise);
  s.heavy_tail = j.value("heavy_tail", s.heavy_tail);
  s.lognormal_sigma = j.value("lognormal_sigma", s.lognormal_sigma);
  if (j.contains("missingness")) s.missingness = j.at("missingness").get<std::vector<MissingnessRule>>();
  s.seed = j.value("seed", s.seed);
}

inline std::string measure_name(std::size_t i) { return "sensor" + std::to_string(i + 1) + "_measure"; }

inline std::string histogram_name(std::size_t n_measures, std::size_t sensor, std::size_t bin) {
  return "sensor" + std::to_string(n_measures + sensor + 1) + "_histogram_bin" + std::to_string(bin);
}

// Missingness resembling the banded layout: a MAR driver, a few columns in
// each band, one beyond the drop threshold, and 2% of rows with every
// histogram bin missing.
inline std::vector<MissingnessRule> default_missingness(std::size_t n_measures) {
  if (n_measures < 12) return {};
  auto names = [](std::size_t lo, std::size_t hi) {
    std::vector<std::string> v;
    for (std::size_t i = lo; i < hi; ++i) v.push_back(measure_name(i));
    return v;
  };
  const std::string driver = measure_name(0);
  return {
      {"", names(1, 4), Mechanism::mcar, 0.02, "", 2.0, false},
      {"", names(4, 8), Mechanism::mar, 0.15, driver, 2.0, false},
      {"", names(8, 11), Mechanism::mar, 0.45, driver, 2.0, false},
      {"", names(11, 12), Mechanism::mcar, 0.85, "", 2.0, false},
      {"histogram", {}, Mechanism::mcar, 0.02, "", 2.0, true},
  };
}

struct SyntheticData {
  LabeledDataset data;
  Table ground_truth;
  std::vector<std::string> informative;
  nlohmann::ordered_json manifest;
};

namespace synthetic_detail {

// Picks `m` distinct positions with probability proportional to `weights`
// (Efraimidis-Spirakis keys).
inline std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t m, Rng& rng) {
  std::vector<std::pair<double, std::size_t>> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) keys[i] = {std::log(rng.uniform(0.0, 1.0)) / weights[i], i};
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(m), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> out(m);
  for (std::size_t k = 0; k < m; ++k) out[k] = keys[k].second;
  return out;
}

inline std::vector<std::string> resolve(const MissingnessRule& r, const SyntheticSpec& s,
                                        const std::vector<std::string>& all) {
  if (!r.columns.empty()) {
    for (const auto& c : r.columns)
      if (std::find(all.begin(), all.end(), c) == all.end()) throw Error("missingness rule names unknown column '" + c + "'");
    return r.columns;
  }
  if (r.group == "all") return all;
  if (r.group == "measures") return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(s.n_measures)};
  if (r.group == "histogram") return {all.begin() + static_cast<std::ptrdiff_t>(s.n_measures), all.end()};
  throw Error("missingness rule needs columns or a group of measures|histogram|all (got '" + r.group + "')");
}

}  // namespace synthetic_detail

// Deterministic paper-shaped dataset: heavy-tailed measures driven by shared
// latent factors (so columns are mutually predictable), histogram blocks of
// non-negative correlated bins, exactly round(n * positive_fraction)
// positives, and an exact missing count round(rate * n) per masked column.
inline SyntheticData generate(const SyntheticSpec& s) {
  if (s.n_rows < 2) throw Error("synthetic: n_rows must be >= 2");
  if (!(s.positive_fraction > 0.0 && s.positive_fraction < 1.0)) throw Error("synthetic: positive_fraction must lie in (0, 1)");
  if (s.n_informative > s.n_measures) throw Error("synthetic: n_informative exceeds n_measures");
  if (s.n_columns() == 0) throw Error("synthetic: no columns requested");
  const std::size_t n = s.n_rows;
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * s.positive_fraction));
  if (n_pos == 0 || n_pos == n) throw Error("synthetic: positive_fraction leaves a class empty at this n_rows");

  Labels y(n, 0);
  {
    Rng rng(derive_seed(s.seed, tag_of("synthetic.labels")));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t k = 0; k < n_pos; ++k) y[order[k]] = 1;
  }

  const std::size_t f = std::max<std::size_t>(1, s.n_factors);
  Columns factors(f, Column(n));
  {
    Rng rng(derive_seed(s.seed, tag_of("synthetic.factors")));
    for (auto& c : factors)
      for (auto& v : c) v = rng.normal();
  }

  std::vector<std::string> names;
  Columns truth;
  std::vector<std::string> informative;
  // Informative measures are spread evenly over the measure block.
  std::vector<std::uint8_t> is_informative(s.n_measures, 0);
  for (std::size_t k = 0; k < s.n_informative; ++k) is_informative[k * s.n_measures / s.n_informative] = 1;

  for (std::size_t j = 0; j < s.n_measures; ++j) {
    Rng rng(derive_seed(s.seed, tag_of("synthetic.measure"), j));
    std::vector<double> loading(f);
    double norm = 0.0;
    for (auto& l : loading) {
      l = rng.normal();
      norm += l * l;
    }
    norm = std::sqrt(norm);
    const double scale = std::pow(10.0, rng.uniform(-1.0, 4.0));
    Column c(n);
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k < f; ++k) z += loading[k] / norm * factors[k][i];
      z += s.noise * rng.normal();
      if (is_informative[j] && y[i] == 1) z += s.signal_strength;
      c[i] = s.heavy_tail ? scale * std::exp(s.lognormal_sigma * z) : z;
    }
    names.push_back(measure_name(j));
    truth.push_back(std::move(c));
    if (is_informative[j]) informative.push_back(names.back());
  }

  for (std::size_t k = 0; k < s.n_histogram_sensors; ++k) {
    Rng rng(derive_seed(s.seed, tag_of("synthetic.histogram"), k));
    const double center = rng.uniform(0.0, static_cast<double>(s.bins_per_sensor));
    const double width = 1.0 + rng.uniform(0.0, 2.0);
    std::vector<double> shape(s.bins_per_sensor);
    for (std::size_t b = 0; b < s.bins_per_sensor; ++b) {
      const double d = (static_cast<double>(b) - center) / width;
      shape[b] = std::exp(-0.5 * d * d) + 0.05;
    }
    Columns bins(s.bins_per_sensor, Column(n));
    for (std::size_t i = 0; i < n; ++i) {
      // Sensor intensity shares the first factor; the first two sensors carry
      // a weaker class signal.
      double z = 0.6 * factors[0][i] + 0.8 * rng.normal();
      if (k < 2 && y[i] == 1) z += 0.5 * s.signal_strength;
      const double total = 1000.0 * std::exp(z);
      for (std::size_t b = 0; b < s.bins_per_sensor; ++b)
        bins[b][i] = std::floor(total * shape[b] * (0.8 + 0.4 * rng.uniform()));
    }
    for (std::size_t b = 0; b < s.bins_per_sensor; ++b) {
      names.push_back(histogram_name(s.n_measures, k, b));
      truth.push_back(std::move(bins[b]));
    }
  }

  // Missingness.
  const std::size_t p = names.size();
  std::vector<std::vector<std::uint8_t>> mask(p, std::vector<std::uint8_t>(n, 0));
  std::vector<double> rate_of(p, 0.0);
  std::set<std::string> drivers, assigned;
  for (const auto& r : s.missingness)
    if (r.mechanism == Mechanism::mar) drivers.insert(r.driver);
  for (std::size_t ri = 0; ri < s.missingness.size(); ++ri) {
    const auto& r = s.missingness[ri];
    if (!(r.rate >= 0.0 && r.rate <= 1.0)) throw Error("synthetic: missingness rate must lie in [0, 1]");
    const auto m = static_cast<std::size_t>(std::llround(r.rate * static_cast<double>(n)));
    std::vector<double> weights;
    if (r.mechanism == Mechanism::mar) {
      if (std::find(names.begin(), names.end(), r.driver) == names.end())
        throw Error("synthetic: MAR driver '" + r.driver + "' is not a column");
      const auto d = truth[static_cast<std::size_t>(std::find(names.begin(), names.end(), r.driver) - names.begin())];
      // Standardized log-driver keeps weights bounded under heavy tails.
      std::vector<double> g(n);
      for (std::size_t i = 0; i < n; ++i) g[i] = s.heavy_tail ? std::log(std::max(d[i], 1e-300)) : d[i];
      const double mu = mean_of(g), sd = std_of(g);
      weights.resize(n);
      for (std::size_t i = 0; i < n; ++i) weights[i] = std::exp(r.mar_strength * (sd > 0 ? (g[i] - mu) / sd : 0.0));
    }
    for (const auto& c : synthetic_detail::resolve(r, s, names)) {
      if (drivers.count(c)) {
        if (r.columns.empty()) continue;  // groups skip drivers
        throw Error("synthetic: driver column '" + c + "' must stay fully observed");
      }
      if (!assigned.insert(c).second) throw Error("synthetic: column '" + c + "' appears in two missingness rules");
      if (m >= n) throw Error("synthetic: infeasible plan, column '" + c + "' would have no observed values");
      const auto j = static_cast<std::size_t>(std::find(names.begin(), names.end(), c) - names.begin());
      Rng rng(r.shared_rows ? derive_seed(s.seed, tag_of("synthetic.mask.shared"), ri)
                            : derive_seed(s.seed, tag_of("synthetic.mask"), j));
      std::vector<std::size_t> rows;
      if (r.mechanism == Mechanism::mcar) {
        rows.resize(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        rng.shuffle(rows);
        rows.resize(m);
      } else {
        rows = synthetic_detail::weighted_sample(weights, m, rng);
      }
      for (auto i : rows) mask[j][i] = 1;
      rate_of[j] = r.rate;
    }
  }

  std::vector<RowLabel> idx(n);
  std::iota(idx.begin(), idx.end(), RowLabel{0});
  Table gt(names, idx, truth, std::vector<std::vector<std::uint8_t>>(p, std::vector<std::uint8_t>(n, 0)));
  Columns masked_values = truth;
  Table masked(names, idx, std::move(masked_values), mask);

  SyntheticData out{LabeledDataset{std::move(masked), y}, std::move(gt), informative, {}};
  nlohmann::ordered_json fractions = nlohmann::ordered_json::object();
  for (std::size_t j = 0; j < p; ++j)
    if (out.data.features.missing_count(j) > 0)
      fractions[names[j]] = static_cast<double>(out.data.features.missing_count(j)) / static_cast<double>(n);
  out.manifest = {{"spec", s},
                  {"rows", n},
                  {"columns", p},
                  {"positives", n_pos},
                  {"informative", informative},
                  {"drivers", std::vector<std::string>(drivers.begin(), drivers.end())},
                  {"missing_fraction", fractions}};
  return out;
}

// Writes data.csv (features + target), ground_truth.csv and manifest.json.
inline void write_synthetic(const SyntheticData& d, const std::filesystem::path& dir,
                            const std::string& target_name = "target") {
  std::filesystem::create_directories(dir);
  write_csv((dir / "data.csv").string(), d.data, target_name);
  write_csv((dir / "ground_truth.csv").string(), d.ground_truth, &d.data.target, target_name);
  std::ofstream m(dir / "manifest.json");
  if (!m) throw Error("cannot write manifest in '" + dir.string() + "'");
  m << d.manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Small generators for imputation and selection experiments
// ---------------------------------------------------------------------------

// Complete n x p Gaussian table from `n_factors` shared factors plus noise;
// every column has unit latent variance before noise.
inline Table factor_table(std::size_t n, std::size_t p, std::size_t n_factors, double noise, std::uint64_t seed) {
  Rng rng(derive_seed(seed, tag_of("synthetic.factor_table")));
  Columns factors(n_factors, Column(n));
  for (auto& c : factors)
    for (auto& v : c) v = rng.normal();
  Columns cols(p, Column(n));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> load(n_factors);
    double norm = 0.0;
    for (auto& l : load) {
      l = rng.normal();
      norm += l * l;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k < n_factors; ++k) z += load[k] / norm * factors[k][i];
      cols[j][i] = z + noise * rng.normal();
    }
    names.push_back("x" + std::to_string(j));
  }
  return Table::from_columns(std::move(names), std::move(cols));
}

// Masks round(rate * n) uniformly chosen cells in every column.
inline Table mask_mcar(const Table& t, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("mask_mcar: rate must lie in [0, 1)");
  const std::size_t n = t.rows();
  const auto m = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  Columns vals(t.cols());
  std::vector<std::vector<std::uint8_t>> mask(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    vals[j].assign(t.column(j).begin(), t.column(j).end());
    mask[j].assign(t.mask(j).begin(), t.mask(j).end());
    Rng rng(derive_seed(seed, tag_of("synthetic.mcar"), j));
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    rng.shuffle(rows);
    for (std::size_t k = 0; k < m; ++k) mask[j][rows[k]] = 1;
  }
  return Table(t.names(), t.row_index(), std::move(vals), std::move(mask));
}

}  // namespace failstack
