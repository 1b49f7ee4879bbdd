#pragma once

#include <failstack/table.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace failstack {

// describe()-style summary of one column over its observed entries. Stats are
// absent when the column has no observed values (std also when only one).
struct ColumnProfile {
  std::string name;
  double missing_fraction = 0.0;
  std::size_t count = 0;
  std::optional<double> mean, std, min, p25, p50, p75, max;
};

inline ColumnProfile profile_column(const std::string& name, std::span<const double> values,
                                    std::span<const std::uint8_t> missing) {
  ColumnProfile p;
  p.name = name;
  std::vector<double> obs;
  obs.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!missing[i]) obs.push_back(values[i]);
  p.count = obs.size();
  p.missing_fraction =
      values.empty() ? 0.0 : static_cast<double>(values.size() - obs.size()) / static_cast<double>(values.size());
  if (obs.empty()) return p;
  std::sort(obs.begin(), obs.end());
  const double m = mean_of(obs);
  p.mean = m;
  if (obs.size() >= 2) {
    double ss = 0.0;
    for (double x : obs) ss += (x - m) * (x - m);
    p.std = std::sqrt(ss / static_cast<double>(obs.size() - 1));
  }
  p.min = obs.front();
  p.p25 = percentile_sorted(obs, 0.25);
  p.p50 = percentile_sorted(obs, 0.50);
  p.p75 = percentile_sorted(obs, 0.75);
  p.max = obs.back();
  return p;
}

inline std::vector<ColumnProfile> profile_columns(const Table& t) {
  if (t.rows() == 0) throw Error("cannot profile a table with no rows");
  std::vector<ColumnProfile> out;
  out.reserve(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) out.push_back(profile_column(t.name(j), t.column(j), t.mask(j)));
  return out;
}

inline void to_json(nlohmann::ordered_json& j, const ColumnProfile& p) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j = nlohmann::ordered_json{{"name", p.name},         {"missing_fraction", p.missing_fraction},
                             {"count", p.count},       {"mean", opt(p.mean)},
                             {"std", opt(p.std)},      {"min", opt(p.min)},
                             {"p25", opt(p.p25)},      {"p50", opt(p.p50)},
                             {"p75", opt(p.p75)},      {"max", opt(p.max)}};
}

}  // namespace failstack
