#pragma once

#include <failstack/cart.hpp>

namespace failstack {

// Ensemble of extremely randomized regression trees. Every tree sees the whole
// sample (no bootstrap); prediction is the mean over trees.
class ExtraTreesRegressor {
 public:
  ExtraTreesRegressor() = default;
  explicit ExtraTreesRegressor(std::vector<Tree> trees) : trees_(std::move(trees)) {}

  static ExtraTreesRegressor fit(const ColumnView& x, std::span<const double> y, std::size_t n_trees,
                                 const TreeConfig& cfg, std::uint64_t seed, unsigned threads = 1) {
    if (x.empty()) throw Error("extra trees: no features");
    if (y.empty()) throw Error("extra trees: empty input");
    for (const auto& c : x)
      if (c.size() != y.size()) throw Error("extra trees: feature/target length mismatch");
    if (n_trees == 0) throw Error("extra trees: n_trees must be >= 1");
    std::vector<Tree> trees(n_trees);
    parallel_for(n_trees, threads, [&](std::size_t t) {
      Rng rng(derive_seed(seed, tag_of("extra_trees"), t));
      trees[t] = ExtraTreeGrower(x, y, cfg, rng).grow();
    });
    return ExtraTreesRegressor(std::move(trees));
  }

  const std::vector<Tree>& trees() const { return trees_; }

  double predict_row(const ColumnView& x, std::size_t row) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict_value(x, row);
    return s / static_cast<double>(trees_.size());
  }

  std::vector<double> predict(const ColumnView& x) const {
    std::vector<double> out(view_rows(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict_row(x, i);
    return out;
  }

  friend bool operator==(const ExtraTreesRegressor&, const ExtraTreesRegressor&) = default;

 private:
  std::vector<Tree> trees_;
};

inline void to_json(nlohmann::ordered_json& j, const ExtraTreesRegressor& m) { j = m.trees(); }
inline void from_json(const nlohmann::ordered_json& j, ExtraTreesRegressor& m) {
  m = ExtraTreesRegressor(j.get<std::vector<Tree>>());
}

}  // namespace failstack
