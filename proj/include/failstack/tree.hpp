#pragma once

#include <failstack/common.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

namespace failstack {

// One node of a binary tree. Internal nodes route value <= threshold to the
// left child. Leaves carry `value`: P(class 1) for classification trees, the
// output for regression trees.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  // Weighted class totals for classification trees (zero for regression).
  double weight0 = 0.0;
  double weight1 = 0.0;
  // Criterion improvement achieved by this node's split (0 for leaves).
  double gain = 0.0;
  std::size_t samples = 0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) { check(); }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  const TreeNode& leaf(const ColumnView& x, std::size_t row) const {
    std::size_t k = 0;
    while (!nodes_[k].is_leaf()) {
      const auto& nd = nodes_[k];
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)][row] <= nd.threshold ? nd.left : nd.right);
    }
    return nodes_[k];
  }

  double predict_value(const ColumnView& x, std::size_t row) const { return leaf(x, row).value; }

  std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  // Adds each split's gain to importance[feature].
  void accumulate_gain(std::vector<double>& importance) const {
    for (const auto& n : nodes_)
      if (!n.is_leaf()) importance.at(static_cast<std::size_t>(n.feature)) += n.gain;
  }

  int max_feature() const {
    int m = -1;
    for (const auto& n : nodes_) m = std::max(m, n.feature);
    return m;
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::size_t depth_from(std::size_t k) const {
    const auto& n = nodes_[k];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)), depth_from(static_cast<std::size_t>(n.right)));
  }

  void check() const {
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const auto& n = nodes_[k];
      if (n.is_leaf()) continue;
      const auto sz = static_cast<int>(nodes_.size());
      if (n.left <= static_cast<int>(k) || n.right <= static_cast<int>(k) || n.left >= sz || n.right >= sz)
        throw Error("malformed tree: bad child index at node " + std::to_string(k));
    }
  }

  std::vector<TreeNode> nodes_;
};

struct TreeConfig {
  std::optional<std::size_t> max_depth;  // unlimited when absent
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  double min_impurity_decrease = 0.0;
  // Features examined per node; all when absent. A node keeps drawing past
  // this count until at least one valid split is found.
  std::optional<std::size_t> max_features;
  // Newton trees only: minimum hessian sum per child.
  double min_child_weight = 0.0;

  friend bool operator==(const TreeConfig&, const TreeConfig&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const TreeConfig& c) {
  j = nlohmann::ordered_json{{"max_depth", c.max_depth ? nlohmann::ordered_json(*c.max_depth) : nlohmann::ordered_json()},
                             {"min_samples_split", c.min_samples_split},
                             {"min_samples_leaf", c.min_samples_leaf},
                             {"min_impurity_decrease", c.min_impurity_decrease},
                             {"max_features", c.max_features ? nlohmann::ordered_json(*c.max_features) : nlohmann::ordered_json()},
                             {"min_child_weight", c.min_child_weight}};
}

inline void from_json(const nlohmann::ordered_json& j, TreeConfig& c) {
  c = TreeConfig{};
  if (j.contains("max_depth") && !j.at("max_depth").is_null()) c.max_depth = j.at("max_depth").get<std::size_t>();
  if (j.contains("min_samples_split")) c.min_samples_split = j.at("min_samples_split").get<std::size_t>();
  if (j.contains("min_samples_leaf")) c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  if (j.contains("min_impurity_decrease")) c.min_impurity_decrease = j.at("min_impurity_decrease").get<double>();
  if (j.contains("max_features") && !j.at("max_features").is_null())
    c.max_features = j.at("max_features").get<std::size_t>();
  if (j.contains("min_child_weight")) c.min_child_weight = j.at("min_child_weight").get<double>();
}

inline void to_json(nlohmann::ordered_json& j, const Tree& t) {
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : t.nodes()) {
    if (n.is_leaf())
      nodes.push_back({{"leaf", n.value}, {"w0", n.weight0}, {"w1", n.weight1}, {"n", n.samples}});
    else
      nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}, {"g", n.gain},
                       {"w0", n.weight0}, {"w1", n.weight1}, {"n", n.samples}, {"v", n.value}});
  }
  j = std::move(nodes);
}

inline void from_json(const nlohmann::ordered_json& j, Tree& t) {
  std::vector<TreeNode> nodes;
  nodes.reserve(j.size());
  for (const auto& e : j) {
    TreeNode n;
    if (e.contains("leaf")) {
      n.value = e.at("leaf").get<double>();
    } else {
      n.feature = e.at("f").get<int>();
      n.threshold = e.at("t").get<double>();
      n.left = e.at("l").get<int>();
      n.right = e.at("r").get<int>();
      n.gain = e.at("g").get<double>();
      n.value = e.at("v").get<double>();
    }
    n.weight0 = e.at("w0").get<double>();
    n.weight1 = e.at("w1").get<double>();
    n.samples = e.at("n").get<std::size_t>();
    nodes.push_back(n);
  }
  t = Tree(std::move(nodes));
}

// ---------------------------------------------------------------------------
// Exhaustive split search over presorted feature orders.
//
// Each feature keeps its own order of the node's rows sorted by value; a node
// owns the same [begin, end) range in every order, and splitting stably
// partitions each range. Cost per tree level is O(features * rows).
// ---------------------------------------------------------------------------

using RowId = std::uint32_t;
using FeatureOrders = std::vector<std::vector<RowId>>;

inline FeatureOrders presort(const ColumnView& x, std::span<const RowId> rows) {
  FeatureOrders orders(x.size());
  for (std::size_t f = 0; f < x.size(); ++f) {
    auto& o = orders[f];
    o.assign(rows.begin(), rows.end());
    const auto& col = x[f];
    std::stable_sort(o.begin(), o.end(), [&](RowId a, RowId b) { return col[a] < col[b]; });
  }
  return orders;
}

// Weighted Gini impurity. Score of a node is (w0^2 + w1^2) / W, so that the
// weighted impurity decrease of a split is score(L) + score(R) - score(parent).
struct GiniCriterion {
  std::span<const int> y;
  std::span<const double> w;

  struct Acc {
    double w0 = 0.0, w1 = 0.0;
    std::size_t n = 0;
    void add(const GiniCriterion& c, RowId r) {
      (c.y[r] ? w1 : w0) += c.w[r];
      ++n;
    }
    Acc minus(const Acc& o) const { return {w0 - o.w0, w1 - o.w1, n - o.n}; }
  };

  static double score(const Acc& a) {
    const double s = a.w0 + a.w1;
    return s > 0.0 ? (a.w0 * a.w0 + a.w1 * a.w1) / s : 0.0;
  }
  static double gain(const Acc& l, const Acc& r, const Acc& p) { return score(l) + score(r) - score(p); }
  static bool pure(const Acc& a) { return a.w0 <= 0.0 || a.w1 <= 0.0; }
  static bool child_ok(const Acc&, const TreeConfig&) { return true; }
  static bool accept(double gain, const TreeConfig& cfg) { return gain + 1e-12 >= cfg.min_impurity_decrease; }
  static void fill(TreeNode& n, const Acc& a) {
    n.weight0 = a.w0;
    n.weight1 = a.w1;
    const double s = a.w0 + a.w1;
    n.value = s > 0.0 ? a.w1 / s : 0.0;
    n.samples = a.n;
  }
};

// Second-order (Newton) regression on gradients and hessians with an L2
// penalty lambda on leaf weights. Leaf weight is -G / (H + lambda).
struct NewtonCriterion {
  std::span<const double> g;
  std::span<const double> h;
  double lambda = 1.0;

  struct Acc {
    double G = 0.0, H = 0.0;
    std::size_t n = 0;
    void add(const NewtonCriterion& c, RowId r) {
      G += c.g[r];
      H += c.h[r];
      ++n;
    }
    Acc minus(const Acc& o) const { return {G - o.G, H - o.H, n - o.n}; }
  };

  double score(const Acc& a) const { return a.G * a.G / (a.H + lambda); }
  double gain(const Acc& l, const Acc& r, const Acc& p) const { return 0.5 * (score(l) + score(r) - score(p)); }
  static bool pure(const Acc&) { return false; }
  static bool child_ok(const Acc& a, const TreeConfig& cfg) { return a.H >= cfg.min_child_weight; }
  static bool accept(double gain, const TreeConfig& cfg) { return gain > std::max(1e-12, cfg.min_impurity_decrease); }
  void fill(TreeNode& n, const Acc& a) const {
    n.value = -a.G / (a.H + lambda);
    n.samples = a.n;
  }
};

template <class Criterion>
class PresortedGrower {
 public:
  PresortedGrower(const ColumnView& x, FeatureOrders orders, const Criterion& crit, const TreeConfig& cfg,
                  Rng* rng)
      : x_(x), orders_(std::move(orders)), crit_(crit), cfg_(cfg), rng_(rng) {
    if (!orders_.empty()) {
      goes_left_.assign(view_rows(x_), 0);
      buffer_.resize(orders_[0].size());
    }
    features_.resize(x_.size());
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  Tree grow() {
    if (orders_.empty() || orders_[0].empty()) throw Error("cannot grow a tree on zero rows");
    nodes_.clear();
    build(0, orders_[0].size(), 0);
    return Tree(std::move(nodes_));
  }

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
    std::size_t left_count = 0;
    bool found = false;
  };

  typename Criterion::Acc accumulate(std::size_t b, std::size_t e) const {
    typename Criterion::Acc a;
    for (std::size_t k = b; k < e; ++k) a.add(crit_, orders_[0][k]);
    return a;
  }

  // Best split on one feature; `best` is replaced only by strictly better gain.
  void scan(std::size_t f, std::size_t b, std::size_t e, const typename Criterion::Acc& parent, Split& best) const {
    const auto& order = orders_[f];
    const auto& col = x_[f];
    typename Criterion::Acc left;
    for (std::size_t k = b; k + 1 < e; ++k) {
      left.add(crit_, order[k]);
      const double lo = col[order[k]];
      const double hi = col[order[k + 1]];
      if (!(lo < hi)) continue;
      const std::size_t nl = k + 1 - b;
      const std::size_t nr = e - b - nl;
      if (nl < cfg_.min_samples_leaf || nr < cfg_.min_samples_leaf) continue;
      const auto right = parent.minus(left);
      if (!Criterion::child_ok(left, cfg_) || !Criterion::child_ok(right, cfg_)) continue;
      const double g = crit_.gain(left, right, parent);
      if (!best.found || g > best.gain + 1e-12) {
        double t = lo + (hi - lo) * 0.5;
        if (t >= hi) t = lo;
        best = Split{f, t, g, nl, true};
      }
    }
  }

  Split find_split(std::size_t b, std::size_t e, const typename Criterion::Acc& parent) {
    Split best;
    if (!cfg_.max_features || *cfg_.max_features >= features_.size()) {
      for (std::size_t f = 0; f < features_.size(); ++f) scan(f, b, e, parent, best);
      return best;
    }
    // Random subset: scan in drawn order, but ties resolve to the lowest
    // feature index so the result does not depend on draw order.
    std::vector<std::size_t> perm = features_;
    rng_->shuffle(perm);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      Split trial;
      scan(perm[k], b, e, parent, trial);
      if (trial.found && (!best.found || trial.gain > best.gain + 1e-12 ||
                          (std::abs(trial.gain - best.gain) <= 1e-12 && trial.feature < best.feature)))
        best = trial;
      if (k + 1 >= *cfg_.max_features && best.found) break;
    }
    return best;
  }

  int build(std::size_t b, std::size_t e, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const auto acc = accumulate(b, e);
    crit_.fill(nodes_[static_cast<std::size_t>(id)], acc);

    const bool stop = (cfg_.max_depth && depth >= *cfg_.max_depth) || (e - b) < cfg_.min_samples_split ||
                      (e - b) < 2 * std::max<std::size_t>(1, cfg_.min_samples_leaf) || Criterion::pure(acc);
    if (stop) return id;
    const Split s = find_split(b, e, acc);
    if (!s.found || !Criterion::accept(s.gain, cfg_)) return id;

    const auto& col = x_[s.feature];
    for (std::size_t k = b; k < e; ++k) {
      const RowId r = orders_[s.feature][k];
      goes_left_[r] = col[r] <= s.threshold ? 1 : 0;
    }
    const std::size_t mid = b + s.left_count;
    for (auto& order : orders_) {
      std::size_t li = b, ri = 0;
      for (std::size_t k = b; k < e; ++k) {
        const RowId r = order[k];
        if (goes_left_[r])
          order[li++] = r;
        else
          buffer_[ri++] = r;
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(ri), order.begin() + static_cast<std::ptrdiff_t>(li));
    }

    {
      auto& nd = nodes_[static_cast<std::size_t>(id)];
      nd.feature = static_cast<int>(s.feature);
      nd.threshold = s.threshold;
      nd.gain = s.gain;
    }
    const int l = build(b, mid, depth + 1);
    const int r = build(mid, e, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const ColumnView& x_;
  FeatureOrders orders_;
  const Criterion& crit_;
  const TreeConfig& cfg_;
  Rng* rng_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<RowId> buffer_;
  std::vector<std::size_t> features_;
  std::vector<TreeNode> nodes_;
};

// ---------------------------------------------------------------------------
// Extremely randomized regression tree: at each node every non-constant
// feature gets one uniform threshold in (min, max); the best by variance
// reduction wins. No sorting.
// ---------------------------------------------------------------------------

class ExtraTreeGrower {
 public:
  ExtraTreeGrower(const ColumnView& x, std::span<const double> y, const TreeConfig& cfg, Rng& rng)
      : x_(x), y_(y), cfg_(cfg), rng_(rng) {}

  Tree grow() {
    const std::size_t n = y_.size();
    if (n == 0) throw Error("cannot grow a tree on zero rows");
    rows_.resize(n);
    std::iota(rows_.begin(), rows_.end(), RowId{0});
    nodes_.clear();
    build(0, n, 0);
    return Tree(std::move(nodes_));
  }

 private:
  int build(std::size_t b, std::size_t e, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t n = e - b;
    double sum = 0.0, sq = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const double v = y_[rows_[k]];
      sum += v;
      sq += v * v;
    }
    {
      auto& nd = nodes_[static_cast<std::size_t>(id)];
      nd.value = sum / static_cast<double>(n);
      nd.samples = n;
    }
    const double parent_score = sum * sum / static_cast<double>(n);
    const bool constant = sq - parent_score <= 1e-12 * std::max(1.0, sq);
    if ((cfg_.max_depth && depth >= *cfg_.max_depth) || n < cfg_.min_samples_split ||
        n < 2 * std::max<std::size_t>(1, cfg_.min_samples_leaf) || constant)
      return id;

    std::size_t best_f = 0;
    double best_t = 0.0, best_gain = -1.0;
    std::size_t best_left = 0;
    for (std::size_t f = 0; f < x_.size(); ++f) {
      const auto& col = x_[f];
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t k = b; k < e; ++k) {
        const double v = col[rows_[k]];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(lo < hi)) continue;
      double t = rng_.uniform(lo, hi);
      if (t >= hi) t = lo;
      double ls = 0.0;
      std::size_t nl = 0;
      for (std::size_t k = b; k < e; ++k) {
        const RowId r = rows_[k];
        if (col[r] <= t) {
          ls += y_[r];
          ++nl;
        }
      }
      const std::size_t nr = n - nl;
      if (nl < std::max<std::size_t>(1, cfg_.min_samples_leaf) || nr < std::max<std::size_t>(1, cfg_.min_samples_leaf))
        continue;
      const double rs = sum - ls;
      const double g = ls * ls / static_cast<double>(nl) + rs * rs / static_cast<double>(nr) - parent_score;
      if (g > best_gain) {
        best_gain = g;
        best_f = f;
        best_t = t;
        best_left = nl;
      }
    }
    if (best_gain < 0.0 || best_gain + 1e-12 < cfg_.min_impurity_decrease) return id;

    const auto& col = x_[best_f];
    std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(b), rows_.begin() + static_cast<std::ptrdiff_t>(e),
                          [&](RowId r) { return col[r] <= best_t; });
    {
      auto& nd = nodes_[static_cast<std::size_t>(id)];
      nd.feature = static_cast<int>(best_f);
      nd.threshold = best_t;
      nd.gain = best_gain;
    }
    const int l = build(b, b + best_left, depth + 1);
    const int r = build(b + best_left, e, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const ColumnView& x_;
  std::span<const double> y_;
  const TreeConfig& cfg_;
  Rng& rng_;
  std::vector<RowId> rows_;
  std::vector<TreeNode> nodes_;
};

}  // namespace failstack
