#include <failstack/imputation.hpp>
#include <failstack/synthetic.hpp>

#include <gtest/gtest.h>

using namespace failstack;

namespace {

ColumnProfile with_fraction(std::string name, double f) {
  ColumnProfile p;
  p.name = std::move(name);
  p.missing_fraction = f;
  return p;
}

ImputerConfig ridge_cfg(double alpha = 1.0, double tol = 1e-3, std::size_t max_iter = 10) {
  ImputerConfig c;
  c.regressor = RegressorSpec::ridge(alpha);
  c.tol = tol;
  c.max_iter = max_iter;
  return c;
}

// Two columns b = 3a + 1 with disjoint 10% MCAR masks.
std::pair<Table, Table> correlated_pair(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Column a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal() * 2;
    b[i] = 3 * a[i] + 1;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<std::uint8_t> ma(n, 0), mb(n, 0);
  for (std::size_t k = 0; k < n / 10; ++k) ma[perm[k]] = 1;
  for (std::size_t k = n / 10; k < n / 5; ++k) mb[perm[k]] = 1;
  auto truth = Table::from_columns({"a", "b"}, {a, b});
  Table masked({"a", "b"}, truth.row_index(), {a, b}, {ma, mb});
  return {masked, truth};
}

double masked_rmse(const Table& imputed, const Table& truth, const Table& masked, std::size_t j) {
  double s = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < masked.rows(); ++i)
    if (masked.is_missing(i, j)) {
      const double d = imputed.value(i, j) - truth.value(i, j);
      s += d * d;
      ++k;
    }
  return std::sqrt(s / static_cast<double>(k));
}

}  // namespace

TEST(Bands, FourColumnFixture) {
  std::vector<ColumnProfile> ps{with_fraction("a", 0.02), with_fraction("b", 0.12), with_fraction("c", 0.50),
                                with_fraction("d", 0.80)};
  auto p = partition_by_missingness(ps);
  EXPECT_EQ(p.d1, std::vector<std::string>{"a"});
  EXPECT_EQ(p.d2, std::vector<std::string>{"b"});
  EXPECT_EQ(p.d3, std::vector<std::string>{"c"});
  EXPECT_EQ(p.dropped, std::vector<std::string>{"d"});
}

TEST(Bands, BoundariesFromProfiledColumns) {
  // 1 of 20 missing is exactly 0.05; 15 of 20 is exactly 0.75.
  Table t({"lo", "hi"}, {}, {{}, {}}, {{}, {}});
  Columns vals(2, Column(20, 1.0));
  std::vector<std::vector<std::uint8_t>> mask(2, std::vector<std::uint8_t>(20, 0));
  mask[0][3] = 1;
  for (int i = 0; i < 15; ++i) mask[1][i] = 1;
  std::vector<RowLabel> rows(20);
  std::iota(rows.begin(), rows.end(), 0);
  t = Table({"lo", "hi"}, rows, vals, mask);
  auto ps = profile_columns(t);
  ASSERT_EQ(ps[0].missing_fraction, 0.05);
  ASSERT_EQ(ps[1].missing_fraction, 0.75);
  auto p = partition_by_missingness(ps);
  EXPECT_EQ(p.d2, std::vector<std::string>{"lo"});
  EXPECT_EQ(p.d3, std::vector<std::string>{"hi"});
  EXPECT_EQ(band_of(0.30, {}), Band::d3);
  EXPECT_EQ(band_of(std::nextafter(0.75, 1.0), {}), Band::dropped);
  EXPECT_EQ(band_of(std::nextafter(0.05, 0.0), {}), Band::d1);
}

TEST(Bands, AllCompleteIsD1) {
  std::vector<ColumnProfile> ps{with_fraction("a", 0), with_fraction("b", 0)};
  auto p = partition_by_missingness(ps);
  EXPECT_EQ(p.d1.size(), 2u);
  EXPECT_TRUE(p.d2.empty() && p.d3.empty() && p.dropped.empty());
}

TEST(Bands, ThresholdValidationAndJson) {
  std::vector<ColumnProfile> ps{with_fraction("a", 0)};
  EXPECT_THROW(partition_by_missingness(ps, {0.3, 0.2, 0.9}), Error);
  auto p = partition_by_missingness(std::vector<ColumnProfile>{with_fraction("x", 0.1), with_fraction("y", 0.9)});
  nlohmann::ordered_json j = p;
  auto back = j.get<MissingnessPartition>();
  EXPECT_EQ(back.assignment(), p.assignment());
  EXPECT_EQ(back.thresholds, p.thresholds);
}

TEST(Imputer, CompleteTableIsIdentity) {
  auto t = Table::from_columns({"a", "b"}, {{1, 2, 3}, {3, 1, 2}});
  auto m = fit_iterative_imputer(t, ridge_cfg());
  EXPECT_TRUE(m.column_order.empty());
  EXPECT_EQ(apply_imputer(m, t), t);
}

TEST(Imputer, OlsOracle) {
  Table t({"A", "B"}, {0, 1, 2, 3}, {{1, 2, 3, 4}, {10, 20, 30, 0}}, {{0, 0, 0, 0}, {0, 0, 0, 1}});
  auto f = fit_transform_iterative(t, ridge_cfg(1e-12, 1e-12, 50));
  // OLS on observed rows: B = 10 A exactly.
  EXPECT_NEAR(f.imputed.value(3, 1), 40.0, 1e-6);
  EXPECT_TRUE(f.imputed.complete());
  EXPECT_NEAR(apply_imputer(f.model, t).value(3, 1), 40.0, 1e-6);
}

TEST(Imputer, CorrelatedColumnsReconstructed) {
  auto [masked, truth] = correlated_pair(1000, 3);
  for (const auto& spec : {RegressorSpec::ridge(1.0), RegressorSpec::extra_trees(20)}) {
    ImputerConfig cfg;
    cfg.regressor = spec;
    cfg.seed = 5;
    auto f = fit_transform_iterative(masked, cfg);
    for (std::size_t j = 0; j < 2; ++j) {
      const double sd = std_of(truth.column(j));
      EXPECT_LT(masked_rmse(f.imputed, truth, masked, j), 0.1 * sd) << "column " << j;
    }
  }
}

TEST(Imputer, ApplyToFitTableMatchesFit) {
  auto [masked, truth] = correlated_pair(400, 8);
  auto cfg = ridge_cfg(1.0, 1e-10, 200);
  auto f = fit_transform_iterative(masked, cfg);
  ASSERT_LE(f.model.sweep_change.back(), cfg.tol);
  auto again = apply_imputer(f.model, masked);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < masked.rows(); ++i)
      EXPECT_NEAR(again.value(i, j), f.imputed.value(i, j), 1e-6 * f.model.scale[j]);
}

TEST(Imputer, RowWithEveryColumnMissingIsFilled) {
  auto [masked, truth] = correlated_pair(200, 1);
  auto m = fit_iterative_imputer(masked, ridge_cfg());
  Table probe({"a", "b"}, {99}, {{0}, {0}}, {{1}, {1}});
  auto out = apply_imputer(m, probe);
  EXPECT_TRUE(out.complete());
  EXPECT_TRUE(std::isfinite(out.value(0, 0)));
  EXPECT_TRUE(std::isfinite(out.value(0, 1)));
}

TEST(Imputer, ObservedCellsNeverChangeAndExtraColumnsPass) {
  auto [masked, truth] = correlated_pair(300, 4);
  auto m = fit_iterative_imputer(masked, ridge_cfg());
  Table with_extra = masked;
  with_extra.add_column("extra", Column(masked.rows(), 7.0));
  auto out = apply_imputer(m, with_extra);
  EXPECT_EQ(out.names(), with_extra.names());
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < masked.rows(); ++i)
      if (!masked.is_missing(i, j)) EXPECT_EQ(out.value(i, j), masked.value(i, j));
  EXPECT_EQ(out.value(0, 2), 7.0);
  EXPECT_THROW(apply_imputer(m, masked.drop_columns(std::vector<std::string>{"a"})), Error);
}

TEST(Imputer, IdempotentOnCompletedTable) {
  auto [masked, truth] = correlated_pair(300, 6);
  ImputerConfig cfg;
  cfg.regressor = RegressorSpec::extra_trees(10);
  auto f = fit_transform_iterative(masked, cfg);
  EXPECT_EQ(apply_imputer(f.model, f.imputed), f.imputed);
}

TEST(Imputer, SweepsBoundedAndRecorded) {
  auto [masked, truth] = correlated_pair(300, 2);
  auto cfg = ridge_cfg(1.0, 0.0, 4);  // tol 0 forces max_iter sweeps
  auto m = fit_iterative_imputer(masked, cfg);
  EXPECT_EQ(m.sweeps, 4u);
  EXPECT_EQ(m.sweep_change.size(), 4u);
  for (double c : m.sweep_change) EXPECT_GE(c, 0.0);
}

TEST(Imputer, VisitOrderAscendingMissingness) {
  Rng rng(1);
  const std::size_t n = 100;
  Columns v(3, Column(n));
  for (auto& c : v)
    for (auto& x : c) x = rng.normal();
  std::vector<std::vector<std::uint8_t>> m(3, std::vector<std::uint8_t>(n, 0));
  for (std::size_t i = 0; i < 30; ++i) m[0][i] = 1;
  for (std::size_t i = 0; i < 5; ++i) m[1][i + 50] = 1;
  for (std::size_t i = 0; i < 15; ++i) m[2][i + 60] = 1;
  std::vector<RowLabel> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  auto model = fit_iterative_imputer(Table({"x", "y", "z"}, rows, v, m), ridge_cfg());
  EXPECT_EQ(model.column_order, (std::vector<std::string>{"y", "z", "x"}));
}

TEST(Imputer, DeterministicAcrossThreadCounts) {
  auto [masked, truth] = correlated_pair(300, 12);
  ImputerConfig cfg;
  cfg.regressor = RegressorSpec::extra_trees(12);
  cfg.seed = 99;
  cfg.threads = 1;
  auto a = fit_transform_iterative(masked, cfg);
  cfg.threads = 4;
  auto b = fit_transform_iterative(masked, cfg);
  EXPECT_EQ(a.imputed, b.imputed);
  EXPECT_EQ(nlohmann::ordered_json(a.model).dump(), nlohmann::ordered_json(b.model).dump());
}

TEST(Imputer, JsonRoundTrip) {
  auto [masked, truth] = correlated_pair(200, 13);
  ImputerConfig cfg;
  cfg.regressor = RegressorSpec::extra_trees(5);
  auto m = fit_iterative_imputer(masked, cfg);
  nlohmann::ordered_json j = m;
  auto back = j.get<ImputationModel>();
  EXPECT_EQ(apply_imputer(back, masked), apply_imputer(m, masked));
}

TEST(Imputer, BeatsMeanOnLinearData) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto truth = factor_table(500, 6, 2, 0.3, seed);
    auto masked = mask_mcar(truth, 0.2, seed + 100);
    auto iter = fit_transform_iterative(masked, ridge_cfg()).imputed;
    auto mean = fit_mean_imputer(masked).imputed;
    double ei = 0, em = 0;
    for (std::size_t j = 0; j < truth.cols(); ++j) {
      ei += masked_rmse(iter, truth, masked, j);
      em += masked_rmse(mean, truth, masked, j);
    }
    wins += ei < em;
  }
  EXPECT_EQ(wins, 10);
}

TEST(MeasuresPipeline, NoMissingKeepsEverything) {
  auto t = Table::from_columns({"a", "b", "c"}, {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  auto r = impute_measures_pipeline(t, {}, default_d2_config(), default_d3_config());
  EXPECT_EQ(r.imputed, t);
  EXPECT_EQ(r.rows_dropped, 0u);
}

TEST(MeasuresPipeline, D1RowsDroppedD2D3Filled) {
  const std::size_t n = 200;
  Rng rng(9);
  Columns v(5, Column(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    for (std::size_t j = 0; j < 5; ++j) v[j][i] = z + 0.1 * rng.normal();
  }
  std::vector<std::vector<std::uint8_t>> m(5, std::vector<std::uint8_t>(n, 0));
  m[0][7] = m[0][9] = 1;                                     // D1: 1%
  for (std::size_t i = 20; i < 40; ++i) m[1][i] = m[2][i + 50] = 1;  // D2: 10%
  for (std::size_t i = 0; i < 100; ++i) m[3][2 * i] = 1;           // D3: 50%
  for (std::size_t i = 0; i < 180; ++i) m[4][i] = 1;               // dropped: 90%
  std::vector<RowLabel> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Table t({"d1", "d2a", "d2b", "d3", "gone"}, rows, v, m);
  auto cfg2 = default_d2_config(1);
  cfg2.regressor.n_trees = 10;
  auto r = impute_measures_pipeline(t, {}, cfg2, default_d3_config());
  EXPECT_EQ(r.rows_dropped, 2u);
  EXPECT_EQ(r.imputed.rows(), n - 2);
  EXPECT_FALSE(r.imputed.position_of(7).has_value());
  EXPECT_FALSE(r.imputed.position_of(9).has_value());
  EXPECT_TRUE(r.imputed.complete());
  EXPECT_EQ(r.imputed.names(), (std::vector<std::string>{"d1", "d2a", "d2b", "d3"}));
  EXPECT_EQ(r.state.partition.dropped, std::vector<std::string>{"gone"});
  // The fitted state reproduces the fit-time output.
  auto again = r.state.transform(t);
  EXPECT_EQ(again.row_index(), r.imputed.row_index());
  for (std::size_t j = 0; j < again.cols(); ++j)
    for (std::size_t i = 0; i < again.rows(); ++i)
      EXPECT_NEAR(again.value(i, j), r.imputed.value(i, j), 0.05) << again.name(j);
  nlohmann::ordered_json js = r.state;
  EXPECT_EQ(js.get<MeasuresImputer>().transform(t), again);
}

TEST(MeasuresPipeline, SingleColumnBandUsesMean) {
  Table t({"a", "b"}, {0, 1, 2, 3, 4}, {{1, 2, 3, 4, 5}, {2, 0, 4, 6, 8}}, {{0, 0, 0, 0, 0}, {0, 1, 0, 0, 0}});
  auto r = impute_measures_pipeline(t, {}, default_d2_config(), default_d3_config());
  ASSERT_TRUE(r.state.d2.has_value());
  EXPECT_TRUE(r.state.d2->mean_only);
  EXPECT_DOUBLE_EQ(r.imputed.value(1, 1), 5.0);
}
