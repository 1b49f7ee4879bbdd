#include <failstack/csv.hpp>
#include <failstack/profile.hpp>
#include <failstack/table.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace failstack;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& text) {
  auto dir = fs::temp_directory_path() / "failstack_test_table";
  fs::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

Table small(std::vector<RowLabel> rows, const std::string& col, std::vector<double> v) {
  return Table({col}, std::move(rows), {std::move(v)}, {std::vector<std::uint8_t>(3, 0)});
}

}  // namespace

TEST(Table, RejectsDuplicateNamesAndLabels) {
  EXPECT_THROW(Table({"a", "a"}, {0}, {{1.0}, {2.0}}, {{0}, {0}}), Error);
  EXPECT_THROW(Table({"a"}, {3, 3}, {{1.0, 2.0}}, {{0, 0}}), Error);
  EXPECT_THROW(Table({"a"}, {0, 1}, {{1.0}}, {{0}}), Error);
}

TEST(Table, MissingCellsHoldNaNPlaceholder) {
  Table t({"a"}, {0, 1}, {{1.0, 7.0}}, {{0, 1}});
  EXPECT_TRUE(t.is_missing(1, 0));
  EXPECT_TRUE(std::isnan(t.value(1, 0)));
  EXPECT_EQ(t.total_missing(), 1u);
  EXPECT_THROW(t.dense(), Error);
}

TEST(Table, SelectAndDropKeepLabels) {
  auto t = Table::from_columns({"a", "b"}, {{1, 2, 3}, {4, 5, 6}});
  std::vector<std::size_t> pos{2, 0};
  auto s = t.select_rows(pos);
  EXPECT_EQ(s.row_index(), (std::vector<RowLabel>{2, 0}));
  EXPECT_EQ(s.value(0, 1), 6.0);
  auto d = t.drop_columns(std::vector<std::string>{"a"});
  EXPECT_EQ(d.names(), std::vector<std::string>{"b"});
  EXPECT_THROW(t.index_of("zzz"), Error);
}

TEST(Join, IdenticalIndexConcatenates) {
  auto a = small({0, 1, 2}, "a", {1, 2, 3});
  auto b = small({0, 1, 2}, "b", {4, 5, 6});
  auto j = join_on_index({a, b});
  EXPECT_EQ(j.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(j.row_index(), (std::vector<RowLabel>{0, 1, 2}));
  EXPECT_EQ(j.value(2, 1), 6.0);
}

TEST(Join, IntersectsRowLabels) {
  auto a = small({0, 1, 2}, "a", {1, 2, 3});
  auto b = small({1, 2, 3}, "b", {10, 20, 30});
  auto j = join_on_index({a, b});
  EXPECT_EQ(j.row_index(), (std::vector<RowLabel>{1, 2}));
  EXPECT_EQ(j.value(0, 0), 2.0);
  EXPECT_EQ(j.value(0, 1), 10.0);
}

TEST(Join, DisjointGivesEmptyWithColumns) {
  auto j = join_on_index({small({0, 1, 2}, "a", {1, 2, 3}), small({5, 6, 7}, "b", {1, 2, 3})});
  EXPECT_EQ(j.rows(), 0u);
  EXPECT_EQ(j.cols(), 2u);
}

TEST(Join, DuplicateColumnIsError) {
  EXPECT_THROW(join_on_index({small({0, 1, 2}, "a", {1, 2, 3}), small({0, 1, 2}, "a", {1, 2, 3})}), Error);
}

TEST(Join, SetIntersectionProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RowLabel> la, lb;
    for (RowLabel r = 0; r < 40; ++r) {
      if (rng.uniform() < 0.6) la.push_back(r);
      if (rng.uniform() < 0.6) lb.push_back(r);
    }
    rng.shuffle(lb);
    Table a = Table::with_rows(la), b = Table::with_rows(lb);
    a.add_column("a", Column(la.begin(), la.end()));
    b.add_column("b", Column(lb.begin(), lb.end()));
    auto j = join_on_index({a, b});
    std::set<RowLabel> sb(lb.begin(), lb.end());
    std::vector<RowLabel> expect;
    for (auto r : la)
      if (sb.count(r)) expect.push_back(r);
    ASSERT_EQ(j.row_index(), expect);
    for (std::size_t i = 0; i < j.rows(); ++i) {
      EXPECT_EQ(j.value(i, 0), static_cast<double>(j.row_index()[i]));
      EXPECT_EQ(j.value(i, 1), static_cast<double>(j.row_index()[i]));
    }
  }
}

TEST(DropRows, NoMissingIsIdentity) {
  auto t = Table::from_columns({"a"}, {{1, 2, 3}});
  EXPECT_EQ(drop_rows_with_missing(t), t);
}

TEST(DropRows, RemovesRowKeepsOtherLabels) {
  Table t({"a", "b"}, {10, 11, 12}, {{1, 2, 3}, {4, 5, 6}}, {{0, 0, 0}, {0, 1, 0}});
  auto d = drop_rows_with_missing(t);
  EXPECT_EQ(d.row_index(), (std::vector<RowLabel>{10, 12}));
  EXPECT_TRUE(d.complete());
}

TEST(StratifiedSplit, CountsFromRounding) {
  Labels y(1000, 0);
  for (int i = 0; i < 20; ++i) y[i * 50] = 1;
  Column x(1000);
  std::iota(x.begin(), x.end(), 0.0);
  LabeledDataset d(Table::from_columns({"x"}, {x}), y);
  auto [tr, te] = stratified_split(d, 0.2, 42);
  auto c = class_counts(te.target);
  EXPECT_EQ(c[1], 4u);
  EXPECT_EQ(c[0], 196u);
  EXPECT_EQ(tr.rows(), 800u);
  std::set<RowLabel> all(tr.features.row_index().begin(), tr.features.row_index().end());
  for (auto r : te.features.row_index()) EXPECT_TRUE(all.insert(r).second);
  EXPECT_EQ(all.size(), 1000u);
}

TEST(StratifiedSplit, TwoRowsForced) {
  LabeledDataset d(Table::from_columns({"x"}, {{0.0, 1.0}}), {0, 1});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto [tr, te] = stratified_split(d, 0.5, seed);
    ASSERT_EQ(tr.rows(), 1u);
    ASSERT_EQ(te.rows(), 1u);
    EXPECT_NE(tr.target[0], te.target[0]);
  }
}

TEST(StratifiedSplit, EachClassOnBothSidesProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + static_cast<std::size_t>(rng.uniform() * 300);
    const std::size_t pos = 2 + static_cast<std::size_t>(rng.uniform() * (n / 3));
    Labels y(n, 0);
    for (std::size_t i = 0; i < pos; ++i) y[i] = 1;
    LabeledDataset d(Table::from_columns({"x"}, {Column(n, 0.0)}), y);
    const double f = 0.1 + 0.8 * rng.uniform();
    auto [tr, te] = stratified_split(d, f, trial);
    ASSERT_EQ(tr.rows() + te.rows(), n);
    for (int c = 0; c < 2; ++c) {
      EXPECT_GE(class_counts(tr.target)[c], 1u);
      EXPECT_GE(class_counts(te.target)[c], 1u);
    }
    EXPECT_LE(std::abs(static_cast<double>(te.rows()) - f * static_cast<double>(n)), 2.0);
  }
}

TEST(StratifiedSplit, Deterministic) {
  Labels y(200, 0);
  for (int i = 0; i < 30; ++i) y[i] = 1;
  Column x(200, 1.0);
  LabeledDataset d(Table::from_columns({"x"}, {x}), y);
  auto a = stratified_split(d, 0.3, 9), b = stratified_split(d, 0.3, 9), c = stratified_split(d, 0.3, 10);
  EXPECT_EQ(a.second.features.row_index(), b.second.features.row_index());
  EXPECT_NE(a.second.features.row_index(), c.second.features.row_index());
}

TEST(StratifiedFolds, BalancedAndDeterministic) {
  Labels y(103, 0);
  for (int i = 0; i < 17; ++i) y[i * 6] = 1;
  auto f = stratified_folds(y, 5, 3);
  EXPECT_EQ(f, stratified_folds(y, 5, 3));
  for (int c = 0; c < 2; ++c) {
    std::array<int, 5> per{};
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) ++per[f[i]];
    EXPECT_LE(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()), 1);
  }
  EXPECT_THROW(stratified_folds(Labels{0, 0, 1}, 2, 1), Error);
}

TEST(Csv, NaTokenMarksOnlyThatCell) {
  auto p = temp_file("na.csv", "s1,s4\n1,2\n3,na\n5,6\n");
  auto c = read_csv(p.string());
  const auto& t = c.features;
  ASSERT_EQ(t.rows(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(t.is_missing(i, j), i == 1 && j == 1);
}

TEST(Csv, NoTokensNoMissing) {
  auto p = temp_file("full.csv", "a,b\n1,2\n3,4\n");
  EXPECT_TRUE(read_csv(p.string()).features.complete());
}

TEST(Csv, TargetAndIdColumns) {
  auto p = temp_file("lab.csv", "id,a,target\n7,1.5,0\n9,NA,1\n");
  CsvOptions o;
  o.id_column = "id";
  auto d = read_labeled_csv(p.string(), "target", o);
  EXPECT_EQ(d.features.names(), std::vector<std::string>{"a"});
  EXPECT_EQ(d.features.row_index(), (std::vector<RowLabel>{7, 9}));
  EXPECT_EQ(d.target, (Labels{0, 1}));
  EXPECT_TRUE(d.features.is_missing(1, 0));
}

TEST(Csv, Errors) {
  EXPECT_THROW(read_csv("/nonexistent/x.csv"), Error);
  EXPECT_THROW(read_csv(temp_file("ragged.csv", "a,b\n1\n").string()), Error);
  EXPECT_THROW(read_csv(temp_file("text.csv", "a\nhello\n").string()), Error);
  EXPECT_THROW(read_labeled_csv(temp_file("badt.csv", "a,target\n1,2\n").string(), "target"), Error);
  EXPECT_THROW(read_labeled_csv(temp_file("noT.csv", "a\n1\n").string(), "target"), Error);
  EXPECT_THROW(read_csv(temp_file("dup.csv", "a,a\n1,2\n").string()), Error);
}

TEST(Csv, WriteReadRoundTripExact) {
  Table t({"a", "b"}, {3, 1}, {{0.1, 1e-300}, {-2.5, 123456789.123}}, {{0, 0}, {1, 0}});
  LabeledDataset d(t, {1, 0});
  auto p = fs::temp_directory_path() / "failstack_test_table" / "rt.csv";
  write_csv(p.string(), d);
  CsvOptions o;
  o.id_column = "id";
  auto back = read_labeled_csv(p.string(), "target", o);
  EXPECT_EQ(back.features, t);
  EXPECT_EQ(back.target, d.target);
}

TEST(Profile, PercentileAndMissingFraction) {
  Table t({"c"}, {0, 1, 2, 3}, {{3, 1, 2, 0}}, {{0, 0, 0, 1}});
  auto p = profile_columns(t).front();
  EXPECT_DOUBLE_EQ(p.missing_fraction, 0.25);
  EXPECT_DOUBLE_EQ(*p.p50, 2.0);
  EXPECT_DOUBLE_EQ(*p.p25, 1.5);
  EXPECT_DOUBLE_EQ(*p.mean, 2.0);
  EXPECT_EQ(p.count, 3u);
}

TEST(Profile, ConstantAndAllMissing) {
  Table t({"k", "m"}, {0, 1, 2}, {{5, 5, 5}, {0, 0, 0}}, {{0, 0, 0}, {1, 1, 1}});
  auto ps = profile_columns(t);
  EXPECT_DOUBLE_EQ(*ps[0].std, 0.0);
  EXPECT_DOUBLE_EQ(*ps[0].p25, 5.0);
  EXPECT_DOUBLE_EQ(*ps[0].p75, 5.0);
  EXPECT_DOUBLE_EQ(ps[1].missing_fraction, 1.0);
  EXPECT_FALSE(ps[1].mean.has_value());
  EXPECT_THROW(profile_columns(Table::with_rows({})), Error);
}
