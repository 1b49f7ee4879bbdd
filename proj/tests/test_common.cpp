#include <failstack/common.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace failstack;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, tag_of("a"), 0), derive_seed(1, tag_of("a"), 1));
  EXPECT_NE(derive_seed(1, tag_of("a"), 0), derive_seed(1, tag_of("b"), 0));
  EXPECT_NE(derive_seed(1, tag_of("a"), 0), derive_seed(2, tag_of("a"), 0));
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng r(7);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.below(10);
    ASSERT_LT(v, 10u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_THROW(r.below(0), Error);
}

TEST(Rng, UniformOpenIntervalAndMoments) {
  Rng r(3);
  double s = 0.0, ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform(0.0, 1.0);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = r.normal();
    s += z;
    ss += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(ParallelFor, ResultIndependentOfThreadCount) {
  auto run = [](unsigned threads) {
    std::vector<std::uint64_t> out(97);
    parallel_for(out.size(), threads, [&](std::size_t i) {
      Rng r(derive_seed(9, tag_of("t"), i));
      out[i] = r.next();
    });
    return out;
  };
  EXPECT_EQ(run(1), run(4));
  EXPECT_EQ(run(1), run(0));
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw Error("boom");
                            }),
               Error);
}

TEST(Percentile, LinearInterpolationOracle) {
  // position q * (n - 1) between closest ranks
  const std::vector<double> v{0, 10, 20, 30};
  EXPECT_DOUBLE_EQ(percentile(v, 0.75), 20 + 0.25 * 10);
  EXPECT_DOUBLE_EQ(percentile(v, 0.5), 15.0);
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 30.0);
  EXPECT_DOUBLE_EQ(percentile({30, 0, 20, 10}, 0.75), 22.5);
  EXPECT_THROW(percentile({}, 0.5), Error);
}

TEST(Numeric, SigmoidStableAtExtremes) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(800.0), 0.999);
  EXPECT_GE(sigmoid(-800.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Numeric, PopulationStd) {
  const std::vector<double> v{2, 4, 6};
  EXPECT_DOUBLE_EQ(mean_of(v), 4.0);
  EXPECT_NEAR(std_of(v), std::sqrt(8.0 / 3.0), 1e-15);
}
