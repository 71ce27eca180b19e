#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "albalance/rng.hpp"

using namespace albalance;

TEST(Rng, SameSeedSameStream) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, "seeding"), derive_seed(1, "acquisition"));
  EXPECT_NE(derive_seed(1, "acquisition", 1), derive_seed(1, "acquisition", 2));
  EXPECT_NE(derive_seed(1, "x"), derive_seed(2, "x"));
  EXPECT_EQ(derive_seed(7, "cv", 3), derive_seed(7, "cv", 3));
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(5);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 10000.0, 0.5, 0.02);
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Rng, SampleWithoutReplacementIsDistinctSubset) {
  std::vector<int> pool(50);
  for (int i = 0; i < 50; ++i) pool[i] = i * 3;
  Rng rng(11);
  const auto picked = sample_without_replacement<int>(pool, 20, rng);
  ASSERT_EQ(picked.size(), 20u);
  std::set<int> uniq(picked.begin(), picked.end());
  EXPECT_EQ(uniq.size(), 20u);
  for (int v : picked) EXPECT_EQ(v % 3, 0);
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  Rng rng(1);
  shuffle(v, rng);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8}));
}
