#include <gtest/gtest.h>

#include <set>

#include "leukopipe/hashing.hpp"

using namespace leukopipe;

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(sha256_hex(std::string_view{}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex(std::string_view{"abc"}), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(DeriveSeed, DependsOnEveryInput) {
    const auto base = derive_seed(7, "stage:split");
    EXPECT_EQ(base, derive_seed(7, "stage:split"));
    EXPECT_NE(base, derive_seed(8, "stage:split"));
    EXPECT_NE(base, derive_seed(7, "stage:carve-val"));
    EXPECT_NE(derive_seed(7, "x", {1}), derive_seed(7, "x", {2}));
    EXPECT_NE(derive_seed(7, "x", {1, 2}), derive_seed(7, "x", {2, 1}));
}

TEST(DeriveSeed, NoCollisionsOverSmallGrid) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t c = 0; c < 2; ++c)
        for (std::uint64_t i = 0; i < 5000; ++i) seen.insert(derive_seed(42, "aug", {c, i}));
    EXPECT_EQ(seen.size(), 10000u);
}

TEST(Rng, RangesAndReproducibility) {
    Rng a(3), b(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = a.unit();
        EXPECT_EQ(u, b.unit());
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto k = a.randint(-2, 5);
        b.randint(-2, 5);
        ASSERT_GE(k, -2);
        ASSERT_LT(k, 5);
        const double x = a.uniform(0.7, 1.0);
        b.uniform(0.7, 1.0);
        ASSERT_GE(x, 0.7);
        ASSERT_LE(x, 1.0);
    }
    EXPECT_EQ(a.uniform(2.5, 2.5), 2.5);
}

TEST(Rng, NormalMoments) {
    Rng rng(11);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i;
    auto w = v;
    Rng(5).shuffle(w.begin(), w.end());
    EXPECT_NE(v, w);
    std::sort(w.begin(), w.end());
    EXPECT_EQ(v, w);
}
