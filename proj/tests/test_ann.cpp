#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "stimclean/ann.hpp"
#include "stimclean/parallel.hpp"

using namespace stimclean;
using namespace stimclean::ann;

namespace {

// Feature-like pool: independent coordinates with geometrically decaying spread.
Eigen::MatrixXd feature_pool(Eigen::Index dim, Eigen::Index n, std::mt19937_64& rng) {
    Eigen::MatrixXd m = testutil::gaussian(dim, n, rng);
    for (Eigen::Index i = 0; i < dim; ++i) m.row(i) *= std::pow(0.85, static_cast<double>(i));
    return m;
}

std::vector<std::uint32_t> brute_knn(const Eigen::MatrixXd& pool, const Eigen::VectorXd& w, std::size_t K) {
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(pool.cols()));
    std::iota(idx.begin(), idx.end(), 0u);
    std::vector<double> d(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < pool.rows(); ++i) {
            const double t = pool(i, static_cast<Eigen::Index>(j)) - w(i);
            s += t * t;
        }
        d[j] = s;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return d[a] < d[b]; });
    idx.resize(std::min(K, idx.size()));
    return idx;
}

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

TEST(Forest, SmallPoolIsOneLeafPerTree) {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd pool = feature_pool(8, 300, rng);
    const auto f = ProjectionForest::build(pool, {10, 500, 3, 8});
    for (int t = 0; t < f.trees(); ++t) {
        const auto leaves = f.leaves(t);
        ASSERT_EQ(leaves.size(), 1u);
        EXPECT_EQ(leaves[0].size(), 300u);
    }
    const Eigen::VectorXd q = pool.col(0);
    EXPECT_EQ(f.query_candidates(as_span(q)).size(), 300u);
}

TEST(Forest, LeavesPartitionThePool) {
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd pool = feature_pool(12, 2000, rng);
    const auto f = ProjectionForest::build(pool, {20, 500, 4, 8});
    for (int t = 0; t < f.trees(); ++t) {
        std::vector<int> seen(2000, 0);
        for (const auto& leaf : f.leaves(t)) {
            EXPECT_LE(leaf.size(), 500u);
            for (auto i : leaf) ++seen[i];
        }
        for (int s : seen) ASSERT_EQ(s, 1);
    }
}

TEST(Forest, DuplicatePointsStopSplitting) {
    // Identical points cannot be separated; the leaf keeps them all.
    Eigen::MatrixXd pool = Eigen::MatrixXd::Ones(4, 900);
    const auto f = ProjectionForest::build(pool, {3, 100, 1, 8});
    for (int t = 0; t < f.trees(); ++t) {
        std::size_t total = 0;
        for (const auto& leaf : f.leaves(t)) total += leaf.size();
        EXPECT_EQ(total, 900u);
    }
}

TEST(Forest, DeterministicForSeedAndThreads) {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd pool = feature_pool(10, 3000, rng);
    const int before = default_threads();
    set_default_threads(1);
    const auto a = ProjectionForest::build(pool, {8, 200, 42, 8});
    set_default_threads(4);
    const auto b = ProjectionForest::build(pool, {8, 200, 42, 8});
    set_default_threads(before);
    const auto c = ProjectionForest::build(pool, {8, 200, 43, 8});
    bool differs = false;
    for (int t = 0; t < a.trees(); ++t) {
        EXPECT_EQ(a.leaves(t), b.leaves(t));
        differs = differs || a.leaves(t) != c.leaves(t);
    }
    EXPECT_TRUE(differs);
}

TEST(Forest, PooledPointIsItsOwnCandidate) {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd pool = feature_pool(10, 5000, rng);
    const auto f = ProjectionForest::build(pool, {10, 100, 5, 8});
    for (Eigen::Index j = 0; j < pool.cols(); j += 97) {
        const Eigen::VectorXd q = pool.col(j);
        const auto cand = f.query_candidates(as_span(q));
        EXPECT_TRUE(std::binary_search(cand.begin(), cand.end(), static_cast<std::uint32_t>(j)));
        EXPECT_TRUE(std::is_sorted(cand.begin(), cand.end()));
        EXPECT_EQ(std::set<std::uint32_t>(cand.begin(), cand.end()).size(), cand.size());
    }
}

TEST(Forest, SaveLoadRoutesIdentically) {
    testutil::TempDir dir;
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd pool = feature_pool(10, 4000, rng);
    const auto f = ProjectionForest::build(pool, {6, 300, 9, 8});
    f.save(dir.path() / "forest.bin");
    const auto g = ProjectionForest::load(dir.path() / "forest.bin");
    EXPECT_EQ(g.trees(), f.trees());
    for (int i = 0; i < 50; ++i) {
        const Eigen::VectorXd q = feature_pool(10, 1, rng);
        EXPECT_EQ(f.query_candidates(as_span(q)), g.query_candidates(as_span(q)));
    }
    {
        std::ofstream out(dir.path() / "bad.bin", std::ios::binary);
        out << "not a forest";
    }
    EXPECT_THROW(ProjectionForest::load(dir.path() / "bad.bin"), Error);
}

TEST(Knn, TrivialCases) {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd pool = feature_pool(5, 50, rng);
    const Eigen::VectorXd q = pool.col(17);
    EXPECT_EQ(knn_exhaustive(pool, as_span(q), 1), std::vector<std::uint32_t>{17});
    EXPECT_EQ(knn_exhaustive(pool, as_span(q), 500), brute_knn(pool, q, 500));
    EXPECT_THROW(knn(pool, std::vector<std::uint32_t>{}, as_span(q), 3), ValidationError);
}

TEST(Knn, MatchesBruteForceOracle) {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd pool = feature_pool(16, 1000, rng);
    std::vector<std::uint32_t> all(1000);
    std::iota(all.begin(), all.end(), 0u);
    for (int t = 0; t < 50; ++t) {
        const Eigen::VectorXd q = feature_pool(16, 1, rng);
        EXPECT_EQ(knn(pool, all, as_span(q), 10), brute_knn(pool, q, 10));
    }
}

TEST(Knn, TiesGoToLowerIndex) {
    Eigen::MatrixXd pool = Eigen::MatrixXd::Zero(2, 4);
    pool(0, 0) = 2.0;
    pool(0, 1) = 1.0;
    pool(0, 2) = -1.0;
    pool(0, 3) = 1.0;
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
    EXPECT_EQ(knn_exhaustive(pool, as_span(q), 3), (std::vector<std::uint32_t>{1, 2, 3}));
}

TEST(Knn, ForestRecallAgainstExact) {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd pool = feature_pool(20, 10000, rng);
    const auto f = ProjectionForest::build(pool, {50, 500, 11, 8});
    double recall = 0.0;
    const int queries = 100;
    for (int t = 0; t < queries; ++t) {
        const Eigen::VectorXd q = feature_pool(20, 1, rng);
        const auto approx = knn(pool, f.query_candidates(as_span(q)), as_span(q), 10);
        const auto exact = brute_knn(pool, q, 10);
        int hit = 0;
        for (auto i : exact) hit += std::find(approx.begin(), approx.end(), i) != approx.end();
        recall += hit / 10.0;
    }
    EXPECT_GE(recall / queries, 0.8);
}

TEST(CounterRng, StreamsAreReproducibleAndDistinct) {
    CounterRng a(1, 0), b(1, 0), c(1, 1);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        EXPECT_NE(x, c.next());
    }
    CounterRng d(9, 2);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(d.below(7), 7u);
}
