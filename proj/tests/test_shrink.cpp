#include <gtest/gtest.h>

#include "helpers.hpp"
#include "shrink_oracle.hpp"
#include "stimclean/parallel.hpp"
#include "stimclean/shrink.hpp"

using namespace stimclean;
using testutil::gaussian;
using testutil::unit;

namespace {

// p x n noise of unit entries plus `r` spikes of strength `snr * (p n)^{1/4}`.
Eigen::MatrixXd spiked(Eigen::Index p, Eigen::Index n, int r, double snr, std::mt19937_64& rng) {
    Eigen::MatrixXd X = gaussian(p, n, rng);
    const double base = std::pow(static_cast<double>(p * n), 0.25);
    for (int i = 0; i < r; ++i) X += snr * base * (1.0 + 0.5 * i) * unit(p, rng) * unit(n, rng).transpose();
    return X;
}

}  // namespace

TEST(Shrink, ZeroMatrixHasNoRank) {
    const auto res = shrink::eoptshrink(Eigen::MatrixXd::Zero(50, 500));
    EXPECT_EQ(res.r_hat, 0);
    EXPECT_EQ(res.S_hat.norm(), 0.0);
}

TEST(Shrink, PureNoiseMostlyRankZero) {
    std::mt19937_64 rng(11);
    int zero = 0;
    for (int t = 0; t < 100; ++t) zero += shrink::eoptshrink(gaussian(50, 500, rng)).r_hat == 0;
    EXPECT_GE(zero, 95);
}

TEST(Shrink, RankOneSpikeRecovered) {
    // Optimal shrinkage cannot beat sqrt(1 - c_u^2 c_v^2) for this SNR; c_u^2 and
    // c_v^2 are the squared cosines of the noisy singular vectors with the truth.
    std::mt19937_64 rng(3);
    const Eigen::Index p = 50, n = 500;
    const double sigma = 1.0;
    const double d = 10.0 * sigma * std::pow(static_cast<double>(p * n), 0.25);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Eigen::VectorXd u = unit(p, rng), v = unit(n, rng);
        const Eigen::MatrixXd S = d * u * v.transpose();
        const auto res = shrink::eoptshrink(S + gaussian(p, n, rng, sigma));
        ASSERT_EQ(res.r_hat, 1);
        worst = std::max(worst, (res.S_hat - S).norm() / d);
    }
    // Spiked-model cosines at scaled strength ell = d^2 / n with beta = p / n.
    const double beta = static_cast<double>(p) / n, ell = d * d / n;
    const double cu2 = (1.0 - beta / (ell * ell)) / (1.0 + beta / ell);
    const double cv2 = (1.0 - beta / (ell * ell)) / (1.0 + 1.0 / ell);
    const double floor = std::sqrt(1.0 - cu2 * cv2);
    EXPECT_LT(worst, 1.2 * floor);
}

TEST(Shrink, MatchesIndependentTranscription) {
    std::mt19937_64 rng(2024);
    for (int t = 0; t < 10; ++t) {
        const Eigen::MatrixXd X = spiked(60, 400, 1 + t % 4, 1.2 + 0.2 * t, rng);
        for (bool literal : {false, true}) {
            shrink::ShrinkOptions o;
            o.literal_m2_derivative = literal;
            const auto res = shrink::eoptshrink(X, o);
            const auto ref = oracle::eoptshrink_reference(X, o.k, literal);
            ASSERT_EQ(res.r_hat, ref.r_hat);
            EXPECT_NEAR(res.lambda_plus, static_cast<double>(ref.lambda_plus), 1e-9 * static_cast<double>(ref.lambda_plus));
            for (int i = 0; i < res.r_hat; ++i) {
                const double want = static_cast<double>(ref.d_hat[static_cast<std::size_t>(i)]);
                EXPECT_NEAR(res.d_hat[static_cast<std::size_t>(i)], want, 1e-8 * std::max(want, 1e-300));
            }
        }
    }
}

TEST(Shrink, TallInputIsTransposed) {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd X = spiked(40, 300, 2, 2.0, rng);
    const auto a = shrink::eoptshrink(X);
    const auto b = shrink::eoptshrink(X.transpose());
    ASSERT_EQ(a.r_hat, b.r_hat);
    EXPECT_LT((a.S_hat.transpose() - b.S_hat).norm(), 1e-9 * a.S_hat.norm());
}

TEST(Shrink, OrthogonalInvariance) {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd X = spiked(30, 200, 2, 2.0, rng);
    const Eigen::MatrixXd U = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(30, 30, rng)).householderQ();
    const Eigen::MatrixXd V = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(200, 200, rng)).householderQ();
    const auto a = shrink::eoptshrink(X);
    const auto b = shrink::eoptshrink(U * X * V.transpose());
    ASSERT_EQ(a.r_hat, b.r_hat);
    for (int i = 0; i < a.r_hat; ++i)
        EXPECT_NEAR(a.d_hat[static_cast<std::size_t>(i)], b.d_hat[static_cast<std::size_t>(i)], 1e-9 * a.d_hat[0]);
}

TEST(Shrink, ShrinkageIsNonExpansive) {
    std::mt19937_64 rng(21);
    int violations = 0;
    for (int t = 0; t < 100; ++t) {
        const auto res = shrink::eoptshrink(spiked(40, 250, 1 + t % 3, 1.0 + 0.05 * t, rng));
        for (int i = 0; i < res.r_hat; ++i)
            violations += res.d_hat[static_cast<std::size_t>(i)] > res.sigma[static_cast<std::size_t>(i)];
    }
    EXPECT_EQ(violations, 0);
}

TEST(Shrink, RejectsTooSmallAndNonFinite) {
    EXPECT_THROW(shrink::eoptshrink(Eigen::MatrixXd::Ones(10, 500)), ValidationError);
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(50, 500);
    X(3, 4) = std::nan("");
    EXPECT_THROW(shrink::eoptshrink(X), ValidationError);
    EXPECT_EQ(shrink::min_short_side(500, 10), 21);
}

TEST(Shrink, GroupRanges) {
    using R = std::vector<std::pair<Eigen::Index, Eigen::Index>>;
    EXPECT_EQ(shrink::group_ranges(1200, 180, 500), (R{{0, 500}, {500, 700}}));
    EXPECT_EQ(shrink::group_ranges(300, 180, 500), (R{{0, 300}}));
    EXPECT_EQ(shrink::group_ranges(1500, 180, 500), (R{{0, 500}, {500, 500}, {1000, 500}}));
}

TEST(Shrink, GroupedEqualsUngroupedForOneGroup) {
    std::mt19937_64 rng(9);
    const Eigen::MatrixXd X = spiked(50, 500, 2, 2.0, rng);
    EXPECT_EQ((shrink::shrink_grouped(X, 500) - shrink::eoptshrink(X).S_hat).norm(), 0.0);
}

TEST(Shrink, GroupedIsIndependentOfThreads) {
    std::mt19937_64 rng(10);
    const Eigen::MatrixXd X = spiked(50, 1600, 2, 2.0, rng);
    const int before = default_threads();
    set_default_threads(1);
    const Eigen::MatrixXd a = shrink::shrink_grouped(X, 500);
    set_default_threads(4);
    const Eigen::MatrixXd b = shrink::shrink_grouped(X, 500);
    set_default_threads(before);
    EXPECT_EQ((a - b).norm(), 0.0);
}

TEST(RandomizedSvd, ExactOnLowRank) {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd X = gaussian(80, 3, rng) * gaussian(3, 120, rng);
    const auto t = shrink::randomized_svd(X, 5);
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues();
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(t.s(i), s(i), 1e-10 * s(0));
}

TEST(RandomizedSvd, TopValuesWithinOnePercent) {
    std::mt19937_64 rng(2);
    Eigen::MatrixXd X = gaussian(180, 500, rng, 0.1);
    for (int i = 0; i < 12; ++i) X += (40.0 / (1 + i)) * unit(180, rng) * unit(500, rng).transpose();
    const auto t = shrink::randomized_svd(X, 30, 10, 2);
    const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(X).singularValues();
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(t.s(i), s(i), 0.01 * s(i));
}

TEST(RandomizedSvd, ZeroMatrix) {
    const auto t = shrink::randomized_svd(Eigen::MatrixXd::Zero(40, 60), 5);
    EXPECT_EQ(t.s.norm(), 0.0);
}

TEST(Shrink, RandomizedOptionAgreesWithFull) {
    std::mt19937_64 rng(12);
    const Eigen::MatrixXd X = spiked(60, 500, 2, 3.0, rng);
    shrink::ShrinkOptions o;
    o.randomized = true;
    const auto a = shrink::eoptshrink(X);
    const auto b = shrink::eoptshrink(X, o);
    ASSERT_EQ(a.r_hat, b.r_hat);
    // Approximate singular vectors: agreement is at the level of the range finder.
    EXPECT_LT((a.S_hat - b.S_hat).norm(), 0.05 * a.S_hat.norm());
}
