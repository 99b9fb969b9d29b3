#include "stimclean/shrink.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "stimclean/core.hpp"
#include "stimclean/parallel.hpp"

namespace stimclean::shrink {

namespace {

// Nearest integer, halves rounded up.
int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

struct Spectrum {
    Eigen::MatrixXd U, V;  // leading singular vectors (at least r_hat columns)
    Eigen::VectorXd s;     // all singular values, descending
};

Spectrum full_spectrum(const Eigen::MatrixXd& Y) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.matrixV(), svd.singularValues()};
}

Eigen::VectorXd singular_values_only(const Eigen::MatrixXd& Y) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Y * Y.transpose(), Eigen::EigenvaluesOnly);
    Eigen::VectorXd ev = eig.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::sqrt(std::max(ev(i), 0.0));
    return ev;
}

}  // namespace

int min_short_side(Eigen::Index long_side, int k) {
    const int r4 = round_half_up(std::pow(static_cast<double>(long_side), 0.25));
    return std::max(2 * r4 + 1, 2 * k + 1);
}

ShrinkResult eoptshrink(const Eigen::MatrixXd& X_in, const ShrinkOptions& opts) {
    if (!X_in.allFinite()) throw ValidationError("eoptshrink: non-finite input");
    if (opts.k < 1) throw ValidationError("eoptshrink: k must be >= 1");
    const bool transposed = X_in.rows() > X_in.cols();
    const Eigen::MatrixXd X = transposed ? Eigen::MatrixXd(X_in.transpose()) : X_in;
    const Eigen::Index p = X.rows();
    const Eigen::Index n = X.cols();
    const int need = min_short_side(n, opts.k);
    if (p < need)
        throw ValidationError("eoptshrink: matrix " + std::to_string(X_in.rows()) + "x" + std::to_string(X_in.cols()) +
                              " too small; the shorter side must be at least " + std::to_string(need));

    ShrinkResult res;
    res.S_hat = Eigen::MatrixXd::Zero(X_in.rows(), X_in.cols());
    res.beta = static_cast<double>(p) / static_cast<double>(n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    const Eigen::MatrixXd Y = X * scale;

    Spectrum sp;
    if (opts.randomized) {
        sp.s = singular_values_only(Y);
    } else {
        sp = full_spectrum(Y);
    }
    res.sigma.assign(sp.s.data(), sp.s.data() + sp.s.size());
    std::vector<double> lam(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) lam[static_cast<std::size_t>(i)] = sp.s(i) * sp.s(i);
    // 1-based eigenvalue access.
    auto L = [&](int j) { return lam[static_cast<std::size_t>(j - 1)]; };

    const double c = std::pow(2.0, 2.0 / 3.0) - 1.0;
    const int r4 = round_half_up(std::pow(static_cast<double>(n), 0.25));
    res.lambda_plus = L(r4 + 1) + (L(r4 + 1) - L(2 * r4 + 1)) / c;
    const double margin = std::pow(static_cast<double>(n), -1.0 / 3.0);
    int r_hat = 0;
    while (r_hat < p && L(r_hat + 1) > res.lambda_plus + margin) ++r_hat;
    res.r_hat = r_hat;
    if (r_hat == 0) return res;

    const int k = std::max(opts.k, r_hat);
    if (p < 2 * k + 1)
        throw ValidationError("eoptshrink: estimated rank " + std::to_string(r_hat) +
                              " needs the shorter side to be at least " + std::to_string(2 * k + 1));
    std::vector<double> surrogate(static_cast<std::size_t>(k));
    const double gap = L(k + 1) - L(2 * k + 1);
    for (int j = 1; j <= k; ++j) {
        const double frac = static_cast<double>(j - 1) / static_cast<double>(k);
        surrogate[static_cast<std::size_t>(j - 1)] = L(k + 1) + (1.0 - std::pow(frac, 2.0 / 3.0)) / c * gap;
    }

    const double pd = static_cast<double>(p);
    const double beta = res.beta;
    res.d_hat.resize(static_cast<std::size_t>(r_hat));
    for (int i = 1; i <= r_hat; ++i) {
        const double li = L(i);
        double m1 = 0.0, dm1 = 0.0;
        for (int j = 1; j <= p; ++j) {
            const double lj = j <= k ? surrogate[static_cast<std::size_t>(j - 1)] : L(j);
            const double inv = 1.0 / (lj - li);
            m1 += inv;
            dm1 += inv * inv;
        }
        m1 /= pd;
        dm1 /= pd;
        const double m2 = -(1.0 - beta) / li + beta * m1;
        const double dm2 = (1.0 - beta) / (li * li) + beta * (opts.literal_m2_derivative ? m1 : dm1);
        const double T = li * m1 * m2;
        const double dT = m1 * m2 + li * dm1 * m2 + li * m1 * dm2;
        const double phi2 = 1.0 / T;
        const double a1 = m1 / (phi2 * dT);
        const double a2 = m2 / (phi2 * dT);
        double d = std::sqrt(phi2) * std::sqrt(a1 * a2);
        if (!std::isfinite(d) || T <= 0.0 || a1 * a2 < 0.0) d = 0.0;
        res.d_hat[static_cast<std::size_t>(i - 1)] = d;
    }

    if (opts.randomized) {
        const int budget = std::min<int>(static_cast<int>(p) - 1, r_hat + 5);
        const TruncatedSvd t = randomized_svd(Y, budget, opts.oversample, opts.power_iters, opts.seed);
        sp.U = t.U;
        sp.V = t.V;
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, n);
    for (int i = 0; i < r_hat; ++i) {
        const double d = res.d_hat[static_cast<std::size_t>(i)];
        if (d != 0.0) S.noalias() += d * sp.U.col(i) * sp.V.col(i).transpose();
    }
    S /= scale;
    res.S_hat = transposed ? Eigen::MatrixXd(S.transpose()) : S;
    return res;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> group_ranges(Eigen::Index n, Eigen::Index p, Eigen::Index group) {
    if (group < 1) throw ValidationError("shrink_grouped: group size must be >= 1");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    for (Eigen::Index s = 0; s < n; s += group) out.emplace_back(s, std::min(group, n - s));
    if (out.size() > 1 && out.back().second < 2 * p) {
        out[out.size() - 2].second += out.back().second;
        out.pop_back();
    }
    return out;
}

Eigen::MatrixXd shrink_grouped(const Eigen::MatrixXd& X, Eigen::Index group, const ShrinkOptions& opts) {
    const auto ranges = group_ranges(X.cols(), X.rows(), group);
    Eigen::MatrixXd out(X.rows(), X.cols());
    parallel_for(ranges.size(), [&](std::size_t g) {
        const auto [s, len] = ranges[g];
        out.middleCols(s, len) = eoptshrink(X.middleCols(s, len), opts).S_hat;
    });
    return out;
}

TruncatedSvd randomized_svd(const Eigen::MatrixXd& X, int rank_budget, int oversample, int power_iters,
                            std::uint64_t seed) {
    const Eigen::Index p = X.rows(), n = X.cols();
    if (rank_budget < 1 || rank_budget >= std::min(p, n))
        throw ValidationError("randomized_svd: rank_budget must be in [1, min(p, n))");
    const Eigen::Index l = std::min<Eigen::Index>(rank_budget + std::max(oversample, 0), std::min(p, n));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd omega(n, l);
    for (Eigen::Index j = 0; j < l; ++j)
        for (Eigen::Index i = 0; i < n; ++i) omega(i, j) = gauss(rng);

    auto orth = [](const Eigen::MatrixXd& A) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols()));
    };
    Eigen::MatrixXd Q = orth(X * omega);
    for (int it = 0; it < power_iters; ++it) {
        Q = orth(X.transpose() * Q);
        Q = orth(X * Q);
    }
    const Eigen::MatrixXd B = Q.transpose() * X;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
    TruncatedSvd out;
    out.U = (Q * svd.matrixU()).leftCols(rank_budget);
    out.s = svd.singularValues().head(rank_budget);
    out.V = svd.matrixV().leftCols(rank_budget);
    return out;
}

}  // namespace stimclean::shrink
