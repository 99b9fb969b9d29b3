#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace stimclean::shrink {

struct ShrinkOptions {
    /// Number of top bulk eigenvalues replaced by surrogates.
    int k = 10;
    /// Use m2' = (1-beta)/l^2 + beta*m1 exactly as printed instead of beta*m1'.
    bool literal_m2_derivative = false;
    /// Take the retained singular vectors from randomized_svd; the eigenvalue
    /// bulk still comes from the full spectrum.
    bool randomized = false;
    int oversample = 10;
    int power_iters = 2;
    std::uint64_t seed = 0;
};

/// Spectral quantities are reported for the scaled matrix X / sqrt(n) (after
/// transposing so that p <= n); S_hat is in the units of the input.
struct ShrinkResult {
    Eigen::MatrixXd S_hat;
    int r_hat = 0;
    double lambda_plus = 0.0;
    std::vector<double> d_hat;   // r_hat shrunken singular values
    std::vector<double> sigma;   // all singular values, descending
    double beta = 0.0;           // min(p,n) / max(p,n)
};

/// Smallest min(p, n) the index arithmetic supports for a given max(p, n) and k.
int min_short_side(Eigen::Index long_side, int k);

/// Throws ValidationError for non-finite input or a matrix too small for the
/// threshold and surrogate indices.
ShrinkResult eoptshrink(const Eigen::MatrixXd& X, const ShrinkOptions& opts = {});

/// Column ranges [start, start+size) used by shrink_grouped.
std::vector<std::pair<Eigen::Index, Eigen::Index>> group_ranges(Eigen::Index n, Eigen::Index p, Eigen::Index group);

/// eoptshrink over consecutive column groups; a short last group is merged into
/// the previous one. Groups run on the default worker pool.
Eigen::MatrixXd shrink_grouped(const Eigen::MatrixXd& X, Eigen::Index group = 500, const ShrinkOptions& opts = {});

struct TruncatedSvd {
    Eigen::MatrixXd U;   // p x r
    Eigen::VectorXd s;   // r, descending
    Eigen::MatrixXd V;   // n x r
};

/// Halko-Martinsson-Tropp range finder with power iterations.
TruncatedSvd randomized_svd(const Eigen::MatrixXd& X, int rank_budget, int oversample = 10, int power_iters = 2,
                            std::uint64_t seed = 0);

}  // namespace stimclean::shrink
