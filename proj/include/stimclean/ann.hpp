#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace stimclean::ann {

/// Counter-based 64-bit generator: output i of stream s is a SplitMix64 hash of
/// (seed, s, i), so every tree draws from its own reproducible stream.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}
    std::uint64_t next() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
    /// Uniform in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }
    static std::uint64_t mix(std::uint64_t z);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

struct ForestParams {
    int trees = 50;
    int leaf_capacity = 500;
    std::uint64_t seed = 0;
    int max_retries = 8;
};

/// Reusable per-thread buffers for query_candidates.
struct QueryScratch {
    std::vector<std::uint32_t> stamp;
    std::uint32_t epoch = 0;
    std::vector<std::uint32_t> out;
};

/// Random-projection forest over the columns of a dim x n feature matrix.
/// Hyperplanes are stored in float32 so a reloaded forest routes identically.
class ProjectionForest {
public:
    struct Node {
        std::int32_t left = -1;   // child node index, -1 for a leaf
        std::int32_t right = -1;
        std::uint32_t begin = 0;  // leaf: range into leaf_items; internal: plane index
        std::uint32_t count = 0;
    };

    ProjectionForest() = default;

    static ProjectionForest build(const Eigen::MatrixXd& pool, const ForestParams& params);

    int trees() const { return static_cast<int>(roots_.size()); }
    int leaf_capacity() const { return leaf_capacity_; }
    int dim() const { return dim_; }
    std::size_t size() const { return n_; }

    /// Leaf index list reached by `w` in tree t.
    std::span<const std::uint32_t> route(int t, std::span<const double> w) const;

    /// Deduplicated union of leaf contents across trees, ascending.
    std::vector<std::uint32_t> query_candidates(std::span<const double> w) const;
    /// Same, reusing scratch; returned span is valid until the next call with `s`.
    std::span<const std::uint32_t> query_candidates(std::span<const double> w, QueryScratch& s) const;

    /// Leaves of tree t as index lists (structural audits).
    std::vector<std::vector<std::uint32_t>> leaves(int t) const;

    void save(const std::filesystem::path& path) const;
    static ProjectionForest load(const std::filesystem::path& path);

private:
    int dim_ = 0;
    int leaf_capacity_ = 0;
    std::size_t n_ = 0;
    std::vector<std::uint32_t> roots_;
    std::vector<Node> nodes_;
    std::vector<float> planes_;             // per plane: midpoint then unit normal, 2*dim floats
    std::vector<std::uint32_t> leaf_items_;

    bool goes_left(std::uint32_t plane, std::span<const double> w) const;
};

/// The K candidates closest to w (Euclidean over pool columns), nearest first,
/// ties to the lower index. Returns all candidates when fewer than K.
std::vector<std::uint32_t> knn(const Eigen::MatrixXd& pool, std::span<const std::uint32_t> candidates,
                               std::span<const double> w, std::size_t K);

/// Exhaustive variant over every pool column.
std::vector<std::uint32_t> knn_exhaustive(const Eigen::MatrixXd& pool, std::span<const double> w, std::size_t K);

}  // namespace stimclean::ann
