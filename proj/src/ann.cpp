#include "stimclean/ann.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "stimclean/core.hpp"
#include "stimclean/parallel.hpp"

namespace stimclean::ann {

std::uint64_t CounterRng::mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

struct TreeBuild {
    std::vector<ProjectionForest::Node> nodes;
    std::vector<float> planes;
    std::vector<std::uint32_t> items;
};

double side(const float* plane, int dim, const double* x) {
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) acc += (x[d] - static_cast<double>(plane[d])) * static_cast<double>(plane[dim + d]);
    return acc;
}

std::int32_t grow(const Eigen::MatrixXd& pool, std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi,
                  const ForestParams& params, CounterRng& rng, TreeBuild& tb) {
    const int dim = static_cast<int>(pool.rows());
    const std::size_t count = hi - lo;
    const auto node_id = static_cast<std::int32_t>(tb.nodes.size());
    tb.nodes.emplace_back();

    auto make_leaf = [&] {
        ProjectionForest::Node& nd = tb.nodes[static_cast<std::size_t>(node_id)];
        nd.begin = static_cast<std::uint32_t>(tb.items.size());
        nd.count = static_cast<std::uint32_t>(count);
        tb.items.insert(tb.items.end(), idx.begin() + static_cast<std::ptrdiff_t>(lo),
                        idx.begin() + static_cast<std::ptrdiff_t>(hi));
        return node_id;
    };
    if (count <= static_cast<std::size_t>(params.leaf_capacity) || count < 2) return make_leaf();

    std::vector<float> plane(static_cast<std::size_t>(2 * dim));
    for (int attempt = 0; attempt < params.max_retries; ++attempt) {
        const std::size_t a = lo + rng.below(count);
        std::size_t b = lo + rng.below(count - 1);
        if (b >= a) ++b;
        const double* wa = pool.col(idx[a]).data();
        const double* wb = pool.col(idx[b]).data();
        double norm = 0.0;
        for (int d = 0; d < dim; ++d) norm += (wa[d] - wb[d]) * (wa[d] - wb[d]);
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) continue;
        bool zero_normal = true;
        for (int d = 0; d < dim; ++d) {
            plane[static_cast<std::size_t>(d)] = static_cast<float>(0.5 * (wa[d] + wb[d]));
            plane[static_cast<std::size_t>(dim + d)] = static_cast<float>((wa[d] - wb[d]) / norm);
            if (plane[static_cast<std::size_t>(dim + d)] != 0.0f) zero_normal = false;
        }
        if (zero_normal) continue;
        const auto mid = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                               idx.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::uint32_t i) {
                                                   return side(plane.data(), dim, pool.col(i).data()) <= 0.0;
                                               });
        const auto split = static_cast<std::size_t>(mid - idx.begin());
        if (split == lo || split == hi) continue;

        const auto plane_id = static_cast<std::uint32_t>(tb.planes.size() / static_cast<std::size_t>(2 * dim));
        tb.planes.insert(tb.planes.end(), plane.begin(), plane.end());
        tb.nodes[static_cast<std::size_t>(node_id)].begin = plane_id;
        const std::int32_t l = grow(pool, idx, lo, split, params, rng, tb);
        const std::int32_t r = grow(pool, idx, split, hi, params, rng, tb);
        tb.nodes[static_cast<std::size_t>(node_id)].left = l;
        tb.nodes[static_cast<std::size_t>(node_id)].right = r;
        return node_id;
    }
    return make_leaf();
}

}  // namespace

ProjectionForest ProjectionForest::build(const Eigen::MatrixXd& pool, const ForestParams& params) {
    if (pool.cols() < 2) throw ValidationError("forest needs at least two pooled points");
    if (params.trees < 1 || params.leaf_capacity < 1) throw ValidationError("forest needs trees >= 1 and M' >= 1");
    if (pool.cols() > static_cast<Eigen::Index>(UINT32_MAX)) throw ValidationError("pool too large");
    if (!pool.allFinite()) throw ValidationError("non-finite pooled features");

    const auto T = static_cast<std::size_t>(params.trees);
    std::vector<TreeBuild> built(T);
    parallel_for(T, [&](std::size_t t) {
        std::vector<std::uint32_t> idx(static_cast<std::size_t>(pool.cols()));
        std::iota(idx.begin(), idx.end(), 0u);
        CounterRng rng(params.seed, t);
        grow(pool, idx, 0, idx.size(), params, rng, built[t]);
    });

    ProjectionForest f;
    f.dim_ = static_cast<int>(pool.rows());
    f.leaf_capacity_ = params.leaf_capacity;
    f.n_ = static_cast<std::size_t>(pool.cols());
    const std::size_t plane_len = static_cast<std::size_t>(2 * f.dim_);
    for (auto& tb : built) {
        const auto node_base = static_cast<std::int32_t>(f.nodes_.size());
        const auto plane_base = static_cast<std::uint32_t>(plane_len ? f.planes_.size() / plane_len : 0);
        const auto item_base = static_cast<std::uint32_t>(f.leaf_items_.size());
        f.roots_.push_back(static_cast<std::uint32_t>(node_base));
        for (Node nd : tb.nodes) {
            if (nd.left < 0) {
                nd.begin += item_base;
            } else {
                nd.left += node_base;
                nd.right += node_base;
                nd.begin += plane_base;
            }
            f.nodes_.push_back(nd);
        }
        f.planes_.insert(f.planes_.end(), tb.planes.begin(), tb.planes.end());
        f.leaf_items_.insert(f.leaf_items_.end(), tb.items.begin(), tb.items.end());
    }
    return f;
}

bool ProjectionForest::goes_left(std::uint32_t plane, std::span<const double> w) const {
    return side(planes_.data() + static_cast<std::size_t>(plane) * static_cast<std::size_t>(2 * dim_), dim_,
                w.data()) <= 0.0;
}

std::span<const std::uint32_t> ProjectionForest::route(int t, std::span<const double> w) const {
    if (static_cast<int>(w.size()) != dim_)
        throw ValidationError("query has " + std::to_string(w.size()) + " features, forest expects " +
                              std::to_string(dim_));
    const Node* nd = &nodes_[roots_[static_cast<std::size_t>(t)]];
    while (nd->left >= 0) nd = &nodes_[static_cast<std::size_t>(goes_left(nd->begin, w) ? nd->left : nd->right)];
    return {leaf_items_.data() + nd->begin, nd->count};
}

std::span<const std::uint32_t> ProjectionForest::query_candidates(std::span<const double> w, QueryScratch& s) const {
    if (s.stamp.size() != n_) {
        s.stamp.assign(n_, 0);
        s.epoch = 0;
    }
    if (++s.epoch == 0) {
        std::fill(s.stamp.begin(), s.stamp.end(), 0);
        s.epoch = 1;
    }
    s.out.clear();
    std::size_t hits = 0;
    for (int t = 0; t < trees(); ++t) {
        for (std::uint32_t i : route(t, w)) {
            if (s.stamp[i] != s.epoch) {
                s.stamp[i] = s.epoch;
                ++hits;
            }
        }
    }
    // A linear sweep of the stamps is cheaper than sorting once the union is large.
    s.out.reserve(hits);
    for (std::size_t i = 0; i < n_; ++i)
        if (s.stamp[i] == s.epoch) s.out.push_back(static_cast<std::uint32_t>(i));
    return s.out;
}

std::vector<std::uint32_t> ProjectionForest::query_candidates(std::span<const double> w) const {
    QueryScratch s;
    const auto c = query_candidates(w, s);
    return {c.begin(), c.end()};
}

std::vector<std::vector<std::uint32_t>> ProjectionForest::leaves(int t) const {
    std::vector<std::vector<std::uint32_t>> out;
    std::vector<std::uint32_t> stack{roots_[static_cast<std::size_t>(t)]};
    while (!stack.empty()) {
        const Node& nd = nodes_[stack.back()];
        stack.pop_back();
        if (nd.left < 0) {
            out.emplace_back(leaf_items_.begin() + nd.begin, leaf_items_.begin() + nd.begin + nd.count);
        } else {
            stack.push_back(static_cast<std::uint32_t>(nd.right));
            stack.push_back(static_cast<std::uint32_t>(nd.left));
        }
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'C', 'F', 'O', 'R', 'E', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated forest file");
    return v;
}

template <class T>
std::vector<T> get_vec(std::istream& in, std::uint64_t limit) {
    const auto n = get<std::uint64_t>(in);
    if (n > limit) throw ValidationError("corrupt forest file (array length)");
    std::vector<T> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw IoError("truncated forest file");
    return v;
}

}  // namespace

void ProjectionForest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(trees()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(leaf_capacity_));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    put<std::uint64_t>(out, n_);
    put_vec(out, roots_);
    put_vec(out, nodes_);
    put_vec(out, planes_);
    put_vec(out, leaf_items_);
    if (!out) throw IoError("write failed for " + path.string());
}

ProjectionForest ProjectionForest::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ValidationError("not a forest file");
    if (get<std::uint32_t>(in) != kVersion) throw ValidationError("unsupported forest version");
    ProjectionForest f;
    const auto T = get<std::uint32_t>(in);
    f.leaf_capacity_ = static_cast<int>(get<std::uint32_t>(in));
    f.dim_ = static_cast<int>(get<std::uint32_t>(in));
    f.n_ = get<std::uint64_t>(in);
    const std::uint64_t limit = std::uint64_t{1} << 36;
    f.roots_ = get_vec<std::uint32_t>(in, limit);
    f.nodes_ = get_vec<Node>(in, limit);
    f.planes_ = get_vec<float>(in, limit);
    f.leaf_items_ = get_vec<std::uint32_t>(in, limit);
    if (f.roots_.size() != T) throw ValidationError("corrupt forest file (tree count)");
    for (auto r : f.roots_)
        if (r >= f.nodes_.size()) throw ValidationError("corrupt forest file (root)");
    for (const Node& nd : f.nodes_) {
        if (nd.left < 0) {
            if (static_cast<std::uint64_t>(nd.begin) + nd.count > f.leaf_items_.size())
                throw ValidationError("corrupt forest file (leaf range)");
        } else if (static_cast<std::size_t>(nd.left) >= f.nodes_.size() ||
                   static_cast<std::size_t>(nd.right) >= f.nodes_.size() ||
                   (static_cast<std::size_t>(nd.begin) + 1) * static_cast<std::size_t>(2 * f.dim_) > f.planes_.size()) {
            throw ValidationError("corrupt forest file (node)");
        }
    }
    for (auto i : f.leaf_items_)
        if (i >= f.n_) throw ValidationError("corrupt forest file (leaf index)");
    return f;
}

std::vector<std::uint32_t> knn(const Eigen::MatrixXd& pool, std::span<const std::uint32_t> candidates,
                               std::span<const double> w, std::size_t K) {
    if (candidates.empty()) throw ValidationError("knn: empty candidate set");
    if (static_cast<Eigen::Index>(w.size()) != pool.rows()) throw ValidationError("knn: dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> q(w.data(), static_cast<Eigen::Index>(w.size()));
    std::vector<std::pair<double, std::uint32_t>> d;
    d.reserve(candidates.size());
    for (std::uint32_t i : candidates) d.emplace_back((pool.col(i) - q).squaredNorm(), i);
    const std::size_t k = std::min(K, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::uint32_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
    return out;
}

std::vector<std::uint32_t> knn_exhaustive(const Eigen::MatrixXd& pool, std::span<const double> w, std::size_t K) {
    std::vector<std::uint32_t> all(static_cast<std::size_t>(pool.cols()));
    std::iota(all.begin(), all.end(), 0u);
    return knn(pool, all, w, K);
}

}  // namespace stimclean::ann
