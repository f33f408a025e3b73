#pragma once

// First-neighbor clustering (FINCH) and partition selection.

#include "owl/json_enum.hpp"
#include "owl/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace owl {

enum class FinchMetric { euclidean, cosine };

OWL_JSON_ENUM(FinchMetric, {{FinchMetric::euclidean, "euclidean"}, {FinchMetric::cosine, "cosine"}})

// Level 0 is the finest partition; each later level merges clusters of the
// previous one. The last level has a single cluster.
struct PartitionSet {
    std::vector<std::vector<int>> levels;  // labels per point, 0..k-1 in order of first appearance

    std::size_t size() const { return levels.size(); }

    static int cluster_count(const std::vector<int>& labels) {
        int k = 0;
        for (int l : labels) k = std::max(k, l + 1);
        return k;
    }
};

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

inline double pair_distance(const RowMatrix& x, const Vector& norms, Index i, Index j, FinchMetric metric) {
    if (metric == FinchMetric::euclidean) return (x.row(i) - x.row(j)).squaredNorm();
    return 1.0 - x.row(i).dot(x.row(j)) / (norms[i] * norms[j]);
}

// Index of each row's nearest other row; ties go to the lowest index.
inline std::vector<std::size_t> first_neighbors(const RowMatrix& x, FinchMetric metric) {
    const Index n = x.rows();
    Vector norms = x.rowwise().norm();
    for (Index i = 0; i < n; ++i) norms[i] = std::max(norms[i], 1e-12);
    std::vector<std::size_t> nn(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        Index arg = -1;
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = pair_distance(x, norms, i, j, metric);
            if (d < best || arg < 0) {
                best = d;
                arg = j;
            }
        }
        nn[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
    }
    return nn;
}

// Linking i with its first neighbor covers all three adjacency rules: mutual
// neighbors, one-way neighbors and shared neighbors end up in one component.
inline std::vector<int> first_neighbor_components(const RowMatrix& x, FinchMetric metric) {
    const auto nn = first_neighbors(x, metric);
    DisjointSets sets(nn.size());
    for (std::size_t i = 0; i < nn.size(); ++i) sets.unite(i, nn[i]);
    std::vector<int> root_label(nn.size(), -1);
    std::vector<int> labels(nn.size());
    int next = 0;
    for (std::size_t i = 0; i < nn.size(); ++i) {
        const std::size_t r = sets.find(i);
        if (root_label[r] < 0) root_label[r] = next++;
        labels[i] = root_label[r];
    }
    return labels;
}

inline RowMatrix group_means(const RowMatrix& x, const std::vector<int>& labels, int k) {
    RowMatrix m = RowMatrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        m.row(labels[i]) += x.row(static_cast<Index>(i));
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    for (int c = 0; c < k; ++c) m.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    return m;
}

}  // namespace detail

inline PartitionSet finch_partitions(const RowMatrix& points, FinchMetric metric = FinchMetric::euclidean) {
    require(points.rows() >= 2, "finch_partitions: need at least 2 points");
    PartitionSet out;
    std::vector<int> current(static_cast<std::size_t>(points.rows()));
    std::iota(current.begin(), current.end(), 0);
    RowMatrix reps = points;
    while (true) {
        const auto merged = detail::first_neighbor_components(reps, metric);
        for (int& l : current) l = merged[static_cast<std::size_t>(l)];
        const int k = PartitionSet::cluster_count(current);
        out.levels.push_back(current);
        if (k <= 1) break;
        // Next level clusters the means of the original points.
        reps = detail::group_means(points, current, k);
    }
    return out;
}

enum class PartitionMode { automatic, fp, sp };

OWL_JSON_ENUM(PartitionMode,
                             {{PartitionMode::automatic, "auto"}, {PartitionMode::fp, "FP"}, {PartitionMode::sp, "SP"}})

inline PartitionMode parse_partition_mode(const std::string& s) {
    if (s == "auto") return PartitionMode::automatic;
    if (s == "fp" || s == "FP") return PartitionMode::fp;
    if (s == "sp" || s == "SP") return PartitionMode::sp;
    throw InvalidArgument("unknown partition mode: " + s);
}

// auto: first partition when at most two exist, else the second.
// fp: always the first. sp: the second whenever it exists.
inline const std::vector<int>& select_partition(const PartitionSet& partitions,
                                                PartitionMode mode = PartitionMode::automatic) {
    require(!partitions.levels.empty(), "select_partition: empty partition set");
    const std::size_t n = partitions.size();
    std::size_t pick = 0;
    switch (mode) {
        case PartitionMode::automatic: pick = n >= 3 ? 1 : 0; break;
        case PartitionMode::fp: pick = 0; break;
        case PartitionMode::sp: pick = n >= 2 ? 1 : 0; break;
    }
    return partitions.levels[pick];
}

}  // namespace owl
