#pragma once

// Open-world centroid-based concept learning.

#include "owl/learners/augment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace owl {

struct Centroid {
    Vector mean;
    int count = 1;
};

struct CbclState {
    int dim = 0;
    double distance_threshold = 10.0;
    int neighbors = 5;
    std::vector<int> class_ids;
    std::vector<std::vector<Centroid>> centroids;  // per class

    Index class_count() const { return static_cast<Index>(centroids.size()); }

    int class_total(std::size_t cls) const {
        int n = 0;
        for (const auto& c : centroids[cls]) n += c.count;
        return n;
    }
};

inline constexpr double kCentroidDistanceFloor = 1e-12;

// Points are visited in order. A point farther than the threshold from every
// centroid of the class spawns a new centroid; otherwise it is folded into
// the nearest one as a count-weighted running mean.
inline CbclState ocbcl_update(CbclState state, const RowMatrix& cluster, int class_id) {
    require(cluster.rows() > 0, "ocbcl_update: empty cluster");
    require(state.distance_threshold > 0.0 && state.neighbors >= 1, "ocbcl_update: bad parameters");
    if (state.dim == 0) state.dim = static_cast<int>(cluster.cols());
    require_dim(cluster.cols(), state.dim, "ocbcl_update");
    require(std::find(state.class_ids.begin(), state.class_ids.end(), class_id) == state.class_ids.end(),
            "ocbcl_update: duplicate class id");
    std::vector<Centroid> centers;
    for (Index r = 0; r < cluster.rows(); ++r) {
        const Vector f = cluster.row(r).transpose();
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const double d = (f - centers[c].mean).norm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (centers.empty() || best_d > state.distance_threshold) {
            centers.push_back({f, 1});
        } else {
            auto& c = centers[best];
            c.mean = (static_cast<double>(c.count) * c.mean + f) / static_cast<double>(c.count + 1);
            ++c.count;
        }
    }
    state.class_ids.push_back(class_id);
    state.centroids.push_back(std::move(centers));
    return state;
}

// r_i = sum over class-i centroids among the k nearest of 1 / (n_i * d), with
// n_i the class's sample count; classes absent from the k nearest get -inf.
// q = softmax(r), then augmented.
inline AugmentedProbs ocbcl_predict(const CbclState& state, const Vector& f) {
    if (state.dim != 0) require_dim(f.size(), state.dim, "ocbcl_predict");
    if (state.class_count() < kMinClassesForPrediction) return AugmentedProbs::unknown_only(state.class_count());

    struct Hit {
        double distance;
        std::size_t cls;
    };
    std::vector<Hit> hits;
    for (std::size_t c = 0; c < state.centroids.size(); ++c)
        for (const auto& centroid : state.centroids[c]) hits.push_back({(f - centroid.mean).norm(), c});
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(state.neighbors), hits.size());
    // stable: equal distances keep class order
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.distance < b.distance; });

    Vector r = Vector::Constant(state.class_count(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < k; ++i) {
        const auto cls = static_cast<Index>(hits[i].cls);
        const double n = static_cast<double>(state.class_total(hits[i].cls));
        const double term = 1.0 / (n * std::max(hits[i].distance, kCentroidDistanceFloor));
        r[cls] = std::isfinite(r[cls]) ? r[cls] + term : term;
    }
    return augment_probabilities(softmax(r));
}

}  // namespace owl
