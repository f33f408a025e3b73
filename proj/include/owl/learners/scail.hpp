#pragma once

// Open-world SCAIL: a linear head over discovered classes, retrained on a
// small play buffer plus the new clusters, with old classifiers rescaled by
// the ratio of rank-wise mean absolute weights.

#include "owl/learners/augment.hpp"
#include "owl/linear_head.hpp"

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

namespace owl {

struct ScailState {
    int dim = 0;
    int buffer_cap = 20;
    LinearTrainOptions training{200, 0.5, 1e-4};
    LinearHead head;
    std::vector<int> class_ids;
    std::vector<Vector> weight_stats;  // per class, sorted |w| (descending) at insertion
    std::vector<double> bias_stats;    // per class, |b| at insertion
    std::vector<RowMatrix> buffer;     // per class exemplars, at most buffer_cap rows

    // Statistics of the classes added by the most recent fit step.
    Vector current_weight_stats;
    double current_bias_stat = 0.0;
    Index old_class_count = 0;  // classes that existed before that step

    Index class_count() const { return static_cast<Index>(class_ids.size()); }
};

// Rank-wise mean over rows of the descending-sorted absolute weights.
inline Vector mean_sorted_abs_weights(const Matrix& rows) {
    require(rows.rows() > 0, "mean_sorted_abs_weights: no rows");
    Vector acc = Vector::Zero(rows.cols());
    for (Index r = 0; r < rows.rows(); ++r) {
        std::vector<double> a(static_cast<std::size_t>(rows.cols()));
        for (Index c = 0; c < rows.cols(); ++c) a[static_cast<std::size_t>(c)] = std::abs(rows(r, c));
        std::sort(a.begin(), a.end(), std::greater<>());
        for (Index c = 0; c < rows.cols(); ++c) acc[c] += a[static_cast<std::size_t>(c)];
    }
    return acc / static_cast<double>(rows.rows());
}

// w_j <- w_j * current[r(j)] / stored[r(j)], r(j) the descending rank of
// |w_j| within the row (ties keep index order). Zero stored entries leave
// their coordinate unscaled.
inline Vector rescale_weights(const Vector& w, const Vector& stored, const Vector& current) {
    require(w.size() == stored.size() && w.size() == current.size(), "rescale_weights: length mismatch");
    std::vector<Index> order(static_cast<std::size_t>(w.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return std::abs(w[a]) > std::abs(w[b]); });
    Vector out = w;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const Index j = order[rank];
        const auto r = static_cast<Index>(rank);
        if (stored[r] != 0.0) out[j] = w[j] * current[r] / stored[r];
    }
    return out;
}

struct LabeledCluster {
    RowMatrix features;
    int class_id = 0;
};

// Retrains the head on buffer + new clusters, records the insertion
// statistics of the new classes and refreshes the play buffer.
inline ScailState oscail_fit_step(ScailState state, const std::vector<LabeledCluster>& clusters) {
    require(!clusters.empty(), "oscail_fit_step: no clusters");
    for (const auto& c : clusters) {
        require(c.features.rows() > 0, "oscail_fit_step: empty cluster");
        if (state.dim == 0) state.dim = static_cast<int>(c.features.cols());
        require_dim(c.features.cols(), state.dim, "oscail_fit_step");
        require(std::find(state.class_ids.begin(), state.class_ids.end(), c.class_id) == state.class_ids.end(),
                "oscail_fit_step: duplicate class id");
    }
    const Index old_count = state.class_count();
    const Index new_count = old_count + static_cast<Index>(clusters.size());

    LinearHead head{Matrix::Zero(new_count, state.dim), Vector::Zero(new_count)};
    if (old_count > 0) {
        head.weights.topRows(old_count) = state.head.weights;
        head.bias.head(old_count) = state.head.bias;
    }

    Index rows = 0;
    for (const auto& b : state.buffer) rows += b.rows();
    for (const auto& c : clusters) rows += c.features.rows();
    RowMatrix x(rows, state.dim);
    std::vector<int> y;
    y.reserve(static_cast<std::size_t>(rows));
    Index at = 0;
    auto append = [&](const RowMatrix& block, int label) {
        x.middleRows(at, block.rows()) = block;
        at += block.rows();
        y.insert(y.end(), static_cast<std::size_t>(block.rows()), label);
    };
    for (std::size_t c = 0; c < state.buffer.size(); ++c) append(state.buffer[c], static_cast<int>(c));
    for (std::size_t c = 0; c < clusters.size(); ++c)
        append(clusters[c].features, static_cast<int>(old_count + static_cast<Index>(c)));
    fit_linear_head(head, x, y, state.training);

    const Matrix new_rows = head.weights.bottomRows(static_cast<Index>(clusters.size()));
    state.current_weight_stats = mean_sorted_abs_weights(new_rows);
    state.current_bias_stat = head.bias.tail(static_cast<Index>(clusters.size())).cwiseAbs().mean();
    state.old_class_count = old_count;
    state.head = std::move(head);

    for (const auto& c : clusters) {
        state.class_ids.push_back(c.class_id);
        state.weight_stats.push_back(state.current_weight_stats);
        state.bias_stats.push_back(state.current_bias_stat);
        const Index keep = std::min<Index>(state.buffer_cap, c.features.rows());
        state.buffer.emplace_back(c.features.topRows(keep));
    }
    return state;
}

inline ScailState oscail_fit_step(ScailState state, const RowMatrix& cluster, int class_id) {
    return oscail_fit_step(std::move(state), std::vector<LabeledCluster>{{cluster, class_id}});
}

// Rescales every class that existed before the latest fit step.
inline ScailState oscail_rescale(ScailState state) {
    require(state.old_class_count > 0, "oscail_rescale: no old classes");
    require(state.current_weight_stats.size() == state.dim, "oscail_rescale: no statistics from the current step");
    for (Index i = 0; i < state.old_class_count; ++i) {
        const auto k = static_cast<std::size_t>(i);
        state.head.weights.row(i) =
            rescale_weights(state.head.weights.row(i).transpose(), state.weight_stats[k], state.current_weight_stats)
                .transpose();
        if (state.bias_stats[k] != 0.0) state.head.bias[i] *= state.current_bias_stat / state.bias_stats[k];
    }
    return state;
}

inline AugmentedProbs oscail_predict(const ScailState& state, const Vector& f) {
    if (state.dim != 0) require_dim(f.size(), state.dim, "oscail_predict");
    if (state.class_count() < kMinClassesForPrediction) return AugmentedProbs::unknown_only(state.class_count());
    return augment_probabilities(state.head.probabilities(f));
}

}  // namespace owl
