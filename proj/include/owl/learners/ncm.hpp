#pragma once

// Open-world nearest class mean.

#include "owl/learners/augment.hpp"

#include <algorithm>
#include <vector>

namespace owl {

struct NcmState {
    int dim = 0;
    std::vector<int> class_ids;
    std::vector<Vector> means;
    std::vector<int> counts;

    Index class_count() const { return static_cast<Index>(means.size()); }
};

inline Vector row_mean(const RowMatrix& rows) { return rows.colwise().mean().transpose(); }

inline NcmState oncm_update(NcmState state, const RowMatrix& cluster, int class_id) {
    require(cluster.rows() > 0, "oncm_update: empty cluster");
    if (state.dim == 0) state.dim = static_cast<int>(cluster.cols());
    require_dim(cluster.cols(), state.dim, "oncm_update");
    require(std::find(state.class_ids.begin(), state.class_ids.end(), class_id) == state.class_ids.end(),
            "oncm_update: duplicate class id");
    state.class_ids.push_back(class_id);
    state.means.push_back(row_mean(cluster));
    state.counts.push_back(static_cast<int>(cluster.rows()));
    return state;
}

// q_i = softmax(-||f - mu_i||), then augmented.
inline AugmentedProbs oncm_predict(const NcmState& state, const Vector& f) {
    if (state.dim != 0) require_dim(f.size(), state.dim, "oncm_predict");
    if (state.class_count() < kMinClassesForPrediction) return AugmentedProbs::unknown_only(state.class_count());
    Vector neg(state.class_count());
    for (Index i = 0; i < neg.size(); ++i) neg[i] = -(f - state.means[static_cast<std::size_t>(i)]).norm();
    return augment_probabilities(softmax(neg));
}

}  // namespace owl
