#pragma once

#include "owl/types.hpp"

#include <algorithm>

namespace owl {

// Probability over [unknown, class_0, ..., class_{m-1}].
struct AugmentedProbs {
    double p_unknown = 1.0;
    Vector p_classes;

    // All mass on unknown, zero over `classes` entries.
    static AugmentedProbs unknown_only(Index classes) { return {1.0, Vector::Zero(classes)}; }

    Vector full() const {
        Vector v(p_classes.size() + 1);
        v[0] = p_unknown;
        v.tail(p_classes.size()) = p_classes;
        return v;
    }

    double max_class() const { return p_classes.size() == 0 ? 0.0 : p_classes.maxCoeff(); }
};

// Learners that need a few classes before their posteriors mean anything
// report unknown below this count.
inline constexpr Index kMinClassesForPrediction = 3;

// p = [1 - max q, q] / (1 - max q + sum q)
inline AugmentedProbs augment_probabilities(const Vector& q) {
    require(q.size() > 0, "augment_probabilities: empty q");
    const double top = q.maxCoeff();
    const double denom = 1.0 - top + q.sum();
    return {(1.0 - top) / denom, q / denom};
}

}  // namespace owl
