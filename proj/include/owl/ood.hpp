#pragma once

// Known-vs-unknown gating. Every detector produces a knownness score (higher
// means more likely known) which is compared against a threshold calibrated
// to a target true-positive rate on known validation data.

#include "owl/json_enum.hpp"
#include "owl/feature_io.hpp"
#include "owl/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace owl {

enum class DetectorKind { softmax, energy, evm_score };

OWL_JSON_ENUM(DetectorKind, {{DetectorKind::softmax, "softmax"},
                                            {DetectorKind::energy, "energy"},
                                            {DetectorKind::evm_score, "evm_score"}})

struct DetectorConfig {
    DetectorKind kind = DetectorKind::softmax;
    double temperature = 1.0;
    double target_tpr = 0.95;
    std::optional<double> threshold;  // set by calibrate_threshold

    void validate() const {
        require(temperature > 0.0, "DetectorConfig: temperature must be positive");
        require(target_tpr > 0.0 && target_tpr <= 1.0, "DetectorConfig: target_tpr must be in (0, 1]");
        if (threshold) require(std::isfinite(*threshold), "DetectorConfig: threshold must be finite");
    }

    bool calibrated() const { return threshold.has_value(); }

    // s >= threshold routes to the known path.
    bool is_known(double knownness) const {
        require(calibrated(), "DetectorConfig: detector is not calibrated");
        return knownness >= *threshold;
    }
};

// softmax: max softmax probability of logits.
// energy: negated free energy T * log sum exp(logit / T).
// evm_score: max of supplied class inclusion probabilities.
inline double knownness_score(const DetectorConfig& config, const Vector& values) {
    require(values.size() > 0, "knownness_score: empty vector");
    require(values.allFinite(), "knownness_score: non-finite entry");
    switch (config.kind) {
        case DetectorKind::softmax:
            return softmax(values).maxCoeff();
        case DetectorKind::energy:
            return config.temperature * log_sum_exp(values / config.temperature);
        case DetectorKind::evm_score:
            return values.maxCoeff();
    }
    throw InvalidArgument("knownness_score: unknown detector kind");
}

inline constexpr std::size_t kMinCalibrationScores = 20;

// Largest threshold keeping at least target_tpr of the scores at or above it.
inline DetectorConfig calibrate_threshold(DetectorConfig config, std::vector<double> scores) {
    config.validate();
    require(scores.size() >= kMinCalibrationScores, "calibrate_threshold: need at least 20 scores");
    for (double s : scores) require(std::isfinite(s), "calibrate_threshold: non-finite score");
    std::sort(scores.begin(), scores.end(), std::greater<>());
    const double n = static_cast<double>(scores.size());
    auto need = static_cast<std::size_t>(std::ceil(config.target_tpr * n - 1e-9));
    need = std::clamp<std::size_t>(need, 1, scores.size());
    config.threshold = scores[need - 1];
    return config;
}

enum class RangeCheck { in_range, out_of_range };

// Per-dimension box around the pretraining features. Anything outside is
// forced to the unknown decision.
struct FeatureBounds {
    Vector lower;
    Vector upper;

    static FeatureBounds learn(const RowMatrix& features, double slack = 1.5) {
        require(features.rows() > 0, "FeatureBounds::learn: no features");
        require(slack > 0.0, "FeatureBounds::learn: slack must be positive");
        const Vector lo = features.colwise().minCoeff().transpose();
        const Vector hi = features.colwise().maxCoeff().transpose();
        const Vector mid = 0.5 * (lo + hi);
        const Vector half = 0.5 * slack * (hi - lo);
        return {mid - half, mid + half};
    }
};

inline RangeCheck clamp_feature_range(const Vector& f, const FeatureBounds& bounds) {
    if (f.size() != bounds.lower.size()) return RangeCheck::out_of_range;
    for (Index i = 0; i < f.size(); ++i) {
        if (!(f[i] >= bounds.lower[i] && f[i] <= bounds.upper[i])) return RangeCheck::out_of_range;
    }
    return RangeCheck::in_range;
}

inline void to_json(nlohmann::json& j, const DetectorConfig& c) {
    j = nlohmann::json{{"kind", c.kind}, {"temperature", c.temperature}, {"target_tpr", c.target_tpr}};
    j["threshold"] = c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, DetectorConfig& c) {
    const DetectorConfig d;
    c.kind = j.value("kind", d.kind);
    c.temperature = j.value("temperature", d.temperature);
    c.target_tpr = j.value("target_tpr", d.target_tpr);
    c.threshold.reset();
    if (j.contains("threshold") && !j.at("threshold").is_null()) c.threshold = j.at("threshold").get<double>();
}

}  // namespace owl
