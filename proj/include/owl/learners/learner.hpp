#pragma once

// Uniform interface over the discovered-class learners.

#include "owl/json_enum.hpp"
#include "owl/evm.hpp"
#include "owl/learners/cbcl.hpp"
#include "owl/learners/gmm.hpp"
#include "owl/learners/ncm.hpp"
#include "owl/learners/nno.hpp"
#include "owl/learners/scail.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace owl {

// fevm is not a discovered-class learner; it selects the single-EVM agent.
enum class LearnerKind { oncm, onno, ogmm, ocbcl, oscail, mevm, fevm };

OWL_JSON_ENUM(LearnerKind, {{LearnerKind::oncm, "oncm"},
                                           {LearnerKind::onno, "onno"},
                                           {LearnerKind::ogmm, "ogmm"},
                                           {LearnerKind::ocbcl, "ocbcl"},
                                           {LearnerKind::oscail, "oscail"},
                                           {LearnerKind::mevm, "mevm"},
                                           {LearnerKind::fevm, "fevm"}})

inline constexpr std::array<std::pair<LearnerKind, std::string_view>, 7> kLearnerNames{{{LearnerKind::oncm, "oncm"},
                                                                                      {LearnerKind::onno, "onno"},
                                                                                      {LearnerKind::ogmm, "ogmm"},
                                                                                      {LearnerKind::ocbcl, "ocbcl"},
                                                                                      {LearnerKind::oscail, "oscail"},
                                                                                      {LearnerKind::mevm, "mevm"},
                                                                                      {LearnerKind::fevm, "fevm"}}};

inline LearnerKind parse_learner_kind(std::string_view s) {
    for (const auto& [kind, name] : kLearnerNames)
        if (name == s) return kind;
    throw InvalidArgument("unknown learner: " + std::string(s));
}

inline std::string to_string(LearnerKind k) {
    for (const auto& [kind, name] : kLearnerNames)
        if (kind == k) return std::string(name);
    return "?";
}

// EVM over discovered classes only. The bank starts empty, so a lone first
// cluster has no negatives; it waits until another cluster arrives.
struct MevmState {
    EvmModel model;
    FeatureBank bank;
    std::vector<RowMatrix> pending;

    Index class_count() const { return model.class_count() + static_cast<Index>(pending.size()); }
};

inline MevmState mevm_update(MevmState state, const std::vector<RowMatrix>& clusters) {
    std::vector<RowMatrix> batch = std::move(state.pending);
    state.pending.clear();
    batch.insert(batch.end(), clusters.begin(), clusters.end());
    if (batch.empty()) return state;
    if (state.bank.total_rows() == 0 && batch.size() == 1) {
        state.pending = std::move(batch);
        return state;
    }
    std::vector<NewCluster> fresh;
    for (auto& c : batch) fresh.push_back({std::move(c), std::nullopt});
    auto [model, bank] = evm_increment(std::move(state.model), std::move(state.bank), fresh);
    state.model = std::move(model);
    state.bank = std::move(bank);
    return state;
}

inline AugmentedProbs mevm_predict(const MevmState& state, const Vector& f) {
    if (state.model.class_count() == 0) return AugmentedProbs::unknown_only(state.class_count());
    return evm_predict(state.model, f);
}

using LearnerState = std::variant<NcmState, NnoState, GmmState, CbclState, ScailState, MevmState>;

inline LearnerState make_learner(LearnerKind kind, std::uint64_t seed, const EvmConfig& evm = {}) {
    switch (kind) {
        case LearnerKind::oncm: return NcmState{};
        case LearnerKind::onno: {
            NnoState s;
            s.seed = seed;
            return s;
        }
        case LearnerKind::ogmm: return GmmState{};
        case LearnerKind::ocbcl: return CbclState{};
        case LearnerKind::oscail: return ScailState{};
        case LearnerKind::mevm: {
            MevmState s;
            s.model.config = evm;
            s.bank.cap_per_class = evm.bank_cap_per_class;
            s.bank.full = evm.full_bank;
            return s;
        }
        case LearnerKind::fevm: break;
    }
    throw InvalidArgument("make_learner: fevm has no discovered-class learner");
}

inline Index learner_class_count(const LearnerState& state) {
    return std::visit([](const auto& s) { return s.class_count(); }, state);
}

inline AugmentedProbs learner_predict(const LearnerState& state, const Vector& f) {
    struct Visitor {
        const Vector& f;
        AugmentedProbs operator()(const NcmState& s) const { return oncm_predict(s, f); }
        AugmentedProbs operator()(const NnoState& s) const { return onno_predict(s, f); }
        AugmentedProbs operator()(const GmmState& s) const { return ogmm_predict(s, f); }
        AugmentedProbs operator()(const CbclState& s) const { return ocbcl_predict(s, f); }
        AugmentedProbs operator()(const ScailState& s) const { return oscail_predict(s, f); }
        AugmentedProbs operator()(const MevmState& s) const { return mevm_predict(s, f); }
    };
    return std::visit(Visitor{f}, state);
}

// Adds each cluster as a new class; ids continue from the current count.
inline LearnerState learner_update(LearnerState state, const std::vector<RowMatrix>& clusters) {
    if (clusters.empty()) return state;
    const auto first = static_cast<int>(learner_class_count(state));
    struct Visitor {
        const std::vector<RowMatrix>& clusters;
        int first;
        LearnerState operator()(NcmState s) const {
            for (std::size_t i = 0; i < clusters.size(); ++i)
                s = oncm_update(std::move(s), clusters[i], first + static_cast<int>(i));
            return s;
        }
        LearnerState operator()(NnoState s) const {
            for (std::size_t i = 0; i < clusters.size(); ++i)
                s = onno_update(std::move(s), clusters[i], first + static_cast<int>(i));
            return s;
        }
        LearnerState operator()(GmmState s) const {
            for (std::size_t i = 0; i < clusters.size(); ++i)
                s = ogmm_update(std::move(s), clusters[i], first + static_cast<int>(i));
            return s;
        }
        LearnerState operator()(CbclState s) const {
            for (std::size_t i = 0; i < clusters.size(); ++i)
                s = ocbcl_update(std::move(s), clusters[i], first + static_cast<int>(i));
            return s;
        }
        LearnerState operator()(ScailState s) const {
            std::vector<LabeledCluster> labeled;
            for (std::size_t i = 0; i < clusters.size(); ++i)
                labeled.push_back({clusters[i], first + static_cast<int>(i)});
            s = oscail_fit_step(std::move(s), labeled);
            if (s.old_class_count > 0) s = oscail_rescale(std::move(s));
            return s;
        }
        LearnerState operator()(MevmState s) const { return mevm_update(std::move(s), clusters); }
    };
    return std::visit(Visitor{clusters, first}, std::move(state));
}

}  // namespace owl
