#pragma once

// Open-world agents and the streaming experiment protocol.
//
// Two agent architectures:
//  * LC: a linear head over the known classes, a calibrated known/unknown
//    detector and a pluggable learner for discovered classes.
//  * FEVM: one extreme value machine over knowns and discovered classes.
// Baseline modes reuse either architecture: no_adaption never learns and
// with_label replaces clustering with ground-truth grouping of the buffer.
//
// Predicted labels: -1 unknown, 0..K-1 known classes, K + j discovered class j.

#include "owl/json_enum.hpp"
#include "owl/evm.hpp"
#include "owl/feature_io.hpp"
#include "owl/learners/learner.hpp"
#include "owl/linear_head.hpp"
#include "owl/manager.hpp"
#include "owl/metrics.hpp"
#include "owl/ood.hpp"
#include "owl/stats.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <vector>

namespace owl {

enum class AgentMode { towl_lc, towl_fevm, no_adaption, with_label };

OWL_JSON_ENUM(AgentMode, {{AgentMode::towl_lc, "towl_lc"},
                                         {AgentMode::towl_fevm, "towl_fevm"},
                                         {AgentMode::no_adaption, "no_adaption"},
                                         {AgentMode::with_label, "with_label"}})

inline constexpr int kUnknownPrediction = -1;

struct AgentConfig {
    AgentMode mode = AgentMode::towl_fevm;
    // towl_lc: the discovered-class learner. no_adaption / with_label: fevm
    // selects the single-EVM agent, anything else the LC agent with it.
    LearnerKind learner = LearnerKind::fevm;
    DetectorConfig detector;
    ManagerConfig manager;
    EvmConfig evm;
    LinearTrainOptions head;
    bool clamp = false;
    double clamp_slack = 1.5;
    int gate_clusters = 20;
    int gate_cluster_size = 40;

    bool single_evm() const {
        return mode == AgentMode::towl_fevm || (mode != AgentMode::towl_lc && learner == LearnerKind::fevm);
    }

    void validate() const {
        if (mode == AgentMode::towl_lc) require(learner != LearnerKind::fevm, "AgentConfig: towl_lc needs an LC learner");
        if (mode == AgentMode::towl_fevm) require(learner == LearnerKind::fevm, "AgentConfig: towl_fevm needs learner fevm");
        detector.validate();
        manager.validate();
        evm.validate();
        require(clamp_slack > 0.0, "AgentConfig: clamp slack must be positive");
        require(gate_clusters > manager.n_pos && gate_cluster_size >= 2, "AgentConfig: bad gate calibration size");
    }
};

inline void to_json(nlohmann::json& j, const AgentConfig& c) {
    j = nlohmann::json{{"mode", c.mode},
                       {"learner", c.learner},
                       {"detector", c.detector},
                       {"manager", c.manager},
                       {"evm", c.evm},
                       {"head", {{"epochs", c.head.epochs}, {"step", c.head.step}, {"l2", c.head.l2}}},
                       {"clamp", c.clamp},
                       {"clamp_slack", c.clamp_slack},
                       {"gate_clusters", c.gate_clusters},
                       {"gate_cluster_size", c.gate_cluster_size}};
}

inline void from_json(const nlohmann::json& j, AgentConfig& c) {
    const AgentConfig d;
    c.mode = j.value("mode", d.mode);
    c.learner = j.value("learner", d.learner);
    c.detector = j.value("detector", d.detector);
    c.manager = j.value("manager", d.manager);
    c.evm = j.value("evm", d.evm);
    c.head = d.head;
    if (j.contains("head")) {
        const auto& h = j.at("head");
        c.head.epochs = h.value("epochs", d.head.epochs);
        c.head.step = h.value("step", d.head.step);
        c.head.l2 = h.value("l2", d.head.l2);
    }
    c.clamp = j.value("clamp", d.clamp);
    c.clamp_slack = j.value("clamp_slack", d.clamp_slack);
    c.gate_clusters = j.value("gate_clusters", d.gate_clusters);
    c.gate_cluster_size = j.value("gate_cluster_size", d.gate_cluster_size);
}

struct Agent {
    AgentConfig config;
    int dim = 0;
    int known_classes = 0;

    // LC
    LinearHead head;
    DetectorConfig detector;
    EvmModel known_evm;  // only for the evm_score detector
    LearnerState learner;

    // FEVM
    EvmModel evm;
    FeatureBank bank;
    std::map<int, Index> label_class;  // with_label: truth label -> EVM class

    QualityGate gate;
    std::optional<FeatureBounds> bounds;
    ResidualBuffer buffer;
    bool buffer_dirty = false;

    Index discovered_count() const {
        if (config.single_evm()) return evm.class_count() - known_classes;
        return learner_class_count(learner);
    }
};

struct StepOutcome {
    int predicted = kUnknownPrediction;
    Vector p;  // [unknown, known classes, discovered classes]
    bool inserted = false;
    int learned = 0;
};

inline std::vector<RowMatrix> rows_by_class(const FeatureSet& set, int classes) {
    std::vector<std::vector<Index>> idx(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < set.size(); ++i) {
        const int l = set.labels[i];
        require(l >= 0 && l < classes, "rows_by_class: label outside the known classes");
        idx[static_cast<std::size_t>(l)].push_back(static_cast<Index>(i));
    }
    std::vector<RowMatrix> out;
    for (const auto& rows : idx) {
        RowMatrix m(static_cast<Index>(rows.size()), set.dim);
        for (std::size_t k = 0; k < rows.size(); ++k) m.row(static_cast<Index>(k)) = set.vectors.row(rows[k]);
        out.push_back(std::move(m));
    }
    return out;
}

inline double lc_knownness(const Agent& a, const Vector& f, const Vector& logits) {
    if (a.detector.kind == DetectorKind::evm_score)
        return knownness_score(a.detector, evm_class_probabilities(a.known_evm, f));
    return knownness_score(a.detector, logits);
}

// Trains the known-class model on pretraining data and calibrates the
// detector threshold and quality gate on labeled validation data.
inline Agent calibrate_agent(const AgentConfig& config, const FeatureSet& pretrain, const FeatureSet& validation,
                             int known_classes, std::uint64_t seed) {
    config.validate();
    require(known_classes >= 2, "calibrate_agent: need at least 2 known classes");
    require(pretrain.dim == validation.dim, "calibrate_agent: pretrain and validation dims differ");
    Agent a;
    a.config = config;
    a.dim = pretrain.dim;
    a.known_classes = known_classes;
    const auto by_class = rows_by_class(pretrain, known_classes);

    if (config.single_evm()) {
        a.evm = evm_train(by_class, config.evm);
        a.bank = make_feature_bank(by_class, config.evm);
    } else {
        a.head = train_linear_head(pretrain.vectors, pretrain.labels, known_classes, config.head);
        a.detector = config.detector;
        if (a.detector.kind == DetectorKind::evm_score) a.known_evm = evm_train(by_class, config.evm);
        std::vector<double> scores;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            const Vector f = validation.row(i);
            scores.push_back(lc_knownness(a, f, a.head.logits(f)));
        }
        a.detector = calibrate_threshold(a.detector, std::move(scores));
        a.learner = make_learner(config.learner, seed, config.evm);
    }
    if (config.manager.gate_enabled && config.mode != AgentMode::with_label) {
        const auto clusters =
            make_validation_clusters(validation, config.gate_clusters, config.gate_cluster_size, seed ^ 0x9e3779b97f4a7c15ULL);
        a.gate = train_quality_svm(clusters, config.manager.n_pos);
    }
    if (config.clamp) a.bounds = FeatureBounds::learn(pretrain.vectors, config.clamp_slack);
    return a;
}

namespace detail {

inline int label_from_index(Index idx) { return static_cast<int>(idx) - 1; }

// with_label: known-labeled points leave the buffer, unknown-label groups
// larger than rho are admitted with their label.
struct LabeledAdmission {
    std::vector<RowMatrix> clusters;
    std::vector<int> labels;
    bool changed = false;
};

inline LabeledAdmission admit_by_label(Agent& a) {
    LabeledAdmission out;
    if (static_cast<int>(a.buffer.size()) <= a.config.manager.psi) return out;
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < a.buffer.size(); ++i) groups[a.buffer.entries[i].truth].push_back(i);
    std::vector<bool> drop(a.buffer.size(), false);
    for (const auto& [label, idx] : groups) {
        if (is_known_label(label, a.known_classes)) {
            for (std::size_t i : idx) drop[i] = true;
            continue;
        }
        if (static_cast<int>(idx.size()) <= a.config.manager.rho) continue;
        RowMatrix m(static_cast<Index>(idx.size()), a.dim);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            m.row(static_cast<Index>(k)) = a.buffer.entries[idx[k]].feature.transpose();
            drop[idx[k]] = true;
        }
        out.clusters.push_back(std::move(m));
        out.labels.push_back(label);
    }
    ResidualBuffer kept;
    for (std::size_t i = 0; i < a.buffer.size(); ++i)
        if (!drop[i]) kept.entries.push_back(a.buffer.entries[i]);
    out.changed = kept.size() != a.buffer.size();
    a.buffer = std::move(kept);
    return out;
}

inline void learn_clusters(Agent& a, const std::vector<RowMatrix>& clusters, const std::vector<int>& labels) {
    if (clusters.empty()) return;
    if (!a.config.single_evm()) {
        a.learner = learner_update(std::move(a.learner), clusters);
        return;
    }
    std::vector<NewCluster> fresh;
    Index next = a.evm.class_count();
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        std::optional<Index> target;
        if (!labels.empty()) {
            const auto it = a.label_class.find(labels[i]);
            if (it != a.label_class.end()) {
                target = it->second;
            } else {
                a.label_class[labels[i]] = next++;
            }
        }
        fresh.push_back({clusters[i], target});
    }
    auto [model, bank] = evm_increment(std::move(a.evm), std::move(a.bank), fresh);
    a.evm = std::move(model);
    a.bank = std::move(bank);
}

// Runs management when the buffer changed since the last attempt; repeating
// it on an unchanged buffer would produce the same outcome.
inline int manage(Agent& a) {
    if (a.config.mode == AgentMode::no_adaption || !a.buffer_dirty) return 0;
    a.buffer_dirty = false;
    if (a.config.mode == AgentMode::with_label) {
        auto admission = admit_by_label(a);
        a.buffer_dirty = !admission.clusters.empty();
        learn_clusters(a, admission.clusters, admission.labels);
        return static_cast<int>(admission.clusters.size());
    }
    auto outcome = manage_step(a.buffer, a.config.manager, a.gate);
    a.buffer = std::move(outcome.buffer);
    if (outcome.admitted.empty()) return 0;
    a.buffer_dirty = true;
    std::vector<RowMatrix> clusters;
    for (auto& c : outcome.admitted) clusters.push_back(std::move(c.features));
    learn_clusters(a, clusters, {});
    return static_cast<int>(clusters.size());
}

inline void insert_residual(Agent& a, const Vector& f, long item, int truth) {
    if (a.config.mode == AgentMode::no_adaption) return;
    a.buffer.entries.push_back({f, item, truth});
    a.buffer_dirty = true;
}

inline bool out_of_range(const Agent& a, const Vector& f) {
    return a.bounds && clamp_feature_range(f, *a.bounds) == RangeCheck::out_of_range;
}

}  // namespace detail

// `truth` is stored with buffered items for scoring and for the with_label
// baseline; the towl agents never read it.
inline StepOutcome towl_lc_step(Agent& a, const Vector& f, long item = 0, int truth = kUnlabeled) {
    require(!a.config.single_evm(), "towl_lc_step: agent is not an LC agent");
    require_dim(f.size(), a.dim, "towl_lc_step");
    const Index k = a.known_classes;
    const Index d = learner_class_count(a.learner);
    StepOutcome out;
    out.p = Vector::Zero(1 + k + d);
    const Vector logits = a.head.logits(f);
    const bool known = a.detector.is_known(lc_knownness(a, f, logits)) && !detail::out_of_range(a, f);
    if (known) {
        const Vector q = softmax(logits);
        out.p.segment(1, k) = q;
        out.predicted = static_cast<int>(argmax_first(q));
    } else {
        const AugmentedProbs ap = learner_predict(a.learner, f);
        out.p[0] = ap.p_unknown;
        out.p.tail(d) = ap.p_classes;
        out.predicted = detail::label_from_index(argmax_first(out.p));
        if (ap.p_unknown > ap.max_class()) {
            detail::insert_residual(a, f, item, truth);
            out.inserted = a.config.mode != AgentMode::no_adaption;
        }
    }
    out.learned = detail::manage(a);
    return out;
}

inline StepOutcome towl_fevm_step(Agent& a, const Vector& f, long item = 0, int truth = kUnlabeled) {
    require(a.config.single_evm(), "towl_fevm_step: agent is not a single-EVM agent");
    require_dim(f.size(), a.dim, "towl_fevm_step");
    StepOutcome out;
    const Vector q = evm_class_probabilities(a.evm, f);
    bool insert;
    if (detail::out_of_range(a, f)) {
        out.p = AugmentedProbs::unknown_only(q.size()).full();
        insert = true;
    } else {
        const AugmentedProbs ap = augment_probabilities(q);
        out.p = ap.full();
        insert = ap.p_unknown > q.maxCoeff();
    }
    out.predicted = detail::label_from_index(argmax_first(out.p));
    if (insert) {
        detail::insert_residual(a, f, item, truth);
        out.inserted = a.config.mode != AgentMode::no_adaption;
    }
    out.learned = detail::manage(a);
    return out;
}

inline StepOutcome agent_step(Agent& a, const Vector& f, long item = 0, int truth = kUnlabeled) {
    return a.config.single_evm() ? towl_fevm_step(a, f, item, truth) : towl_lc_step(a, f, item, truth);
}

// ---------------------------------------------------------------------------
// Experiment protocol

struct ExperimentConfig {
    StreamConfig stream;
    BlobGeometry geometry;
    AgentConfig agent;
    int window = 10;  // trailing batches scored by the run-level OWM

    void validate() const {
        stream.validate();
        agent.validate();
        require(window >= 1, "ExperimentConfig: window must be >= 1");
        require(geometry.dim >= 1 && geometry.spread >= 0.0 && geometry.radius > 0.0, "ExperimentConfig: bad geometry");
    }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"stream", c.stream}, {"geometry", c.geometry}, {"agent", c.agent}, {"window", c.window}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    const ExperimentConfig d;
    c.stream = j.value("stream", d.stream);
    c.geometry = j.value("geometry", d.geometry);
    c.agent = j.value("agent", d.agent);
    c.window = j.value("window", d.window);
}

struct BatchRecord {
    std::size_t n_kk = 0, n_ku = 0, n_uk = 0, n_uu = 0;
    std::optional<double> acc_kk;  // empty when no item was routed known correctly
    std::optional<double> b3_uu;
    double owm = 0.0;
    Index discovered_classes = 0;
    std::size_t buffer_size = 0;
};

struct RunReport {
    std::uint64_t seed = 0;
    std::vector<BatchRecord> batches;
    double window_owm = 0.0;
    double window_owm_f1_nmi = 0.0;
    Index discovered_classes = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunReport> runs;
    double owm_mean = 0.0;
    double owm_std = 0.0;  // sample standard deviation; 0 for a single run

    std::vector<double> window_owms() const {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(r.window_owm);
        return v;
    }
};

inline OwmInputs make_owm_inputs(const std::vector<int>& predicted, const std::vector<int>& truth, int known_classes) {
    require(predicted.size() == truth.size(), "make_owm_inputs: length mismatch");
    OwmInputs in;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool truth_known = is_known_label(truth[i], known_classes);
        const bool pred_known = is_known_label(predicted[i], known_classes);
        if (truth_known && pred_known) {
            ++in.n_kk;
            in.kk_predicted.push_back(predicted[i]);
            in.kk_truth.push_back(truth[i]);
        } else if (truth_known) {
            ++in.n_ku;
        } else if (pred_known) {
            ++in.n_uk;
        } else {
            ++in.n_uu;
            in.uu_predicted.push_back(predicted[i]);
            in.uu_truth.push_back(truth[i]);
        }
    }
    return in;
}

inline BatchRecord score_batch(const std::vector<int>& predicted, const std::vector<int>& truth, int known_classes) {
    const OwmInputs in = make_owm_inputs(predicted, truth, known_classes);
    BatchRecord r;
    r.n_kk = in.n_kk;
    r.n_ku = in.n_ku;
    r.n_uk = in.n_uk;
    r.n_uu = in.n_uu;
    if (in.n_kk > 0) r.acc_kk = accuracy(in.kk_predicted, in.kk_truth);
    if (in.n_uu > 0) r.b3_uu = b3(in.uu_predicted, in.uu_truth).f;
    r.owm = owm(in);
    return r;
}

inline RunReport run_stream(Agent& agent, const std::vector<FeatureSet>& batches, int window) {
    RunReport report;
    std::vector<std::vector<int>> preds, truths;
    long item = 0;
    for (const auto& batch : batches) {
        std::vector<int> p, t;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const StepOutcome out = agent_step(agent, batch.row(i), item++, batch.labels[i]);
            p.push_back(out.predicted);
            t.push_back(batch.labels[i]);
        }
        BatchRecord rec = score_batch(p, t, agent.known_classes);
        rec.discovered_classes = agent.discovered_count();
        rec.buffer_size = agent.buffer.size();
        report.batches.push_back(rec);
        preds.push_back(std::move(p));
        truths.push_back(std::move(t));
    }
    std::vector<int> wp, wt;
    const std::size_t first = preds.size() > static_cast<std::size_t>(window) ? preds.size() - window : 0;
    for (std::size_t b = first; b < preds.size(); ++b) {
        wp.insert(wp.end(), preds[b].begin(), preds[b].end());
        wt.insert(wt.end(), truths[b].begin(), truths[b].end());
    }
    const OwmInputs in = make_owm_inputs(wp, wt, agent.known_classes);
    report.window_owm = owm(in);
    report.window_owm_f1_nmi = owm_f1_nmi(in);
    report.discovered_classes = agent.discovered_count();
    return report;
}

inline RunReport run_single(const ExperimentConfig& config, std::uint64_t seed) {
    StreamConfig sc = config.stream;
    sc.seed = seed;
    const SyntheticData data = synthesize_stream(sc, config.geometry);
    Agent agent = calibrate_agent(config.agent, data.pretrain, data.validation, data.known_class_count, seed);
    RunReport r = run_stream(agent, data.batches, config.window);
    r.seed = seed;
    return r;
}

inline std::vector<std::uint64_t> run_seeds(const StreamConfig& s) {
    std::vector<std::uint64_t> seeds;
    for (int r = 0; r < s.run_count; ++r) seeds.push_back(s.seed + static_cast<std::uint64_t>(r));
    return seeds;
}

inline void summarize(ExperimentReport& report) {
    const auto v = report.window_owms();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    report.owm_mean = mean;
    report.owm_std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentReport report;
    report.config = config;
    for (std::uint64_t seed : run_seeds(config.stream)) report.runs.push_back(run_single(config, seed));
    summarize(report);
    return report;
}

// Paired over runs (matched by position) on the window OWM.
inline PairedTTest paired_comparison(const ExperimentReport& a, const ExperimentReport& b) {
    return paired_t_test(a.window_owms(), b.window_owms());
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const BatchRecord& r) {
    j = nlohmann::json{{"n_kk", r.n_kk},
                       {"n_ku", r.n_ku},
                       {"n_uk", r.n_uk},
                       {"n_uu", r.n_uu},
                       {"acc_kk", optional_json(r.acc_kk)},
                       {"b3_uu", optional_json(r.b3_uu)},
                       {"owm", r.owm},
                       {"discovered_classes", r.discovered_classes},
                       {"buffer_size", r.buffer_size}};
}

inline void from_json(const nlohmann::json& j, BatchRecord& r) {
    r.n_kk = j.at("n_kk").get<std::size_t>();
    r.n_ku = j.at("n_ku").get<std::size_t>();
    r.n_uk = j.at("n_uk").get<std::size_t>();
    r.n_uu = j.at("n_uu").get<std::size_t>();
    if (!j.at("acc_kk").is_null()) r.acc_kk = j.at("acc_kk").get<double>();
    if (!j.at("b3_uu").is_null()) r.b3_uu = j.at("b3_uu").get<double>();
    r.owm = j.at("owm").get<double>();
    r.discovered_classes = j.value("discovered_classes", Index{0});
    r.buffer_size = j.value("buffer_size", std::size_t{0});
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
    j = nlohmann::json{{"seed", r.seed},
                       {"batches", r.batches},
                       {"window_owm", r.window_owm},
                       {"window_owm_f1_nmi", r.window_owm_f1_nmi},
                       {"discovered_classes", r.discovered_classes}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
    r.seed = j.at("seed").get<std::uint64_t>();
    r.batches = j.at("batches").get<std::vector<BatchRecord>>();
    r.window_owm = j.at("window_owm").get<double>();
    r.window_owm_f1_nmi = j.value("window_owm_f1_nmi", 0.0);
    r.discovered_classes = j.value("discovered_classes", Index{0});
}

inline void to_json(nlohmann::json& j, const ExperimentReport& r) {
    j = nlohmann::json{{"config", r.config}, {"runs", r.runs}, {"owm_mean", r.owm_mean}, {"owm_std", r.owm_std}};
}

inline void from_json(const nlohmann::json& j, ExperimentReport& r) {
    r.config = j.at("config").get<ExperimentConfig>();
    r.runs = j.at("runs").get<std::vector<RunReport>>();
    r.owm_mean = j.at("owm_mean").get<double>();
    r.owm_std = j.at("owm_std").get<double>();
}

}  // namespace owl
