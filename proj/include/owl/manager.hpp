#pragma once

// Novelty management: residual buffer thresholds, cluster statistics, the
// entropy-calibrated linear SVM quality gate and cluster admission.

#include "owl/feature_io.hpp"
#include "owl/finch.hpp"
#include "owl/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

namespace owl {

struct ManagerConfig {
    int psi = 250;   // buffer must exceed this to cluster
    int gamma = 4;   // selected partition must have more clusters than this
    int rho = 20;    // a cluster must have more points than this to be learned
    int n_pos = 5;   // lowest-entropy validation clusters labeled positive for the gate
    bool gate_enabled = true;
    PartitionMode partition_mode = PartitionMode::automatic;
    FinchMetric metric = FinchMetric::euclidean;

    void validate() const {
        require(psi >= 1, "ManagerConfig: psi must be >= 1");
        require(gamma >= 0, "ManagerConfig: gamma must be >= 0");
        require(rho >= 2, "ManagerConfig: rho must be >= 2");
        require(n_pos >= 1, "ManagerConfig: n_pos must be >= 1");
    }
};

// Management switched off: no gate, no cluster-count or size thresholds,
// finest partition.
inline ManagerConfig unmanaged(ManagerConfig c) {
    c.gamma = 0;
    c.rho = 2;
    c.gate_enabled = false;
    c.partition_mode = PartitionMode::fp;
    return c;
}

inline void to_json(nlohmann::json& j, const ManagerConfig& c) {
    j = nlohmann::json{{"psi", c.psi},           {"gamma", c.gamma},
                       {"rho", c.rho},           {"n_pos", c.n_pos},
                       {"gate_enabled", c.gate_enabled}, {"partition_mode", c.partition_mode},
                       {"metric", c.metric}};
}

inline void from_json(const nlohmann::json& j, ManagerConfig& c) {
    const ManagerConfig d;
    c.psi = j.value("psi", d.psi);
    c.gamma = j.value("gamma", d.gamma);
    c.rho = j.value("rho", d.rho);
    c.n_pos = j.value("n_pos", d.n_pos);
    c.gate_enabled = j.value("gate_enabled", d.gate_enabled);
    c.partition_mode = j.value("partition_mode", d.partition_mode);
    c.metric = j.value("metric", d.metric);
}

struct ClusterStats {
    Vector centroid;
    double v_e = 0.0;  // mean squared distance to the centroid
    double v_c = 0.0;  // mean cosine distance to the centroid
    Index size = 0;
};

inline ClusterStats cluster_stats(const RowMatrix& f) {
    require(f.rows() >= 1, "cluster_stats: empty cluster");
    ClusterStats s;
    s.size = f.rows();
    s.centroid = f.colwise().mean().transpose();
    const double cn = std::max(s.centroid.norm(), 1e-12);
    for (Index r = 0; r < f.rows(); ++r) {
        const auto row = f.row(r);
        s.v_e += (row.transpose() - s.centroid).squaredNorm();
        s.v_c += 1.0 - row.dot(s.centroid) / (std::max(row.norm(), 1e-12) * cn);
    }
    s.v_e /= static_cast<double>(f.rows());
    s.v_c /= static_cast<double>(f.rows());
    return s;
}

// Shannon entropy (nats) of the empirical label distribution.
inline double label_entropy(const std::vector<int>& labels) {
    require(!labels.empty(), "label_entropy: empty cluster");
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    const auto n = static_cast<double>(labels.size());
    double h = 0.0;
    for (const auto& [label, c] : counts) {
        const double p = c / n;
        h -= p * std::log(p);
    }
    return h;
}

struct ValidationCluster {
    ClusterStats stats;
    double entropy = 0.0;
};

struct SvmOptions {
    double c = 1.0;
    int iterations = 10000;
    double step = 0.1;
};

struct QualityGate {
    bool trained = false;
    double w_e = 0.0;
    double w_c = 0.0;
    double bias = 0.0;
    double mean_e = 0.0, scale_e = 1.0;
    double mean_c = 0.0, scale_c = 1.0;

    double decision(const ClusterStats& s) const {
        require(trained, "QualityGate: gate is not trained");
        return w_e * (s.v_e - mean_e) / scale_e + w_c * (s.v_c - mean_c) / scale_c + bias;
    }

    bool accepts(const ClusterStats& s) const { return decision(s) > 0.0; }
};

inline void to_json(nlohmann::json& j, const QualityGate& g) {
    j = nlohmann::json{{"trained", g.trained}, {"w_e", g.w_e},         {"w_c", g.w_c},
                       {"bias", g.bias},       {"mean_e", g.mean_e},   {"scale_e", g.scale_e},
                       {"mean_c", g.mean_c},   {"scale_c", g.scale_c}};
}

inline void from_json(const nlohmann::json& j, QualityGate& g) {
    g.trained = j.at("trained").get<bool>();
    g.w_e = j.at("w_e").get<double>();
    g.w_c = j.at("w_c").get<double>();
    g.bias = j.at("bias").get<double>();
    g.mean_e = j.at("mean_e").get<double>();
    g.scale_e = j.at("scale_e").get<double>();
    g.mean_c = j.at("mean_c").get<double>();
    g.scale_c = j.at("scale_c").get<double>();
}

namespace detail {

inline double svm_objective(const std::vector<Eigen::Vector2d>& z, const std::vector<double>& y, const Eigen::Vector2d& w,
                            double b, double c) {
    double hinge = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) hinge += std::max(0.0, 1.0 - y[i] * (w.dot(z[i]) + b));
    return 0.5 * w.squaredNorm() + c * hinge;
}

inline void standardize(const std::vector<double>& v, double& mean, double& scale) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    scale = std::sqrt(var / static_cast<double>(v.size()));
    if (!(scale > 0.0)) scale = 1.0;
}

}  // namespace detail

// The n_pos lowest-entropy clusters (ties: lowest index) are positive, the
// rest negative. Soft-margin linear SVM on standardized (v_e, v_c), trained by
// subgradient descent with step eta/sqrt(t); the best iterate is kept.
inline QualityGate train_quality_svm(const std::vector<ValidationCluster>& clusters, int n_pos,
                                     const SvmOptions& opt = {}) {
    require(n_pos >= 1, "train_quality_svm: n_pos must be >= 1");
    require(clusters.size() >= static_cast<std::size_t>(n_pos) + 1,
            "train_quality_svm: need more clusters than positives");
    std::vector<std::size_t> order(clusters.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return clusters[a].entropy < clusters[b].entropy; });
    std::vector<double> y(clusters.size(), -1.0);
    for (int k = 0; k < n_pos; ++k) y[order[static_cast<std::size_t>(k)]] = 1.0;

    QualityGate g;
    std::vector<double> ve, vc;
    for (const auto& c : clusters) {
        ve.push_back(c.stats.v_e);
        vc.push_back(c.stats.v_c);
    }
    detail::standardize(ve, g.mean_e, g.scale_e);
    detail::standardize(vc, g.mean_c, g.scale_c);
    std::vector<Eigen::Vector2d> z;
    for (std::size_t i = 0; i < clusters.size(); ++i)
        z.emplace_back((ve[i] - g.mean_e) / g.scale_e, (vc[i] - g.mean_c) / g.scale_c);

    Eigen::Vector2d w = Eigen::Vector2d::Zero();
    double b = 0.0;
    Eigen::Vector2d best_w = w;
    double best_b = b;
    double best = detail::svm_objective(z, y, w, b, opt.c);
    for (int t = 1; t <= opt.iterations; ++t) {
        Eigen::Vector2d gw = w;
        double gb = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (y[i] * (w.dot(z[i]) + b) < 1.0) {
                gw -= opt.c * y[i] * z[i];
                gb -= opt.c * y[i];
            }
        }
        const double eta = opt.step / std::sqrt(static_cast<double>(t));
        w -= eta * gw;
        b -= eta * gb;
        const double obj = detail::svm_objective(z, y, w, b, opt.c);
        if (obj < best) {
            best = obj;
            best_w = w;
            best_b = b;
        }
    }
    g.w_e = best_w[0];
    g.w_c = best_w[1];
    g.bias = best_b;
    g.trained = true;
    return g;
}

// Calibration clusters drawn from labeled validation data with graded
// contamination: cluster i takes its base class i mod K and replaces a
// fraction i / count of its points with points of other classes.
inline std::vector<ValidationCluster> make_validation_clusters(const FeatureSet& validation, int count, int size,
                                                               std::uint64_t seed) {
    require(count >= 2 && size >= 2, "make_validation_clusters: bad count or size");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < validation.size(); ++i)
        if (validation.labels[i] != kUnlabeled) by_class[validation.labels[i]].push_back(i);
    require(by_class.size() >= 2, "make_validation_clusters: need at least 2 labeled classes");
    std::vector<int> classes;
    for (const auto& [label, rows] : by_class) classes.push_back(label);

    Rng rng(seed);
    auto draw = [&](int label) {
        const auto& rows = by_class[label];
        return rows[static_cast<std::size_t>(rng.below(rows.size()))];
    };
    std::vector<ValidationCluster> out;
    for (int i = 0; i < count; ++i) {
        const int base = classes[static_cast<std::size_t>(i) % classes.size()];
        const int others = static_cast<int>(std::lround(static_cast<double>(size) * i / count));
        RowMatrix f(size, validation.dim);
        std::vector<int> labels;
        for (int r = 0; r < size; ++r) {
            int label = base;
            if (r < others) {
                auto pick = static_cast<std::size_t>(rng.below(classes.size() - 1));
                if (classes[pick] == base) pick = classes.size() - 1;
                label = classes[pick];
            }
            f.row(r) = validation.vectors.row(static_cast<Index>(draw(label)));
            labels.push_back(label);
        }
        out.push_back({cluster_stats(f), label_entropy(labels)});
    }
    return out;
}

struct BufferEntry {
    Vector feature;
    long item = 0;           // stream position
    int truth = kUnlabeled;  // scorer-only ground truth
};

struct ResidualBuffer {
    std::vector<BufferEntry> entries;

    std::size_t size() const { return entries.size(); }

    RowMatrix features() const {
        RowMatrix m(static_cast<Index>(entries.size()), entries.empty() ? 0 : entries.front().feature.size());
        for (std::size_t i = 0; i < entries.size(); ++i) m.row(static_cast<Index>(i)) = entries[i].feature.transpose();
        return m;
    }
};

struct AdmittedCluster {
    RowMatrix features;
    std::vector<BufferEntry> members;
    ClusterStats stats;
};

struct ManageOutcome {
    std::vector<AdmittedCluster> admitted;
    ResidualBuffer buffer;
    bool clustered = false;
    int cluster_count = 0;
};

// Applies the cluster-count, size and gate checks to a given partition of
// the buffer; admitted points leave the buffer, everything else stays in
// its original order.
inline ManageOutcome admit_clusters(const ResidualBuffer& buffer, const std::vector<int>& labels,
                                    const ManagerConfig& config, const QualityGate& gate) {
    require(labels.size() == buffer.size(), "admit_clusters: partition does not match the buffer");
    ManageOutcome out;
    out.clustered = true;
    out.cluster_count = PartitionSet::cluster_count(labels);
    if (out.cluster_count <= config.gamma) {
        out.buffer = buffer;
        return out;
    }
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(out.cluster_count));
    for (std::size_t i = 0; i < labels.size(); ++i) groups[static_cast<std::size_t>(labels[i])].push_back(i);
    std::vector<bool> taken(buffer.size(), false);
    for (const auto& g : groups) {
        if (static_cast<int>(g.size()) <= config.rho) continue;
        AdmittedCluster c;
        c.features.resize(static_cast<Index>(g.size()), buffer.entries[g.front()].feature.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            c.features.row(static_cast<Index>(k)) = buffer.entries[g[k]].feature.transpose();
            c.members.push_back(buffer.entries[g[k]]);
        }
        c.stats = cluster_stats(c.features);
        if (config.gate_enabled && !gate.accepts(c.stats)) continue;
        for (std::size_t i : g) taken[i] = true;
        out.admitted.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < buffer.size(); ++i)
        if (!taken[i]) out.buffer.entries.push_back(buffer.entries[i]);
    return out;
}

inline ManageOutcome manage_step(const ResidualBuffer& buffer, const ManagerConfig& config, const QualityGate& gate) {
    if (config.gate_enabled) require(gate.trained, "manage_step: gate is not trained");
    if (static_cast<int>(buffer.size()) <= config.psi || buffer.size() < 2) {
        ManageOutcome out;
        out.buffer = buffer;
        return out;
    }
    const PartitionSet partitions = finch_partitions(buffer.features(), config.metric);
    return admit_clusters(buffer, select_partition(partitions, config.partition_mode), config, gate);
}

}  // namespace owl
