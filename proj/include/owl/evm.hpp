#pragma once

// Extreme value machine with a distance multiplier on margins, greedy
// set-cover model reduction and incremental class addition against a bank of
// negative features.
//
// Each extreme vector carries a two-parameter Weibull fitted by maximum
// likelihood to its smallest scaled distances to other-class points. The
// inclusion probability of a point at distance d is exp(-(d / scale)^shape).

#include "owl/learners/augment.hpp"
#include "owl/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace owl {

struct WeibullParams {
    double shape = 1.0;  // kappa
    double scale = 1.0;  // lambda
};

inline constexpr double kMarginFloor = 1e-12;
inline constexpr double kDefaultShapeCap = 100.0;

// The `tail` smallest values of multiplier * ||anchor - x_j|| over the
// negatives, ascending.
inline std::vector<double> compute_margins(const Vector& anchor, const RowMatrix& negatives, double multiplier,
                                           int tail) {
    require(negatives.rows() > 0, "compute_margins: no negatives");
    require(multiplier > 0.0 && tail >= 1, "compute_margins: bad multiplier or tail size");
    require_dim(negatives.cols(), anchor.size(), "compute_margins");
    const Vector d = (negatives.rowwise() - anchor.transpose()).rowwise().norm();
    std::vector<double> m(static_cast<std::size_t>(d.size()));
    for (Index i = 0; i < d.size(); ++i) m[static_cast<std::size_t>(i)] = multiplier * d[i];
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(tail), m.size());
    std::partial_sort(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(keep), m.end());
    m.resize(keep);
    return m;
}

inline double weibull_log_likelihood(const std::vector<double>& x, const WeibullParams& p) {
    double ll = 0.0;
    for (double v : x) {
        const double z = v / p.scale;
        ll += std::log(p.shape / p.scale) + (p.shape - 1.0) * std::log(z) - std::pow(z, p.shape);
    }
    return ll;
}

// Two-parameter Weibull MLE. The shape solves
//   sum x^k ln x / sum x^k - 1/k - mean(ln x) = 0
// (monotone increasing in k) by bracketed Newton; the scale follows in closed
// form. Single-sample or constant input gives scale = value, shape = cap.
inline WeibullParams fit_weibull(std::vector<double> margins, double shape_cap = kDefaultShapeCap) {
    require(!margins.empty(), "fit_weibull: no margins");
    require(shape_cap > 0.0, "fit_weibull: shape cap must be positive");
    for (double& m : margins) {
        require(std::isfinite(m) && m >= 0.0, "fit_weibull: margins must be finite and non-negative");
        m = std::max(m, kMarginFloor);
    }
    const auto [lo_it, hi_it] = std::minmax_element(margins.begin(), margins.end());
    const double top = *hi_it;
    if (margins.size() == 1 || *hi_it - *lo_it <= 1e-12 * top) return {shape_cap, top};

    // Work on x / max so powers stay in [0, 1].
    const auto n = static_cast<double>(margins.size());
    std::vector<double> logs(margins.size());
    double mean_log = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        logs[i] = std::log(margins[i] / top);
        mean_log += logs[i];
    }
    mean_log /= n;

    struct Moments {
        double s0, s1, s2;
    };
    auto moments = [&](double k) {
        Moments m{0.0, 0.0, 0.0};
        for (double l : logs) {
            const double w = std::exp(k * l);
            m.s0 += w;
            m.s1 += w * l;
            m.s2 += w * l * l;
        }
        return m;
    };
    auto g = [&](double k, const Moments& m) { return m.s1 / m.s0 - 1.0 / k - mean_log; };

    double shape;
    if (g(shape_cap, moments(shape_cap)) <= 0.0) {
        shape = shape_cap;
    } else {
        double lo = 0.0;
        double hi = shape_cap;
        double k = std::min(1.0, 0.5 * shape_cap);
        for (int it = 0; it < 200; ++it) {
            const Moments m = moments(k);
            const double val = g(k, m);
            if (val > 0.0)
                hi = k;
            else
                lo = k;
            const double mean1 = m.s1 / m.s0;
            const double slope = m.s2 / m.s0 - mean1 * mean1 + 1.0 / (k * k);
            double next = k - val / slope;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - k) <= 1e-14 * std::max(1.0, k) || hi - lo <= 1e-15 * std::max(1.0, hi)) {
                k = next;
                break;
            }
            k = next;
        }
        shape = k;
    }
    const double mean_pow = moments(shape).s0 / n;
    return {shape, top * std::pow(mean_pow, 1.0 / shape)};
}

struct ExtremeVector {
    Vector anchor;
    WeibullParams weibull;
    int class_index = 0;
};

inline double psi_inclusion(const ExtremeVector& ev, const Vector& f) {
    const double d = (f - ev.anchor).norm();
    return std::exp(-std::pow(d / ev.weibull.scale, ev.weibull.shape));
}

struct EvmConfig {
    int tail_size = 100;
    double distance_multiplier = 0.45;
    double incremental_multiplier = 0.55;
    double coverage = 0.5;
    double shape_cap = kDefaultShapeCap;
    int bank_cap_per_class = 50;
    bool full_bank = false;

    void validate() const {
        require(tail_size >= 1, "EvmConfig: tail size must be >= 1");
        require(distance_multiplier > 0.0 && incremental_multiplier > 0.0, "EvmConfig: multipliers must be positive");
        require(coverage > 0.0 && coverage <= 1.0, "EvmConfig: coverage threshold must be in (0, 1]");
        require(shape_cap > 0.0, "EvmConfig: shape cap must be positive");
        require(bank_cap_per_class >= 1, "EvmConfig: bank cap must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const EvmConfig& c) {
    j = nlohmann::json{{"tail_size", c.tail_size},
                       {"distance_multiplier", c.distance_multiplier},
                       {"incremental_multiplier", c.incremental_multiplier},
                       {"coverage", c.coverage},
                       {"shape_cap", c.shape_cap},
                       {"bank_cap_per_class", c.bank_cap_per_class},
                       {"full_bank", c.full_bank}};
}

inline void from_json(const nlohmann::json& j, EvmConfig& c) {
    const EvmConfig d;
    c.tail_size = j.value("tail_size", d.tail_size);
    c.distance_multiplier = j.value("distance_multiplier", d.distance_multiplier);
    c.incremental_multiplier = j.value("incremental_multiplier", d.incremental_multiplier);
    c.coverage = j.value("coverage", d.coverage);
    c.shape_cap = j.value("shape_cap", d.shape_cap);
    c.bank_cap_per_class = j.value("bank_cap_per_class", d.bank_cap_per_class);
    c.full_bank = j.value("full_bank", d.full_bank);
}

struct EvmModel {
    EvmConfig config;
    int dim = 0;
    std::vector<std::vector<ExtremeVector>> classes;

    Index class_count() const { return static_cast<Index>(classes.size()); }

    std::size_t extreme_vector_count() const {
        std::size_t n = 0;
        for (const auto& c : classes) n += c.size();
        return n;
    }
};

// Greedy set cover: an extreme vector covers every same-class anchor whose
// inclusion under it is >= coverage. Repeatedly keep the one covering the
// most uncovered anchors (ties: lowest index). Returns kept indices in pick
// order.
inline std::vector<std::size_t> greedy_cover(const std::vector<ExtremeVector>& evs, double coverage) {
    require(coverage > 0.0 && coverage <= 1.0, "reduce_model: coverage must be in (0, 1]");
    const std::size_t n = evs.size();
    std::vector<std::vector<std::size_t>> covers(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i == j || psi_inclusion(evs[i], evs[j].anchor) >= coverage) covers[i].push_back(j);

    std::vector<bool> covered(n, false);
    std::size_t remaining = n;
    std::vector<std::size_t> kept;
    while (remaining > 0) {
        std::size_t best = 0;
        std::size_t best_gain = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t gain = 0;
            for (std::size_t j : covers[i]) gain += covered[j] ? 0 : 1;
            if (gain > best_gain) {
                best_gain = gain;
                best = i;
            }
        }
        kept.push_back(best);
        for (std::size_t j : covers[best]) {
            if (!covered[j]) {
                covered[j] = true;
                --remaining;
            }
        }
    }
    return kept;
}

inline std::vector<ExtremeVector> reduce_model(const std::vector<ExtremeVector>& evs, double coverage) {
    std::vector<ExtremeVector> out;
    for (std::size_t i : greedy_cover(evs, coverage)) out.push_back(evs[i]);
    return out;
}

// One extreme vector per anchor, fitted against the negatives, then reduced.
inline std::vector<ExtremeVector> fit_class_extreme_vectors(const RowMatrix& anchors, const RowMatrix& negatives,
                                                            double multiplier, const EvmConfig& config,
                                                            int class_index) {
    require(anchors.rows() > 0, "fit_class_extreme_vectors: no anchors");
    std::vector<ExtremeVector> evs;
    evs.reserve(static_cast<std::size_t>(anchors.rows()));
    for (Index r = 0; r < anchors.rows(); ++r) {
        Vector a = anchors.row(r).transpose();
        auto margins = compute_margins(a, negatives, multiplier, config.tail_size);
        evs.push_back({std::move(a), fit_weibull(std::move(margins), config.shape_cap), class_index});
    }
    return reduce_model(evs, config.coverage);
}

namespace detail {

inline RowMatrix stack_rows(const std::vector<const RowMatrix*>& parts, Index dim) {
    Index rows = 0;
    for (const auto* p : parts) rows += p->rows();
    RowMatrix out(rows, dim);
    Index at = 0;
    for (const auto* p : parts) {
        out.middleRows(at, p->rows()) = *p;
        at += p->rows();
    }
    return out;
}

}  // namespace detail

// Trains one class per entry of `by_class`; every point of a class is
// fitted against all points of the other classes.
inline EvmModel evm_train(const std::vector<RowMatrix>& by_class, const EvmConfig& config) {
    config.validate();
    require(by_class.size() >= 2, "evm_train: need at least 2 classes");
    const Index dim = by_class.front().cols();
    for (const auto& c : by_class) {
        require(c.rows() > 0, "evm_train: empty class");
        require_dim(c.cols(), dim, "evm_train");
    }
    EvmModel model{config, static_cast<int>(dim), {}};
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<const RowMatrix*> others;
        for (std::size_t o = 0; o < by_class.size(); ++o)
            if (o != c) others.push_back(&by_class[o]);
        const RowMatrix negatives = detail::stack_rows(others, dim);
        model.classes.push_back(fit_class_extreme_vectors(by_class[c], negatives, config.distance_multiplier, config,
                                                          static_cast<int>(c)));
    }
    return model;
}

// Per-class inclusion probability: max over the class's extreme vectors.
inline Vector evm_class_probabilities(const EvmModel& model, const Vector& f) {
    require_dim(f.size(), model.dim, "evm_class_probabilities");
    Vector q = Vector::Zero(model.class_count());
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        double best = 0.0;
        for (const auto& ev : model.classes[c]) best = std::max(best, psi_inclusion(ev, f));
        q[static_cast<Index>(c)] = best;
    }
    return q;
}

// p = concat(1 - max q, q) / sum
inline AugmentedProbs evm_predict(const EvmModel& model, const Vector& f) {
    require(model.class_count() > 0, "evm_predict: empty model");
    return augment_probabilities(evm_class_probabilities(model, f));
}

// Stored negatives for incremental fitting: pretraining classes followed by
// every learned cluster.
struct FeatureBank {
    int dim = 0;
    int cap_per_class = 50;
    bool full = false;
    std::vector<RowMatrix> classes;

    Index total_rows() const {
        Index n = 0;
        for (const auto& c : classes) n += c.rows();
        return n;
    }

    // Evenly strided subsample of at most cap rows.
    RowMatrix subsample(const RowMatrix& rows) const {
        if (full || rows.rows() <= cap_per_class) return rows;
        RowMatrix out(cap_per_class, rows.cols());
        for (Index k = 0; k < cap_per_class; ++k) out.row(k) = rows.row(k * rows.rows() / cap_per_class);
        return out;
    }

    // Pretraining classes are subsampled; learned clusters are kept whole.
    void add(const RowMatrix& rows, bool thin = false) {
        if (dim == 0) dim = static_cast<int>(rows.cols());
        require_dim(rows.cols(), dim, "FeatureBank::add");
        classes.push_back(thin ? subsample(rows) : rows);
    }

    RowMatrix stacked() const {
        std::vector<const RowMatrix*> parts;
        for (const auto& c : classes) parts.push_back(&c);
        return detail::stack_rows(parts, dim);
    }
};

inline FeatureBank make_feature_bank(const std::vector<RowMatrix>& by_class, const EvmConfig& config) {
    FeatureBank bank{0, config.bank_cap_per_class, config.full_bank, {}};
    for (const auto& c : by_class) bank.add(c, true);
    return bank;
}

struct NewCluster {
    RowMatrix features;
    // Extends an existing class instead of appending a new one.
    std::optional<Index> target_class;
};

// Each cluster is fitted with the incremental multiplier against the bank
// plus the other clusters of this step, then appended as a new class (or
// merged into its target class). Existing extreme vectors are untouched.
// All clusters then join the bank.
inline std::pair<EvmModel, FeatureBank> evm_increment(EvmModel model, FeatureBank bank,
                                                      const std::vector<NewCluster>& clusters) {
    if (clusters.empty()) return {std::move(model), std::move(bank)};
    if (model.dim == 0) model.dim = static_cast<int>(clusters.front().features.cols());
    for (const auto& c : clusters) {
        require(c.features.rows() > 0, "evm_increment: empty cluster");
        require_dim(c.features.cols(), model.dim, "evm_increment");
        if (c.target_class) require(*c.target_class >= 0 && *c.target_class < model.class_count(),
                                    "evm_increment: target class out of range");
    }
    if (bank.dim == 0) bank.dim = model.dim;

    std::vector<std::vector<ExtremeVector>> fitted;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        std::vector<const RowMatrix*> parts;
        for (const auto& b : bank.classes) parts.push_back(&b);
        for (std::size_t o = 0; o < clusters.size(); ++o)
            if (o != i) parts.push_back(&clusters[o].features);
        const RowMatrix negatives = detail::stack_rows(parts, model.dim);
        require(negatives.rows() > 0, "evm_increment: cluster has no negatives");
        fitted.push_back(fit_class_extreme_vectors(clusters[i].features, negatives,
                                                   model.config.incremental_multiplier, model.config, 0));
    }
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const Index cls = clusters[i].target_class.value_or(model.class_count());
        for (auto& ev : fitted[i]) ev.class_index = static_cast<int>(cls);
        if (cls == model.class_count())
            model.classes.push_back(std::move(fitted[i]));
        else
            for (auto& ev : fitted[i]) model.classes[static_cast<std::size_t>(cls)].push_back(std::move(ev));
    }
    for (const auto& c : clusters) bank.add(c.features);
    return {std::move(model), std::move(bank)};
}

}  // namespace owl
