#pragma once

// Accuracy, B3 (matrix formulation), NMI, macro-F1 and the open-world metric.

#include "owl/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

namespace owl {

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    require(!truth.empty(), "accuracy: empty input");
    require(predicted.size() == truth.size(), "accuracy: length mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

struct B3Score {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

// Membership matrices are items x groups (rows may be fuzzy).
// A = Y^T K, M = A .* A, T = colsum(Y), S = colsum(K);
// P = sum(M colsum / S) / n, R = sum(M rowsum / T) / n.
inline B3Score b3(const Matrix& truth_membership, const Matrix& cluster_membership) {
    require(truth_membership.rows() > 0, "b3: empty input");
    require(truth_membership.rows() == cluster_membership.rows(), "b3: length mismatch");
    const Matrix a = truth_membership.transpose() * cluster_membership;
    const Matrix m = a.cwiseProduct(a);
    const Vector t = truth_membership.colwise().sum().transpose();
    const Vector s = cluster_membership.colwise().sum().transpose();
    const double n = truth_membership.sum();
    const Vector mc = m.colwise().sum().transpose();
    const Vector mr = m.rowwise().sum();
    double p = 0.0, r = 0.0;
    for (Index k = 0; k < s.size(); ++k)
        if (s[k] > 0.0) p += mc[k] / s[k];
    for (Index y = 0; y < t.size(); ++y)
        if (t[y] > 0.0) r += mr[y] / t[y];
    B3Score out{p / n, r / n, 0.0};
    out.f = out.precision + out.recall > 0.0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
    return out;
}

namespace detail {

// One-hot membership over the distinct values (dense column per value).
inline Matrix one_hot(const std::vector<int>& labels) {
    std::map<int, Index> column;
    for (int l : labels) column.emplace(l, static_cast<Index>(column.size()));
    Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), static_cast<Index>(column.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Index>(i), column[labels[i]]) = 1.0;
    return m;
}

}  // namespace detail

inline B3Score b3(const std::vector<int>& clusters, const std::vector<int>& truth) {
    require(!truth.empty(), "b3: empty input");
    require(clusters.size() == truth.size(), "b3: length mismatch");
    return b3(detail::one_hot(truth), detail::one_hot(clusters));
}

// Mutual information over the arithmetic mean of the two entropies; 0/0 -> 0.
inline double nmi(const std::vector<int>& clusters, const std::vector<int>& truth) {
    require(!truth.empty(), "nmi: empty input");
    require(clusters.size() == truth.size(), "nmi: length mismatch");
    const Matrix a = detail::one_hot(truth).transpose() * detail::one_hot(clusters);
    const double n = static_cast<double>(truth.size());
    const Vector rt = a.rowwise().sum();
    const Vector ck = a.colwise().sum().transpose();
    auto entropy = [n](const Vector& c) {
        double h = 0.0;
        for (Index i = 0; i < c.size(); ++i)
            if (c[i] > 0.0) h -= c[i] / n * std::log(c[i] / n);
        return h;
    };
    double mi = 0.0;
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            if (a(i, j) > 0.0) mi += a(i, j) / n * std::log(n * a(i, j) / (rt[i] * ck[j]));
    const double denom = 0.5 * (entropy(rt) + entropy(ck));
    if (denom <= 0.0) return 0.0;
    return std::clamp(mi / denom, 0.0, 1.0);
}

// Unweighted mean over true classes of per-class F1.
inline double macro_f1(const std::vector<int>& predicted, const std::vector<int>& truth) {
    require(!truth.empty(), "macro_f1: empty input");
    require(predicted.size() == truth.size(), "macro_f1: length mismatch");
    std::map<int, int> tp, fp, fn;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        fn[truth[i]];
        if (predicted[i] == truth[i]) {
            ++tp[truth[i]];
        } else {
            ++fn[truth[i]];
            ++fp[predicted[i]];
        }
    }
    double sum = 0.0;
    for (const auto& [label, misses] : fn) {
        const double t = tp[label];
        const double denom = 2.0 * t + fp[label] + misses;
        sum += denom > 0.0 ? 2.0 * t / denom : 0.0;
    }
    return sum / static_cast<double>(fn.size());
}

// Items routed into the four (truth, prediction) groups. Labels are kept for
// the correctly routed known (KK) and unknown (UU) groups.
struct OwmInputs {
    std::size_t n_kk = 0, n_ku = 0, n_uk = 0, n_uu = 0;
    std::vector<int> kk_predicted, kk_truth;
    std::vector<int> uu_predicted, uu_truth;

    std::size_t total() const { return n_kk + n_ku + n_uk + n_uu; }
};

using SupervisedMetric = std::function<double(const std::vector<int>&, const std::vector<int>&)>;
using ClusteringMetric = std::function<double(const std::vector<int>&, const std::vector<int>&)>;

// (N_KK * known(X_KK) + N_UU * unknown(X_UU)) / N with pluggable slots.
inline double owm(const OwmInputs& in, const SupervisedMetric& known_metric, const ClusteringMetric& unknown_metric) {
    require(in.total() > 0, "owm: no items");
    require(in.kk_predicted.size() == in.n_kk && in.kk_truth.size() == in.n_kk, "owm: KK labels do not match N_KK");
    require(in.uu_predicted.size() == in.n_uu && in.uu_truth.size() == in.n_uu, "owm: UU labels do not match N_UU");
    double score = 0.0;
    if (in.n_kk > 0) score += static_cast<double>(in.n_kk) * known_metric(in.kk_predicted, in.kk_truth);
    if (in.n_uu > 0) score += static_cast<double>(in.n_uu) * unknown_metric(in.uu_predicted, in.uu_truth);
    return score / static_cast<double>(in.total());
}

// Accuracy on KK and B3 F on UU.
inline double owm(const OwmInputs& in) {
    return owm(in, accuracy, [](const std::vector<int>& c, const std::vector<int>& t) { return b3(c, t).f; });
}

// Macro-F1 on KK and NMI on UU.
inline double owm_f1_nmi(const OwmInputs& in) { return owm(in, macro_f1, nmi); }

}  // namespace owl
