#pragma once

// Open-world nearest non-outlier: nearest class mean metric learning (NCMML)
// with a low-rank metric W, gated per class by a distance threshold.

#include "owl/learners/augment.hpp"
#include "owl/learners/ncm.hpp"
#include "owl/rng.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace owl {

struct NcmmlOptions {
    int epochs = 200;
    double step = 0.1;
};

struct NnoState {
    int dim = 0;
    int rank = 4;
    double tau = 2.0;  // gate scale: a class passes when its squared metric distance < tau
    std::uint64_t seed = 0;
    Matrix metric;     // rank x dim; empty until the first fit
    std::vector<int> class_ids;
    std::vector<Vector> means;
    std::vector<RowMatrix> samples;  // per-class training features kept for refits
    NcmmlOptions options;

    Index class_count() const { return static_cast<Index>(means.size()); }
    bool fitted() const { return metric.size() > 0; }
};

// Squared metric distance ||W (x - mu)||^2 for every class.
inline Vector metric_distances(const Matrix& w, const std::vector<Vector>& means, const Vector& x) {
    const Vector wx = w * x;
    Vector d(static_cast<Index>(means.size()));
    for (std::size_t i = 0; i < means.size(); ++i) d[static_cast<Index>(i)] = (wx - w * means[i]).squaredNorm();
    return d;
}

// q_i ∝ exp(-0.5 ||W (x - mu_i)||^2)
inline Vector ncmml_posteriors(const Matrix& w, const std::vector<Vector>& means, const Vector& x) {
    return softmax(-0.5 * metric_distances(w, means, x));
}

namespace detail {

inline Matrix stack_means(const std::vector<Vector>& means, Index dim) {
    Matrix m(dim, static_cast<Index>(means.size()));
    for (std::size_t i = 0; i < means.size(); ++i) m.col(static_cast<Index>(i)) = means[i];
    return m;
}

// N x m matrix of -0.5 ||W (x_n - mu_i)||^2.
inline Matrix ncmml_scores(const Matrix& w, const Matrix& means, const RowMatrix& x) {
    const Matrix px = x * w.transpose();  // N x r
    const Matrix pm = w * means;          // r x m
    Matrix s = -2.0 * px * pm;
    s.colwise() += px.rowwise().squaredNorm();
    s.rowwise() += pm.colwise().squaredNorm();
    return -0.5 * s;
}

}  // namespace detail

// Mean negative log posterior of the true class.
inline double ncmml_loss(const Matrix& w, const std::vector<Vector>& means, const RowMatrix& x,
                         const std::vector<int>& y) {
    const Matrix s = detail::ncmml_scores(w, detail::stack_means(means, w.cols()), x);
    double loss = 0.0;
    for (Index n = 0; n < x.rows(); ++n) {
        const Vector row = s.row(n).transpose();
        loss += log_sum_exp(row) - row[y[static_cast<std::size_t>(n)]];
    }
    return loss / static_cast<double>(x.rows());
}

// dL/dW = (1/N) sum_n sum_i c_ni W z_ni z_ni^T with c_ni = 1[i = y_n] - q_ni and
// z_ni = x_n - mu_i. Because sum_i c_ni = 0 the inner sum expands to
// -x v^T - v x^T + sum_i c_ni mu_i mu_i^T with v = sum_i c_ni mu_i.
inline Matrix ncmml_gradient(const Matrix& w, const std::vector<Vector>& means, const RowMatrix& x,
                             const std::vector<int>& y) {
    const Matrix mu = detail::stack_means(means, w.cols());
    const Matrix s = detail::ncmml_scores(w, mu, x);
    Matrix c(s.rows(), s.cols());
    for (Index n = 0; n < s.rows(); ++n) {
        c.row(n) = -softmax(s.row(n).transpose()).transpose();
        c(n, y[static_cast<std::size_t>(n)]) += 1.0;
    }
    const Matrix v = c * mu.transpose();  // N x f
    const Matrix xd = x;
    Matrix a = -(xd.transpose() * v);
    a -= v.transpose() * xd;
    a.noalias() += mu * c.colwise().sum().asDiagonal() * mu.transpose();
    return w * a / static_cast<double>(x.rows());
}

inline Matrix ncmml_initial_metric(int rank, int dim, std::uint64_t seed) {
    Rng rng(seed);
    Matrix w(rank, dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-1.0, 1.0) * scale;
    return w;
}

// Gradient descent with step halving on any loss increase (the rejected step
// is not taken), so the training loss is non-increasing.
inline Matrix ncmml_fit(Matrix w, const std::vector<Vector>& means, const RowMatrix& x, const std::vector<int>& y,
                        const NcmmlOptions& opt = {}) {
    double step = opt.step;
    double loss = ncmml_loss(w, means, x, y);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const Matrix grad = ncmml_gradient(w, means, x, y);
        for (int attempt = 0; attempt < 30; ++attempt) {
            Matrix trial = w - step * grad;
            const double trial_loss = ncmml_loss(trial, means, x, y);
            if (trial_loss <= loss) {
                w = std::move(trial);
                loss = trial_loss;
                break;
            }
            step *= 0.5;
        }
    }
    return w;
}

// Refits the metric on every stored class sample.
inline NnoState ncmml_fit(NnoState state) {
    require(state.class_count() >= kMinClassesForPrediction, "ncmml_fit: need at least 3 classes");
    require(state.rank < state.dim, "ncmml_fit: rank must be smaller than the feature dimension");
    Index total = 0;
    for (const auto& s : state.samples) {
        require(s.rows() >= 2, "ncmml_fit: every class needs at least 2 samples");
        total += s.rows();
    }
    RowMatrix x(total, state.dim);
    std::vector<int> y;
    y.reserve(static_cast<std::size_t>(total));
    Index at = 0;
    for (std::size_t c = 0; c < state.samples.size(); ++c) {
        x.middleRows(at, state.samples[c].rows()) = state.samples[c];
        at += state.samples[c].rows();
        y.insert(y.end(), static_cast<std::size_t>(state.samples[c].rows()), static_cast<int>(c));
    }
    if (!state.fitted()) state.metric = ncmml_initial_metric(state.rank, state.dim, state.seed);
    state.metric = ncmml_fit(state.metric, state.means, x, y, state.options);
    return state;
}

// Adds a class; once three or more classes exist the metric is refit.
inline NnoState onno_update(NnoState state, const RowMatrix& cluster, int class_id) {
    require(cluster.rows() > 0, "onno_update: empty cluster");
    if (state.dim == 0) state.dim = static_cast<int>(cluster.cols());
    require_dim(cluster.cols(), state.dim, "onno_update");
    require(std::find(state.class_ids.begin(), state.class_ids.end(), class_id) == state.class_ids.end(),
            "onno_update: duplicate class id");
    state.class_ids.push_back(class_id);
    state.means.push_back(row_mean(cluster));
    state.samples.push_back(cluster);
    bool fit_ready = state.class_count() >= kMinClassesForPrediction && state.rank < state.dim;
    for (const auto& s : state.samples) fit_ready = fit_ready && s.rows() >= 2;
    if (fit_ready) state = ncmml_fit(std::move(state));
    return state;
}

// Gated posteriors: q_i is zeroed unless ||W (f - mu_i)||^2 < tau. No
// surviving class means all mass goes to unknown; otherwise the survivors
// share the class mass and unknown gets zero.
inline AugmentedProbs onno_predict(const NnoState& state, const Vector& f) {
    if (state.dim != 0) require_dim(f.size(), state.dim, "onno_predict");
    if (state.class_count() < kMinClassesForPrediction || !state.fitted())
        return AugmentedProbs::unknown_only(state.class_count());
    const Vector d = metric_distances(state.metric, state.means, f);
    Vector q = softmax(-0.5 * d);
    for (Index i = 0; i < q.size(); ++i)
        if (!(d[i] < state.tau)) q[i] = 0.0;
    const double total = q.sum();
    if (total <= 0.0) return AugmentedProbs::unknown_only(state.class_count());
    return {0.0, q / total};
}

}  // namespace owl
