#pragma once

// Open-world Gaussian class model with a singularity-tolerant inverse.

#include "owl/learners/augment.hpp"
#include "owl/learners/ncm.hpp"

#include <Eigen/Eigenvalues>

#include <vector>

namespace owl {

inline constexpr double kCovarianceDetFloor = 1e-4;
inline constexpr double kZeroDiagonalBoost = 1000.0;

// Moore-Penrose pseudo-inverse of a symmetric matrix.
inline Matrix symmetric_pseudo_inverse(const Matrix& sigma) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    const Vector& values = eig.eigenvalues();
    const double largest = values.cwiseAbs().maxCoeff();
    const double tol = largest * static_cast<double>(sigma.rows()) * std::numeric_limits<double>::epsilon();
    Vector inv = Vector::Zero(values.size());
    for (Index i = 0; i < values.size(); ++i)
        if (std::abs(values[i]) > tol) inv[i] = 1.0 / values[i];
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

// |sigma| >= eps: exact inverse. Otherwise the pseudo-inverse, with
// 1000 * max(pinv) added on every diagonal position where pinv is zero.
inline Matrix ogmm_robust_inverse(const Matrix& sigma, double eps = kCovarianceDetFloor) {
    require(sigma.rows() == sigma.cols() && sigma.rows() > 0, "ogmm_robust_inverse: matrix must be square");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    require((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale,
            "ogmm_robust_inverse: matrix is not symmetric");
    if (sigma.determinant() >= eps) return sigma.inverse();

    Matrix pinv = symmetric_pseudo_inverse(sigma);
    const double zero_tol = 1e-12 * std::max(1.0, pinv.cwiseAbs().maxCoeff());
    for (Index i = 0; i < pinv.rows(); ++i)
        for (Index j = 0; j < pinv.cols(); ++j)
            if (std::abs(pinv(i, j)) <= zero_tol) pinv(i, j) = 0.0;
    const double top = pinv.maxCoeff();
    for (Index i = 0; i < pinv.rows(); ++i)
        if (pinv(i, i) == 0.0) pinv(i, i) += kZeroDiagonalBoost * top;
    return pinv;
}

struct GmmState {
    int dim = 0;
    double scale = 10.0;
    double eps = kCovarianceDetFloor;
    std::vector<int> class_ids;
    std::vector<Vector> means;
    std::vector<Matrix> covariances;
    std::vector<Matrix> inverses;  // ogmm_robust_inverse of each covariance
    std::vector<int> counts;

    Index class_count() const { return static_cast<Index>(means.size()); }
};

// Population covariance (divides by n).
inline Matrix population_covariance(const RowMatrix& x, const Vector& mean) {
    const Matrix centered = x.rowwise() - mean.transpose();
    return centered.transpose() * centered / static_cast<double>(x.rows());
}

inline GmmState ogmm_update(GmmState state, const RowMatrix& cluster, int class_id) {
    require(cluster.rows() >= 2, "ogmm_update: cluster needs at least 2 points");
    if (state.dim == 0) state.dim = static_cast<int>(cluster.cols());
    require_dim(cluster.cols(), state.dim, "ogmm_update");
    require(std::find(state.class_ids.begin(), state.class_ids.end(), class_id) == state.class_ids.end(),
            "ogmm_update: duplicate class id");
    Vector mu = row_mean(cluster);
    Matrix sigma = population_covariance(cluster, mu);
    sigma = 0.5 * (sigma + sigma.transpose());
    state.class_ids.push_back(class_id);
    state.inverses.push_back(ogmm_robust_inverse(sigma, state.eps));
    state.means.push_back(std::move(mu));
    state.covariances.push_back(std::move(sigma));
    state.counts.push_back(static_cast<int>(cluster.rows()));
    return state;
}

// q_i = softmax(-(f - mu_i)^T S_i^-1 (f - mu_i) / (2 s)), then augmented.
inline AugmentedProbs ogmm_predict(const GmmState& state, const Vector& f) {
    if (state.dim != 0) require_dim(f.size(), state.dim, "ogmm_predict");
    if (state.class_count() < kMinClassesForPrediction) return AugmentedProbs::unknown_only(state.class_count());
    Vector logits(state.class_count());
    for (Index i = 0; i < logits.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Vector z = f - state.means[k];
        logits[i] = -z.dot(state.inverses[k] * z) / (2.0 * state.scale);
    }
    return augment_probabilities(softmax(logits));
}

}  // namespace owl
