#pragma once

#include "owl/types.hpp"

#include <vector>

namespace owl {

// Multinomial logistic regression: logits = W f + b, one row of W per class.
struct LinearHead {
    Matrix weights;  // classes x dim
    Vector bias;     // classes

    Index class_count() const { return weights.rows(); }
    Index dim() const { return weights.cols(); }

    Vector logits(const Vector& f) const {
        require_dim(f.size(), dim(), "LinearHead::logits");
        return weights * f + bias;
    }

    Vector probabilities(const Vector& f) const { return softmax(logits(f)); }
};

struct LinearTrainOptions {
    int epochs = 300;
    double step = 0.5;
    double l2 = 1e-4;
};

// Mean cross-entropy plus the L2 term on weights.
inline double cross_entropy(const LinearHead& head, const RowMatrix& x, const std::vector<int>& y, double l2) {
    const Matrix logits = (x * head.weights.transpose()).rowwise() + head.bias.transpose();
    double loss = 0.0;
    for (Index n = 0; n < x.rows(); ++n) {
        const Vector row = logits.row(n).transpose();
        loss += log_sum_exp(row) - row[y[static_cast<std::size_t>(n)]];
    }
    return loss / static_cast<double>(x.rows()) + 0.5 * l2 * head.weights.squaredNorm();
}

// Full-batch gradient descent from the head's current parameters. Steps that
// raise the loss are rejected and the step size halved, so the loss never
// increases.
inline void fit_linear_head(LinearHead& head, const RowMatrix& x, const std::vector<int>& y,
                            const LinearTrainOptions& opt = {}) {
    require(x.rows() > 0, "fit_linear_head: no samples");
    require(static_cast<std::size_t>(x.rows()) == y.size(), "fit_linear_head: label count mismatch");
    require_dim(x.cols(), head.dim(), "fit_linear_head");
    for (int label : y) require(label >= 0 && label < head.class_count(), "fit_linear_head: label out of range");

    const double n = static_cast<double>(x.rows());
    double step = opt.step;
    double loss = cross_entropy(head, x, y, opt.l2);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        Matrix logits = (x * head.weights.transpose()).rowwise() + head.bias.transpose();
        Matrix residual(logits.rows(), logits.cols());
        for (Index i = 0; i < logits.rows(); ++i) {
            residual.row(i) = softmax(logits.row(i).transpose()).transpose();
            residual(i, y[static_cast<std::size_t>(i)]) -= 1.0;
        }
        const Matrix grad_w = residual.transpose() * x / n + opt.l2 * head.weights;
        const Vector grad_b = residual.colwise().sum().transpose() / n;

        for (int attempt = 0; attempt < 30; ++attempt) {
            LinearHead trial{head.weights - step * grad_w, head.bias - step * grad_b};
            const double trial_loss = cross_entropy(trial, x, y, opt.l2);
            if (trial_loss <= loss) {
                head = std::move(trial);
                loss = trial_loss;
                break;
            }
            step *= 0.5;
        }
    }
}

inline LinearHead train_linear_head(const RowMatrix& x, const std::vector<int>& y, Index classes,
                                    const LinearTrainOptions& opt = {}) {
    LinearHead head{Matrix::Zero(classes, x.cols()), Vector::Zero(classes)};
    fit_linear_head(head, x, y, opt);
    return head;
}

}  // namespace owl
