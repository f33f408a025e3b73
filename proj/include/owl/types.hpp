#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace owl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Feature rows are stored one sample per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Label value for samples without ground truth.
inline constexpr int kUnlabeled = -1;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition or argument violation.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Malformed or unreadable file.
class FormatError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw InvalidArgument(what);
}

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidArgument(what);
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

inline void require_dim(Index got, Index want, const char* where) {
    if (got != want) {
        throw InvalidArgument(std::string(where) + ": dimension mismatch (got " +
                              std::to_string(got) + ", expected " + std::to_string(want) + ")");
    }
}

// Softmax in place, max-shifted. Entries equal to -inf map to exactly zero.
inline Vector softmax(const Vector& logits) {
    require(logits.size() > 0, "softmax: empty vector");
    const double m = logits.maxCoeff();
    Vector out(logits.size());
    if (!std::isfinite(m)) {
        // all -inf: uniform is the only sensible limit
        out.setConstant(1.0 / static_cast<double>(logits.size()));
        return out;
    }
    double sum = 0.0;
    for (Index i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    return out / sum;
}

inline double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

inline Index argmax_first(const Vector& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace owl
