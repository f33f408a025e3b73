#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Each one is deliberately the slow, obvious version.

#include "owl/evm.hpp"
#include "owl/learners/nno.hpp"

#include <cmath>
#include <limits>
#include <bit>
#include <numbers>
#include <vector>

namespace owl::oracle {

struct B3Reference {
    double precision, recall, f;
};

// Per-item B3: for every item, the share of its cluster that shares its class
// (precision) and the share of its class that shares its cluster (recall).
inline B3Reference b3_pairwise(const std::vector<int>& clusters, const std::vector<int>& truth) {
    const std::size_t n = truth.size();
    double p = 0.0, r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double both = 0.0, same_cluster = 0.0, same_class = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const bool c = clusters[j] == clusters[i];
            const bool t = truth[j] == truth[i];
            same_cluster += c ? 1.0 : 0.0;
            same_class += t ? 1.0 : 0.0;
            both += c && t ? 1.0 : 0.0;
        }
        p += both / same_cluster;
        r += both / same_class;
    }
    p /= static_cast<double>(n);
    r /= static_cast<double>(n);
    return {p, r, 2.0 * p * r / (p + r)};
}

// First-neighbor graph: i ~ j when either is the other's nearest neighbor or
// they share one. Components found by depth-first search, numbered by first
// appearance; later levels recluster the means of the original points.
inline std::vector<std::vector<int>> finch_levels(const RowMatrix& points, bool cosine = false) {
    auto distance = [cosine](const Vector& a, const Vector& b) {
        if (!cosine) {
            double s = 0.0;
            for (Index k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
            return s;
        }
        const double na = a.norm(), nb = b.norm();
        if (na == 0.0 || nb == 0.0) return 1.0;
        return 1.0 - a.dot(b) / (na * nb);
    };
    std::vector<std::vector<int>> levels;
    const auto n0 = static_cast<std::size_t>(points.rows());
    std::vector<int> membership(n0);
    for (std::size_t i = 0; i < n0; ++i) membership[i] = static_cast<int>(i);
    std::vector<Vector> current;
    for (std::size_t i = 0; i < n0; ++i) current.push_back(points.row(static_cast<Index>(i)).transpose());

    while (current.size() > 1) {
        const std::size_t n = current.size();
        std::vector<std::size_t> nn(n);
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = distance(current[i], current[j]);
                if (d < best) {
                    best = d;
                    nn[i] = j;
                }
            }
        }
        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j && (nn[i] == j || nn[j] == i || nn[i] == nn[j])) adj[i][j] = true;
        std::vector<int> comp(n, -1);
        int count = 0;
        for (std::size_t s = 0; s < n; ++s) {
            if (comp[s] >= 0) continue;
            std::vector<std::size_t> stack{s};
            comp[s] = count;
            while (!stack.empty()) {
                const std::size_t u = stack.back();
                stack.pop_back();
                for (std::size_t v = 0; v < n; ++v)
                    if (adj[u][v] && comp[v] < 0) {
                        comp[v] = count;
                        stack.push_back(v);
                    }
            }
            ++count;
        }
        std::vector<int> labels(n0);
        for (std::size_t i = 0; i < n0; ++i) labels[i] = comp[static_cast<std::size_t>(membership[i])];
        levels.push_back(labels);
        membership = labels;
        std::vector<Vector> next(static_cast<std::size_t>(count), Vector::Zero(points.cols()));
        std::vector<double> sizes(static_cast<std::size_t>(count), 0.0);
        for (std::size_t i = 0; i < n0; ++i) {
            next[static_cast<std::size_t>(labels[i])] += points.row(static_cast<Index>(i)).transpose();
            sizes[static_cast<std::size_t>(labels[i])] += 1.0;
        }
        for (std::size_t c = 0; c < next.size(); ++c) next[c] /= sizes[c];
        current = std::move(next);
    }
    if (levels.empty()) levels.push_back(std::vector<int>(n0, 0));
    return levels;
}

struct GridOptimum {
    double shape, scale, log_likelihood;
};

// Exhaustive log-spaced grid over shape in [0.05, 50] and scale in [0.1, 10].
inline GridOptimum weibull_grid(const std::vector<double>& x, int steps = 400) {
    GridOptimum best{0, 0, -std::numeric_limits<double>::infinity()};
    for (int a = 0; a < steps; ++a) {
        const double k = 0.05 * std::pow(1000.0, a / static_cast<double>(steps - 1));
        for (int b = 0; b < steps; ++b) {
            const double lambda = 0.1 * std::pow(100.0, b / static_cast<double>(steps - 1));
            double ll = 0.0;
            for (double v : x) ll += std::log(k / lambda) + (k - 1.0) * std::log(v / lambda) - std::pow(v / lambda, k);
            if (ll > best.log_likelihood) best = {k, lambda, ll};
        }
    }
    return best;
}

inline Matrix ncmml_finite_difference(const Matrix& w, const std::vector<Vector>& means, const RowMatrix& x,
                                      const std::vector<int>& y, double h = 1e-6) {
    Matrix g(w.rows(), w.cols());
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j) {
            Matrix plus = w, minus = w;
            plus(i, j) += h;
            minus(i, j) -= h;
            g(i, j) = (ncmml_loss(plus, means, x, y) - ncmml_loss(minus, means, x, y)) / (2.0 * h);
        }
    return g;
}

// P(|T| <= t) for integer degrees of freedom via the finite trigonometric
// series for the Student t distribution.
inline double student_central_mass(double t, int df) {
    const double theta = std::atan(std::abs(t) / std::sqrt(static_cast<double>(df)));
    const double s = std::sin(theta), c = std::cos(theta);
    if (df % 2 == 1) {
        double sum = 0.0;
        if (df > 1) {
            double term = c;
            sum = term;
            for (int k = 3; k <= df - 2; k += 2) {
                term *= c * c * static_cast<double>(k - 1) / static_cast<double>(k);
                sum += term;
            }
        }
        return 2.0 / std::numbers::pi * (theta + s * sum);
    }
    double term = 1.0, sum = 1.0;
    for (int k = 2; k <= df - 2; k += 2) {
        term *= c * c * static_cast<double>(k - 1) / static_cast<double>(k);
        sum += term;
    }
    return s * sum;
}

struct TReference {
    double t, p;
};

// Textbook paired t from raw sums.
inline TReference paired_t(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s1 += d;
        s2 += d * d;
    }
    const double var = (s2 - s1 * s1 / n) / (n - 1.0);
    const double t = (s1 / n) / std::sqrt(var / n);
    return {t, 1.0 - student_central_mass(t, static_cast<int>(a.size()) - 1)};
}

// Smallest set of extreme vectors covering every anchor (exhaustive, n <= 16).
inline std::size_t minimal_cover_size(const std::vector<ExtremeVector>& evs, double coverage) {
    const std::size_t n = evs.size();
    std::vector<unsigned> mask(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i == j || psi_inclusion(evs[i], evs[j].anchor) >= coverage) mask[i] |= 1u << j;
    const unsigned all = (1u << n) - 1u;
    std::size_t best = n;
    for (unsigned subset = 1; subset <= all; ++subset) {
        const auto size = static_cast<std::size_t>(std::popcount(subset));
        if (size >= best) continue;
        unsigned covered = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (subset & (1u << i)) covered |= mask[i];
        if (covered == all) best = size;
    }
    return best;
}

}  // namespace owl::oracle
