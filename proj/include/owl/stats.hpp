#pragma once

// Two-sided paired t-test.

#include "owl/types.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <vector>

namespace owl {

struct PairedTTest {
    double t = 0.0;
    double p = 1.0;
    double mean_difference = 0.0;
    int df = 0;
    // Differences have zero variance but a nonzero mean.
    bool degenerate = false;
};

// Differences are a - b.
inline PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "paired_t_test: length mismatch");
    require(a.size() >= 2, "paired_t_test: need at least 2 pairs");
    const auto n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    PairedTTest out;
    out.mean_difference = mean;
    out.df = static_cast<int>(a.size()) - 1;
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) {
        if (mean == 0.0) return out;
        out.degenerate = true;
        out.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
        out.p = 0.0;
        return out;
    }
    out.t = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(static_cast<double>(out.df));
    out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
    return out;
}

}  // namespace owl
