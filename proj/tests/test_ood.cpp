#include "owl/ood.hpp"

#include "test_support.hpp"

#include <algorithm>

namespace owl {
namespace {

DetectorConfig detector(DetectorKind kind) {
    DetectorConfig c;
    c.kind = kind;
    return c;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

TEST(Knownness, SoftmaxExample) {
    const double e2 = std::exp(2.0);
    EXPECT_NEAR(knownness_score(detector(DetectorKind::softmax), vec({2, 0, 0})), e2 / (e2 + 2.0), 1e-12);
    EXPECT_NEAR(knownness_score(detector(DetectorKind::softmax), vec({2, 0, 0})), 0.7869, 1e-4);
}

TEST(Knownness, EnergyExample) {
    EXPECT_NEAR(knownness_score(detector(DetectorKind::energy), vec({0, 0})), std::log(2.0), 1e-12);
}

TEST(Knownness, EnergyTemperature) {
    auto c = detector(DetectorKind::energy);
    c.temperature = 2.0;
    // T log(e^{1/T} + e^{3/T})
    EXPECT_NEAR(knownness_score(c, vec({1, 3})), 2.0 * std::log(std::exp(0.5) + std::exp(1.5)), 1e-12);
}

TEST(Knownness, EvmScoreIsMax) {
    EXPECT_DOUBLE_EQ(knownness_score(detector(DetectorKind::evm_score), vec({0.1, 0.9, 0.3})), 0.9);
}

TEST(Knownness, RejectsEmptyAndNonFinite) {
    EXPECT_THROW(knownness_score(detector(DetectorKind::softmax), Vector()), InvalidArgument);
    EXPECT_THROW(knownness_score(detector(DetectorKind::softmax), vec({1, std::nan("")})), InvalidArgument);
}

TEST(Knownness, SoftmaxShiftInvariant) {
    std::mt19937_64 gen(7);
    for (int t = 0; t < 100; ++t) {
        const Vector l = test::random_vector(gen, 5, 3.0);
        const double shift = std::uniform_real_distribution<double>(-50, 50)(gen);
        EXPECT_NEAR(knownness_score(detector(DetectorKind::softmax), l),
                    knownness_score(detector(DetectorKind::softmax), (l.array() + shift).matrix()), 1e-12);
    }
}

TEST(Knownness, EnergyMonotoneInEachLogit) {
    std::mt19937_64 gen(8);
    for (int t = 0; t < 100; ++t) {
        Vector l = test::random_vector(gen, 4, 2.0);
        const double before = knownness_score(detector(DetectorKind::energy), l);
        l[t % 4] += std::uniform_real_distribution<double>(0, 3)(gen);
        EXPECT_GE(knownness_score(detector(DetectorKind::energy), l), before);
    }
}

std::vector<double> hundredths() {
    std::vector<double> s;
    for (int i = 1; i <= 100; ++i) s.push_back(i / 100.0);
    return s;
}

TEST(Calibration, HundredthsExample) {
    const auto c = calibrate_threshold(detector(DetectorKind::softmax), hundredths());
    ASSERT_TRUE(c.threshold);
    EXPECT_DOUBLE_EQ(*c.threshold, 0.06);
}

TEST(Calibration, ConstantScores) {
    const auto c = calibrate_threshold(detector(DetectorKind::softmax), std::vector<double>(30, 0.5));
    EXPECT_DOUBLE_EQ(*c.threshold, 0.5);
}

TEST(Calibration, FullTprTakesMinimum) {
    auto d = detector(DetectorKind::softmax);
    d.target_tpr = 1.0;
    std::vector<double> s = hundredths();
    std::reverse(s.begin(), s.end());
    EXPECT_DOUBLE_EQ(*calibrate_threshold(d, s).threshold, 0.01);
}

TEST(Calibration, TooFewScores) {
    EXPECT_THROW(calibrate_threshold(detector(DetectorKind::softmax), std::vector<double>(19, 0.5)), InvalidArgument);
}

// Brute force: the largest candidate threshold whose pass rate meets the target.
double brute_threshold(const std::vector<double>& scores, double tpr) {
    double best = -std::numeric_limits<double>::infinity();
    for (double cand : scores) {
        const auto pass = std::count_if(scores.begin(), scores.end(), [cand](double s) { return s >= cand; });
        if (static_cast<double>(pass) >= tpr * static_cast<double>(scores.size()) - 1e-9) best = std::max(best, cand);
    }
    return best;
}

TEST(Calibration, MatchesBruteForceAndIsTight) {
    std::mt19937_64 gen(9);
    for (int t = 0; t < 200; ++t) {
        const auto n = std::uniform_int_distribution<int>(20, 120)(gen);
        std::vector<double> s(static_cast<std::size_t>(n));
        // coarse grid so ties are common
        for (auto& x : s) x = std::uniform_int_distribution<int>(0, 30)(gen) / 30.0;
        auto d = detector(DetectorKind::softmax);
        d.target_tpr = std::uniform_real_distribution<double>(0.5, 1.0)(gen);
        const double tau = *calibrate_threshold(d, s).threshold;
        EXPECT_DOUBLE_EQ(tau, brute_threshold(s, d.target_tpr));
        const auto pass = std::count_if(s.begin(), s.end(), [tau](double x) { return x >= tau; });
        EXPECT_GE(static_cast<double>(pass), d.target_tpr * n - 1e-9);
        double next = std::numeric_limits<double>::infinity();
        for (double x : s)
            if (x > tau) next = std::min(next, x);
        if (std::isfinite(next)) {
            const auto pass_next = std::count_if(s.begin(), s.end(), [next](double x) { return x >= next; });
            EXPECT_LT(static_cast<double>(pass_next), d.target_tpr * n - 1e-9);
        }
    }
}

TEST(FeatureRange, InsideAndOutside) {
    RowMatrix train(2, 2);
    train << 0, 0, 2, 2;
    const auto b = FeatureBounds::learn(train, 1.0);
    EXPECT_EQ(clamp_feature_range(vec({1, 1}), b), RangeCheck::in_range);
    EXPECT_EQ(clamp_feature_range(vec({1, 2.5}), b), RangeCheck::out_of_range);
}

TEST(FeatureRange, SlackExpandsAroundCenter) {
    RowMatrix train(2, 1);
    train << 0, 2;
    const auto b = FeatureBounds::learn(train, 1.5);
    EXPECT_DOUBLE_EQ(b.lower[0], -0.5);
    EXPECT_DOUBLE_EQ(b.upper[0], 2.5);
    EXPECT_EQ(clamp_feature_range(vec({2.4}), b), RangeCheck::in_range);
    EXPECT_EQ(clamp_feature_range(vec({2.6}), b), RangeCheck::out_of_range);
}

TEST(FeatureRange, DoubledWidthGivesMinusOneToThree) {
    RowMatrix train(2, 1);
    train << 0, 2;
    const auto b = FeatureBounds::learn(train, 2.0);
    EXPECT_DOUBLE_EQ(b.lower[0], -1.0);
    EXPECT_DOUBLE_EQ(b.upper[0], 3.0);
    EXPECT_EQ(clamp_feature_range(vec({2.9}), b), RangeCheck::in_range);
}

TEST(FeatureRange, WrongDimensionIsOutOfRange) {
    RowMatrix train(2, 2);
    train << 0, 0, 1, 1;
    EXPECT_EQ(clamp_feature_range(vec({0.5}), FeatureBounds::learn(train)), RangeCheck::out_of_range);
}

TEST(DetectorJson, RoundTripAndRejectsUnknownKind) {
    DetectorConfig c = detector(DetectorKind::energy);
    c.temperature = 2.5;
    c.threshold = 0.125;
    const auto back = nlohmann::json(c).get<DetectorConfig>();
    EXPECT_EQ(back.kind, DetectorKind::energy);
    EXPECT_EQ(back.temperature, 2.5);
    EXPECT_EQ(*back.threshold, 0.125);
    EXPECT_THROW((nlohmann::json{{"kind", "odin"}}.get<DetectorConfig>()), InvalidArgument);
}

}  // namespace
}  // namespace owl
