#include "owl/metrics.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

namespace owl {
namespace {

std::vector<int> random_labels(std::mt19937_64& gen, std::size_t n, int k) {
    std::uniform_int_distribution<int> d(0, k - 1);
    std::vector<int> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

TEST(Accuracy, Examples) {
    EXPECT_EQ(accuracy({1, 2, 3}, {1, 2, 3}), 1.0);
    EXPECT_EQ(accuracy({1, 1}, {2, 2}), 0.0);
    EXPECT_EQ(accuracy({1, 2, 3, 4}, {1, 2, 3, 0}), 0.75);
    EXPECT_THROW(accuracy({}, {}), InvalidArgument);
    EXPECT_THROW(accuracy({1}, {1, 2}), InvalidArgument);
}

TEST(B3, Examples) {
    const auto perfect = b3(std::vector<int>{4, 4, 7}, std::vector<int>{0, 0, 1});
    EXPECT_EQ(perfect.precision, 1.0);
    EXPECT_EQ(perfect.recall, 1.0);
    EXPECT_EQ(perfect.f, 1.0);
    const auto s = b3(std::vector<int>{1, 1, 1, 2}, std::vector<int>{0, 0, 1, 1});
    EXPECT_NEAR(s.precision, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.recall, 0.75, 1e-12);
    EXPECT_NEAR(s.f, 2 * (2.0 / 3) * 0.75 / (2.0 / 3 + 0.75), 1e-12);
    EXPECT_NEAR(s.f, 0.70588, 1e-5);
    EXPECT_THROW(b3(std::vector<int>{}, std::vector<int>{}), InvalidArgument);
}

TEST(B3, MergingEqualClasses) {
    for (int k = 1; k <= 6; ++k) {
        std::vector<int> truth;
        for (int c = 0; c < k; ++c)
            for (int i = 0; i < 5; ++i) truth.push_back(c);
        const auto s = b3(std::vector<int>(truth.size(), 0), truth);
        EXPECT_NEAR(s.precision, 1.0 / k, 1e-12);
        EXPECT_NEAR(s.recall, 1.0, 1e-12);
        EXPECT_NEAR(s.f, 2.0 / (k + 1), 1e-12);
    }
}

TEST(B3, MatchesPairwiseOracle) {
    std::mt19937_64 gen(30);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 50)(gen);
        const auto truth = random_labels(gen, n, std::uniform_int_distribution<int>(1, 8)(gen));
        const auto clusters = random_labels(gen, n, std::uniform_int_distribution<int>(1, 8)(gen));
        const auto got = b3(clusters, truth);
        const auto want = oracle::b3_pairwise(clusters, truth);
        EXPECT_NEAR(got.precision, want.precision, 1e-9);
        EXPECT_NEAR(got.recall, want.recall, 1e-9);
        EXPECT_NEAR(got.f, want.f, 1e-9);
    }
}

TEST(B3, LabelValuesDoNotMatter) {
    std::mt19937_64 gen(31);
    for (int t = 0; t < 50; ++t) {
        const auto truth = random_labels(gen, 40, 5);
        const auto clusters = random_labels(gen, 40, 4);
        auto renamed = clusters;
        for (auto& c : renamed) c = 100 - 7 * c;
        EXPECT_NEAR(b3(clusters, truth).f, b3(renamed, truth).f, 1e-12);
    }
}

TEST(Nmi, Examples) {
    EXPECT_NEAR(nmi({5, 5, 9, 9, 2}, {0, 0, 1, 1, 2}), 1.0, 1e-12);
    EXPECT_EQ(nmi({0, 0, 0, 0}, {0, 1, 0, 1}), 0.0);
    EXPECT_EQ(nmi({0, 0}, {1, 1}), 0.0);
    std::mt19937_64 gen(32);
    EXPECT_LT(nmi(random_labels(gen, 1000, 4), random_labels(gen, 1000, 4)), 0.05);
    EXPECT_THROW(nmi({}, {}), InvalidArgument);
}

TEST(Nmi, RangeAndSymmetry) {
    std::mt19937_64 gen(33);
    for (int t = 0; t < 100; ++t) {
        const auto a = random_labels(gen, 30, 4), b = random_labels(gen, 30, 6);
        const double v = nmi(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, nmi(b, a), 1e-12);
    }
}

TEST(MacroF1, Examples) {
    EXPECT_EQ(macro_f1({0, 1, 2}, {0, 1, 2}), 1.0);
    // class 0: tp 1, fn 1 -> 2/3; class 1: tp 1, fp 1 -> 2/3
    EXPECT_NEAR(macro_f1({0, 1, 1}, {0, 0, 1}), 2.0 / 3.0, 1e-12);
    EXPECT_EQ(macro_f1({1, 1}, {0, 0}), 0.0);
}

OwmInputs inputs(std::size_t kk, std::size_t ku, std::size_t uk, std::size_t uu) {
    OwmInputs in;
    in.n_kk = kk;
    in.n_ku = ku;
    in.n_uk = uk;
    in.n_uu = uu;
    in.kk_predicted.assign(kk, 0);
    in.kk_truth.assign(kk, 0);
    for (std::size_t i = 0; i < uu; ++i) {
        in.uu_predicted.push_back(static_cast<int>(i % 3));
        in.uu_truth.push_back(static_cast<int>(i % 3));
    }
    return in;
}

TEST(Owm, Examples) {
    EXPECT_EQ(owm(inputs(10, 0, 0, 0)), 1.0);
    EXPECT_EQ(owm(inputs(0, 5, 7, 0)), 0.0);
    auto in = inputs(60, 5, 5, 30);
    for (int i = 0; i < 6; ++i) in.kk_predicted[static_cast<std::size_t>(i)] = 1;  // accuracy 0.9
    const auto fixed_b3 = [](const std::vector<int>&, const std::vector<int>&) { return 0.6; };
    EXPECT_NEAR(owm(in, accuracy, fixed_b3), 0.72, 1e-12);
    EXPECT_THROW(owm(OwmInputs{}), InvalidArgument);
    auto bad = inputs(3, 0, 0, 0);
    bad.kk_truth.pop_back();
    EXPECT_THROW(owm(bad), InvalidArgument);
}

TEST(Owm, MonotoneInComponentScores) {
    std::mt19937_64 gen(34);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 100; ++t) {
        const auto in = inputs(std::uniform_int_distribution<std::size_t>(0, 20)(gen), 3, 4,
                               std::uniform_int_distribution<std::size_t>(0, 20)(gen));
        const double a1 = u(gen), a2 = u(gen), b1 = u(gen), b2 = u(gen);
        const auto k = [](double v) { return [v](const std::vector<int>&, const std::vector<int>&) { return v; }; };
        const double lo = owm(in, k(std::min(a1, a2)), k(std::min(b1, b2)));
        const double hi = owm(in, k(std::max(a1, a2)), k(std::max(b1, b2)));
        EXPECT_LE(lo, hi);
        EXPECT_GE(lo, 0.0);
        EXPECT_LE(hi, 1.0);
    }
}

TEST(Owm, GeneralizedVariantInRange) {
    std::mt19937_64 gen(35);
    for (int t = 0; t < 50; ++t) {
        OwmInputs in = inputs(0, 2, 2, 0);
        in.n_kk = 20;
        in.kk_predicted = random_labels(gen, 20, 3);
        in.kk_truth = random_labels(gen, 20, 3);
        in.n_uu = 15;
        in.uu_predicted = random_labels(gen, 15, 4);
        in.uu_truth = random_labels(gen, 15, 2);
        const double v = owm_f1_nmi(in);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

}  // namespace
}  // namespace owl
