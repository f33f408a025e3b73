#include "owl/finch.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <set>

namespace owl {
namespace {

RowMatrix column(std::initializer_list<double> v) {
    RowMatrix m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

TEST(Finch, TwoPairs) {
    const auto ps = finch_partitions(column({0, 1, 10, 11}));
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps.levels[0], (std::vector<int>{0, 0, 1, 1}));
    EXPECT_EQ(ps.levels[1], (std::vector<int>{0, 0, 0, 0}));
}

TEST(Finch, EvenlySpacedTripleIsOneCluster) {
    // ties go to the lowest index, so 1 links to 0 and 2 links to 1
    const auto ps = finch_partitions(column({0, 1, 2}));
    ASSERT_EQ(ps.size(), 1u);
    EXPECT_EQ(ps.levels[0], (std::vector<int>{0, 0, 0}));
}

TEST(Finch, IdenticalPoints) {
    RowMatrix x = RowMatrix::Constant(5, 3, 0.25);
    const auto ps = finch_partitions(x);
    ASSERT_EQ(ps.size(), 1u);
    EXPECT_EQ(ps.levels[0], std::vector<int>(5, 0));
}

TEST(Finch, FewerThanTwoPointsRejected) {
    EXPECT_THROW(finch_partitions(RowMatrix(1, 2)), InvalidArgument);
    EXPECT_THROW(finch_partitions(RowMatrix(0, 2)), InvalidArgument);
}

TEST(Finch, FirstNeighborTiesGoToLowestIndex) {
    EXPECT_EQ(detail::first_neighbors(column({5, 4, 6}), FinchMetric::euclidean),
              (std::vector<std::size_t>{1, 0, 0}));
}

TEST(Finch, MatchesOracleOnRandomSets) {
    std::mt19937_64 gen(11);
    for (int t = 0; t < 100; ++t) {
        const Index n = std::uniform_int_distribution<Index>(2, 60)(gen);
        const Index d = std::uniform_int_distribution<Index>(1, 5)(gen);
        RowMatrix x = test::random_rows(gen, n, d);
        if (t % 3 == 0) x = x.array().round();  // exact ties on an integer grid
        const bool cosine = t % 4 == 1;
        if (cosine)
            for (Index r = 0; r < n; ++r)
                if (x.row(r).norm() == 0.0) x(r, 0) = 1.0;
        const auto ps = finch_partitions(x, cosine ? FinchMetric::cosine : FinchMetric::euclidean);
        EXPECT_EQ(ps.levels, oracle::finch_levels(x, cosine)) << "trial " << t;
    }
}

TEST(Finch, LevelsCoarsenToOneCluster) {
    std::mt19937_64 gen(12);
    for (int t = 0; t < 30; ++t) {
        const RowMatrix x = test::random_rows(gen, std::uniform_int_distribution<Index>(2, 200)(gen), 4);
        const auto ps = finch_partitions(x);
        ASSERT_FALSE(ps.levels.empty());
        EXPECT_EQ(PartitionSet::cluster_count(ps.levels.back()), 1);
        for (std::size_t l = 0; l < ps.size(); ++l) {
            const auto& lab = ps.levels[l];
            // labels appear in increasing order
            int seen = -1;
            for (int v : lab) {
                EXPECT_LE(v, seen + 1);
                seen = std::max(seen, v);
            }
            // level 0 never has singletons
            if (l == 0) {
                std::vector<int> count(static_cast<std::size_t>(PartitionSet::cluster_count(lab)), 0);
                for (int v : lab) ++count[static_cast<std::size_t>(v)];
                for (int c : count) EXPECT_GE(c, 2);
            }
            if (l == 0) continue;
            // nested: points sharing a cluster keep sharing it, and the count strictly drops
            const auto& prev = ps.levels[l - 1];
            std::vector<int> parent(static_cast<std::size_t>(PartitionSet::cluster_count(prev)), -1);
            for (std::size_t i = 0; i < lab.size(); ++i) {
                auto& p = parent[static_cast<std::size_t>(prev[i])];
                if (p < 0) p = lab[i];
                EXPECT_EQ(p, lab[i]);
            }
            EXPECT_LT(PartitionSet::cluster_count(lab), PartitionSet::cluster_count(prev));
        }
    }
}

TEST(Finch, PermutationEquivariant) {
    std::mt19937_64 gen(13);
    for (int t = 0; t < 20; ++t) {
        const Index n = 40;
        const RowMatrix x = test::random_rows(gen, n, 3);
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), gen);
        RowMatrix y(n, 3);
        for (Index i = 0; i < n; ++i) y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        const auto a = finch_partitions(x), b = finch_partitions(y);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t l = 0; l < a.size(); ++l) {
            // same co-membership after undoing the permutation
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < n; ++j) {
                    const auto pi = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
                    const auto pj = static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]);
                    ASSERT_EQ(b.levels[l][static_cast<std::size_t>(i)] == b.levels[l][static_cast<std::size_t>(j)],
                              a.levels[l][pi] == a.levels[l][pj]);
                }
        }
    }
}

TEST(Finch, CosineFirstPartitionIgnoresScale) {
    std::mt19937_64 gen(14);
    RowMatrix x = test::random_rows(gen, 30, 4);
    RowMatrix y = x;
    for (Index r = 0; r < y.rows(); ++r) y.row(r) *= std::uniform_real_distribution<double>(0.1, 10)(gen);
    EXPECT_EQ(finch_partitions(x, FinchMetric::cosine).levels.front(),
              finch_partitions(y, FinchMetric::cosine).levels.front());
}

TEST(SelectPartition, Modes) {
    PartitionSet one{{{0, 0}}};
    PartitionSet two{{{0, 1, 1}, {0, 0, 0}}};
    PartitionSet three{{{0, 1, 2, 2}, {0, 1, 1, 1}, {0, 0, 0, 0}}};
    EXPECT_EQ(&select_partition(one), &one.levels[0]);
    EXPECT_EQ(&select_partition(two), &two.levels[0]);
    EXPECT_EQ(&select_partition(three), &three.levels[1]);
    EXPECT_EQ(&select_partition(three, PartitionMode::fp), &three.levels[0]);
    EXPECT_EQ(&select_partition(two, PartitionMode::sp), &two.levels[1]);
    EXPECT_EQ(&select_partition(one, PartitionMode::sp), &one.levels[0]);
    EXPECT_THROW(select_partition(PartitionSet{}), InvalidArgument);
}

TEST(SelectPartition, Parsing) {
    EXPECT_EQ(parse_partition_mode("auto"), PartitionMode::automatic);
    EXPECT_EQ(parse_partition_mode("FP"), PartitionMode::fp);
    EXPECT_EQ(parse_partition_mode("sp"), PartitionMode::sp);
    EXPECT_THROW(parse_partition_mode("third"), InvalidArgument);
    EXPECT_EQ(nlohmann::json(PartitionMode::automatic), "auto");
    EXPECT_THROW(nlohmann::json("xx").get<PartitionMode>(), InvalidArgument);
}

}  // namespace
}  // namespace owl
