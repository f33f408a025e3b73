#include "owl/feature_io.hpp"

#include "test_support.hpp"

#include <fstream>
#include <limits>
#include <map>

namespace owl {
namespace {

FeatureSet small_set(int rows, int dim, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    FeatureSet s(dim);
    const RowMatrix m = test::random_rows(gen, rows, dim);
    for (int i = 0; i < rows; ++i)
        s.push_back(m.row(i).transpose().unaryExpr([](double v) { return detail::to_float32(v); }), i % 3 - 1,
                    "item_" + std::to_string(i));
    return s;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(FeatureIo, RoundTripSmallSet) {
    test::ScratchDir dir;
    const FeatureSet s = small_set(3, 4, 1);
    write_features(s, dir / "a.owlf");
    EXPECT_EQ(load_features(dir / "a.owlf"), s);
}

TEST(FeatureIo, HeaderLayout) {
    test::ScratchDir dir;
    write_features(small_set(3, 4, 2), dir / "a.owlf");
    const auto bytes = file_bytes(dir / "a.owlf");
    ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 8u + 3u * 4u * 4u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "OWLF");
    EXPECT_EQ(bytes[4], 1);  // version, little-endian
    EXPECT_EQ(bytes[8], 4);  // dim
    EXPECT_EQ(bytes[12], 3);  // count
    EXPECT_TRUE(std::filesystem::exists(label_sidecar_path(dir / "a.owlf")));
}

TEST(FeatureIo, RejectsNonFinite) {
    test::ScratchDir dir;
    FeatureSet s = small_set(3, 4, 3);
    s.vectors(1, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(write_features(s, dir / "bad.owlf"), InvalidArgument);
}

TEST(FeatureIo, EmptySetRoundTrips) {
    test::ScratchDir dir;
    const FeatureSet s(8);
    write_features(s, dir / "empty.owlf");
    const FeatureSet back = load_features(dir / "empty.owlf");
    EXPECT_EQ(back.dim, 8);
    EXPECT_TRUE(back.empty());
}

TEST(FeatureIo, FusionConcatenatesColumns) {
    test::ScratchDir dir;
    FeatureSet a = small_set(5, 8, 4);
    FeatureSet b = small_set(5, 16, 5);
    b.labels = a.labels;
    write_features(a, dir / "a.owlf");
    write_features(b, dir / "b.owlf");
    const FeatureSet fused = load_features({dir / "a.owlf", dir / "b.owlf"});
    EXPECT_EQ(fused.dim, 24);
    ASSERT_EQ(fused.size(), 5u);
    for (Index r = 0; r < 5; ++r) {
        EXPECT_EQ(fused.vectors.row(r).head(8), a.vectors.row(r));
        EXPECT_EQ(fused.vectors.row(r).tail(16), b.vectors.row(r));
    }
    EXPECT_EQ(fused.labels, a.labels);
}

TEST(FeatureIo, FusionIsAssociative) {
    test::ScratchDir dir;
    FeatureSet a = small_set(4, 2, 6), b = small_set(4, 3, 7), c = small_set(4, 5, 8);
    b.labels = a.labels;
    c.labels = a.labels;
    write_features(a, dir / "a.owlf");
    write_features(b, dir / "b.owlf");
    write_features(c, dir / "c.owlf");
    write_features(load_features({dir / "a.owlf", dir / "b.owlf"}), dir / "ab.owlf");
    write_features(load_features({dir / "b.owlf", dir / "c.owlf"}), dir / "bc.owlf");
    const auto left = load_features({dir / "ab.owlf", dir / "c.owlf"});
    const auto right = load_features({dir / "a.owlf", dir / "bc.owlf"});
    EXPECT_EQ(left.vectors, right.vectors);
    EXPECT_EQ(left.dim, 10);
}

TEST(FeatureIo, FusionRejectsCountMismatch) {
    test::ScratchDir dir;
    write_features(small_set(5, 8, 9), dir / "a.owlf");
    write_features(small_set(6, 8, 10), dir / "b.owlf");
    EXPECT_THROW(load_features({dir / "a.owlf", dir / "b.owlf"}), Error);
}

TEST(FeatureIo, FusionRejectsLabelDisagreement) {
    test::ScratchDir dir;
    FeatureSet a = small_set(5, 8, 11), b = small_set(5, 8, 12);
    b.labels = a.labels;
    b.labels[2] += 1;
    write_features(a, dir / "a.owlf");
    write_features(b, dir / "b.owlf");
    EXPECT_THROW(load_features({dir / "a.owlf", dir / "b.owlf"}), Error);
}

TEST(FeatureIo, RejectsBadMagic) {
    test::ScratchDir dir;
    write_features(small_set(2, 2, 13), dir / "a.owlf");
    auto bytes = file_bytes(dir / "a.owlf");
    bytes[0] = 'X';
    std::ofstream(dir / "a.owlf", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    EXPECT_THROW(load_features(dir / "a.owlf"), FormatError);
}

TEST(FeatureIo, RandomRoundTripProperty) {
    test::ScratchDir dir;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const FeatureSet s = small_set(static_cast<int>(seed % 7), 1 + static_cast<int>(seed % 5), 100 + seed);
        write_features(s, dir / "r.owlf");
        EXPECT_EQ(load_features(dir / "r.owlf"), s) << "seed " << seed;
    }
}

TEST(Synthesis, U5PoolComposition) {
    StreamConfig c;
    c.unknown_class_count = 5;
    c.images_per_unknown_class = 500;
    c.batch_size = 100;
    c.batch_count = 50;
    c.pretrain_per_class = 5;
    c.validation_per_class = 5;
    const auto data = synthesize_stream(c, BlobGeometry{});
    std::map<int, int> counts;
    for (const auto& b : data.batches)
        for (int l : b.labels) ++counts[l];
    int unknown = 0;
    for (int u = 10; u < 15; ++u) {
        EXPECT_EQ(counts[u], 500);
        unknown += counts[u];
    }
    EXPECT_EQ(unknown, 2500);
    EXPECT_EQ(data.batches.size(), 50u);
    for (int l : data.pretrain.labels) EXPECT_LT(l, 10);
    for (int l : data.validation.labels) EXPECT_LT(l, 10);
}

TEST(Synthesis, DeterministicPerSeed) {
    StreamConfig c;
    c.seed = 42;
    const auto a = synthesize_stream(c, BlobGeometry{});
    const auto b = synthesize_stream(c, BlobGeometry{});
    EXPECT_EQ(a.pretrain, b.pretrain);
    EXPECT_EQ(a.validation, b.validation);
    ASSERT_EQ(a.batches.size(), b.batches.size());
    for (std::size_t i = 0; i < a.batches.size(); ++i) EXPECT_EQ(a.batches[i], b.batches[i]);
    c.seed = 43;
    EXPECT_FALSE(synthesize_stream(c, BlobGeometry{}).pretrain == a.pretrain);
}

TEST(Synthesis, EmpiricalMeansMatchGenerator) {
    StreamConfig c;
    c.known_class_count = 4;
    c.unknown_class_count = 0;
    c.images_per_unknown_class = 0;
    c.pretrain_per_class = 500;
    c.validation_per_class = 1;
    const BlobGeometry g;  // radius 2, spread 0.1
    const auto data = synthesize_stream(c, g);
    for (int cls = 0; cls < 4; ++cls) {
        EXPECT_NEAR(data.class_means.col(cls).norm(), 2.0, 1e-12);
        Vector sum = Vector::Zero(g.dim);
        int n = 0;
        for (std::size_t i = 0; i < data.pretrain.size(); ++i)
            if (data.pretrain.labels[i] == cls) {
                sum += data.pretrain.row(i);
                ++n;
            }
        EXPECT_EQ(n, 500);
        EXPECT_LT((sum / n - data.class_means.col(cls)).norm(), 0.05);
    }
}

TEST(Synthesis, RejectsInfeasibleCapacity) {
    StreamConfig c;
    c.known_class_count = 10;
    c.unknown_class_count = 5;
    BlobGeometry g;
    g.scheme = MeanScheme::axes;
    g.dim = 4;  // capacity 8 classes
    EXPECT_THROW(synthesize_stream(c, g), InvalidArgument);
}

TEST(Synthesis, RejectsUnknownPoolLargerThanStream) {
    StreamConfig c;
    c.images_per_unknown_class = 1000;
    EXPECT_THROW(synthesize_stream(c, BlobGeometry{}), InvalidArgument);
}

}  // namespace
}  // namespace owl
