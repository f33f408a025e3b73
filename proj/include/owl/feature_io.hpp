#pragma once

// Feature files, fusion by concatenation, and synthetic labeled streams.
//
// Binary layout (little endian):
//   "OWLF" | u32 version | u32 dim | u64 count | count*dim float32, row major
// Sidecar "<path>.labels.tsv": header line, then "<source_id>\t<label>" per row.

#include "owl/json_enum.hpp"
#include "owl/rng.hpp"
#include "owl/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace owl {

struct FeatureSet {
    int dim = 0;
    RowMatrix vectors;  // count x dim
    std::vector<int> labels;
    std::vector<std::string> source_ids;

    FeatureSet() = default;
    explicit FeatureSet(int d) : dim(d), vectors(0, d) {}

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }

    Vector row(std::size_t i) const { return vectors.row(static_cast<Index>(i)).transpose(); }

    void validate() const {
        require(dim > 0, "FeatureSet: dim must be positive");
        require(vectors.cols() == dim, "FeatureSet: vector width differs from dim");
        require(static_cast<std::size_t>(vectors.rows()) == labels.size(),
                "FeatureSet: labels length differs from vector count");
        require(source_ids.size() == labels.size(), "FeatureSet: source_ids length differs from vector count");
        require(vectors.allFinite(), "FeatureSet: non-finite component");
    }

    // Appends one sample; the caller guarantees width == dim.
    void push_back(const Vector& v, int label, std::string id) {
        const Index n = vectors.rows();
        vectors.conservativeResize(n + 1, dim);
        vectors.row(n) = v.transpose();
        labels.push_back(label);
        source_ids.push_back(std::move(id));
    }

    friend bool operator==(const FeatureSet& a, const FeatureSet& b) {
        return a.dim == b.dim && a.labels == b.labels && a.source_ids == b.source_ids &&
               a.vectors.rows() == b.vectors.rows() && a.vectors == b.vectors;
    }
};

inline constexpr std::array<char, 4> kFeatureMagic{'O', 'W', 'L', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline std::filesystem::path label_sidecar_path(const std::filesystem::path& p) {
    return std::filesystem::path(p.string() + ".labels.tsv");
}

namespace detail {

template <class U>
void put_le(std::ostream& os, U value) {
    static_assert(std::is_unsigned_v<U>);
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    os.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& is) {
    static_assert(std::is_unsigned_v<U>);
    std::array<unsigned char, sizeof(U)> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) throw FormatError("feature file truncated");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

inline double to_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace detail

inline void write_features(const FeatureSet& set, const std::filesystem::path& destination) {
    set.validate();
    for (const auto& id : set.source_ids) {
        require(id.find_first_of("\t\n\r") == std::string::npos, "write_features: source id contains tab or newline");
    }
    std::ofstream os(destination, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("write_features: cannot open " + destination.string());
    os.write(kFeatureMagic.data(), kFeatureMagic.size());
    detail::put_le<std::uint32_t>(os, kFeatureVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.dim));
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(set.size()));
    for (Index r = 0; r < set.vectors.rows(); ++r) {
        for (Index c = 0; c < set.vectors.cols(); ++c) {
            detail::put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(set.vectors(r, c))));
        }
    }
    if (!os) throw Error("write_features: write failed for " + destination.string());

    std::ofstream ts(label_sidecar_path(destination), std::ios::trunc);
    if (!ts) throw Error("write_features: cannot open label sidecar for " + destination.string());
    ts << "source_id\tlabel\n";
    for (std::size_t i = 0; i < set.size(); ++i) ts << set.source_ids[i] << '\t' << set.labels[i] << '\n';
    if (!ts) throw Error("write_features: sidecar write failed");
}

namespace detail {

inline FeatureSet read_one(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("load_features: cannot open " + path.string());
    std::array<char, 4> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kFeatureMagic) throw FormatError("load_features: bad magic in " + path.string());
    const auto version = get_le<std::uint32_t>(is);
    if (version != kFeatureVersion) throw FormatError("load_features: unsupported version " + std::to_string(version));
    const auto dim = get_le<std::uint32_t>(is);
    const auto count = get_le<std::uint64_t>(is);
    if (dim == 0) throw FormatError("load_features: zero dim");

    FeatureSet set(static_cast<int>(dim));
    set.vectors.resize(static_cast<Index>(count), dim);
    for (std::uint64_t r = 0; r < count; ++r)
        for (std::uint32_t c = 0; c < dim; ++c)
            set.vectors(static_cast<Index>(r), c) = std::bit_cast<float>(get_le<std::uint32_t>(is));
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("load_features: trailing bytes in " + path.string());

    std::ifstream ts(label_sidecar_path(path));
    if (!ts) throw FormatError("load_features: missing label sidecar for " + path.string());
    std::string line;
    std::getline(ts, line);  // header
    while (std::getline(ts, line)) {
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw FormatError("load_features: malformed sidecar line: " + line);
        set.source_ids.push_back(line.substr(0, tab));
        try {
            set.labels.push_back(std::stoi(line.substr(tab + 1)));
        } catch (const std::exception&) {
            throw FormatError("load_features: bad label in sidecar line: " + line);
        }
    }
    if (set.labels.size() != count) throw FormatError("load_features: sidecar row count differs from payload");
    set.validate();
    return set;
}

}  // namespace detail

// One source decodes as-is; several are fused row-wise by concatenating
// features in file order.
inline FeatureSet load_features(const std::vector<std::filesystem::path>& sources) {
    require(!sources.empty(), "load_features: no sources");
    FeatureSet fused = detail::read_one(sources.front());
    for (std::size_t s = 1; s < sources.size(); ++s) {
        FeatureSet next = detail::read_one(sources[s]);
        if (next.size() != fused.size()) throw FormatError("load_features: count mismatch across sources");
        if (next.labels != fused.labels) throw FormatError("load_features: label disagreement across sources");
        RowMatrix joined(fused.vectors.rows(), fused.dim + next.dim);
        joined << fused.vectors, next.vectors;
        fused.vectors = std::move(joined);
        fused.dim += next.dim;
    }
    return fused;
}

inline FeatureSet load_features(const std::filesystem::path& source) {
    return load_features(std::vector<std::filesystem::path>{source});
}

// Stream composition for one experiment.
struct StreamConfig {
    int known_class_count = 10;
    int unknown_class_count = 5;
    int images_per_unknown_class = 100;
    int batch_size = 50;
    int batch_count = 20;
    int run_count = 5;
    std::uint64_t seed = 0;
    int pretrain_per_class = 100;
    int validation_per_class = 50;

    int stream_length() const { return batch_size * batch_count; }
    int unknown_total() const { return unknown_class_count * images_per_unknown_class; }
    int known_total() const { return stream_length() - unknown_total(); }

    void validate() const {
        require(known_class_count >= 2, "StreamConfig: need at least 2 known classes");
        require(unknown_class_count >= 0, "StreamConfig: negative unknown class count");
        require(images_per_unknown_class >= 0, "StreamConfig: negative images per unknown class");
        require(batch_size > 0 && batch_count > 0, "StreamConfig: batch size and count must be positive");
        require(run_count > 0, "StreamConfig: run_count must be positive");
        require(pretrain_per_class > 0 && validation_per_class > 0, "StreamConfig: per-class counts must be positive");
        require(known_total() >= 0, "StreamConfig: unknown pool exceeds stream length");
    }
};

enum class MeanScheme { hypersphere, axes };

// Class-mean placement and within-class spread for synthetic blobs.
struct BlobGeometry {
    MeanScheme scheme = MeanScheme::hypersphere;
    int dim = 32;
    double radius = 2.0;
    double spread = 0.1;
    // hypersphere only: minimum pairwise distance between means (0 = none)
    double min_separation = 0.0;

    int capacity() const { return scheme == MeanScheme::axes ? 2 * dim : std::numeric_limits<int>::max(); }
};

struct SyntheticData {
    FeatureSet pretrain;
    FeatureSet validation;
    std::vector<FeatureSet> batches;
    int known_class_count = 0;
    Matrix class_means;  // dim x classes
};

inline bool is_known_label(int label, int known_class_count) { return label >= 0 && label < known_class_count; }

namespace detail {

inline Matrix place_means(const BlobGeometry& g, int classes, Rng& rng) {
    if (classes > g.capacity())
        throw InvalidArgument("synthesize_stream: " + std::to_string(classes) + " classes exceed geometry capacity " +
                              std::to_string(g.capacity()));
    Matrix means = Matrix::Zero(g.dim, classes);
    if (g.scheme == MeanScheme::axes) {
        std::vector<int> slots(static_cast<std::size_t>(2 * g.dim));
        for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
        rng.shuffle(slots);
        for (int c = 0; c < classes; ++c) {
            const int s = slots[static_cast<std::size_t>(c)];
            means(s / 2, c) = (s % 2 == 0 ? 1.0 : -1.0) * g.radius;
        }
        return means;
    }
    constexpr int kAttempts = 1000;
    for (int c = 0; c < classes; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
            Vector v(g.dim);
            for (int d = 0; d < g.dim; ++d) v[d] = rng.normal();
            v *= g.radius / v.norm();
            placed = true;
            for (int o = 0; o < c && placed; ++o) placed = (means.col(o) - v).norm() >= g.min_separation;
            if (placed) means.col(c) = v;
        }
        if (!placed) throw InvalidArgument("synthesize_stream: cannot place class means with the requested separation");
    }
    return means;
}

inline Vector draw_sample(const Matrix& means, int cls, double spread, Rng& rng) {
    Vector v = means.col(cls);
    for (Index d = 0; d < v.size(); ++d) v[d] = to_float32(v[d] + spread * rng.normal());
    return v;
}

}  // namespace detail

// Known classes are labels [0, K); unknown classes are [K, K+U) and appear
// only in the stream. Samples are rounded to float32 so the in-memory data
// equals what a feature file round-trip yields.
inline SyntheticData synthesize_stream(const StreamConfig& config, const BlobGeometry& geometry) {
    config.validate();
    require(geometry.dim > 0 && geometry.radius > 0.0 && geometry.spread >= 0.0, "synthesize_stream: bad geometry");
    Rng rng(config.seed);
    const int known = config.known_class_count;
    const int total_classes = known + config.unknown_class_count;

    SyntheticData out;
    out.known_class_count = known;
    out.class_means = detail::place_means(geometry, total_classes, rng);
    out.pretrain = FeatureSet(geometry.dim);
    out.validation = FeatureSet(geometry.dim);

    for (int c = 0; c < known; ++c)
        for (int i = 0; i < config.pretrain_per_class; ++i)
            out.pretrain.push_back(detail::draw_sample(out.class_means, c, geometry.spread, rng), c,
                                   "pretrain/" + std::to_string(c) + "/" + std::to_string(i));
    for (int c = 0; c < known; ++c)
        for (int i = 0; i < config.validation_per_class; ++i)
            out.validation.push_back(detail::draw_sample(out.class_means, c, geometry.spread, rng), c,
                                     "validation/" + std::to_string(c) + "/" + std::to_string(i));

    // Stream pool: known items spread as evenly as possible over a random
    // class order, unknown items exactly images_per_unknown_class each.
    std::vector<int> pool;
    pool.reserve(static_cast<std::size_t>(config.stream_length()));
    std::vector<int> known_order(static_cast<std::size_t>(known));
    for (int c = 0; c < known; ++c) known_order[static_cast<std::size_t>(c)] = c;
    rng.shuffle(known_order);
    for (int i = 0; i < config.known_total(); ++i) pool.push_back(known_order[static_cast<std::size_t>(i % known)]);
    for (int u = 0; u < config.unknown_class_count; ++u)
        for (int i = 0; i < config.images_per_unknown_class; ++i) pool.push_back(known + u);
    rng.shuffle(pool);

    std::size_t next = 0;
    for (int b = 0; b < config.batch_count; ++b) {
        FeatureSet batch(geometry.dim);
        for (int i = 0; i < config.batch_size; ++i, ++next) {
            const int cls = pool[next];
            batch.push_back(detail::draw_sample(out.class_means, cls, geometry.spread, rng), cls,
                            "stream/" + std::to_string(next));
        }
        out.batches.push_back(std::move(batch));
    }
    return out;
}

// Concatenates sets of equal dim row-wise (used to flatten stream batches).
inline FeatureSet concat_rows(const std::vector<FeatureSet>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    FeatureSet out(parts.front().dim);
    Index rows = 0;
    for (const auto& p : parts) {
        require(p.dim == out.dim, "concat_rows: dim mismatch");
        rows += p.vectors.rows();
    }
    out.vectors.resize(rows, out.dim);
    Index at = 0;
    for (const auto& p : parts) {
        out.vectors.middleRows(at, p.vectors.rows()) = p.vectors;
        at += p.vectors.rows();
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        out.source_ids.insert(out.source_ids.end(), p.source_ids.begin(), p.source_ids.end());
    }
    return out;
}

inline std::vector<FeatureSet> split_batches(const FeatureSet& stream, int batch_size) {
    require(batch_size > 0, "split_batches: batch size must be positive");
    std::vector<FeatureSet> out;
    for (std::size_t start = 0; start < stream.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), stream.size() - start);
        FeatureSet b(stream.dim);
        b.vectors = stream.vectors.middleRows(static_cast<Index>(start), static_cast<Index>(n));
        b.labels.assign(stream.labels.begin() + static_cast<std::ptrdiff_t>(start),
                        stream.labels.begin() + static_cast<std::ptrdiff_t>(start + n));
        b.source_ids.assign(stream.source_ids.begin() + static_cast<std::ptrdiff_t>(start),
                            stream.source_ids.begin() + static_cast<std::ptrdiff_t>(start + n));
        out.push_back(std::move(b));
    }
    return out;
}

inline void to_json(nlohmann::json& j, const StreamConfig& c) {
    j = nlohmann::json{{"known_class_count", c.known_class_count},
                       {"unknown_class_count", c.unknown_class_count},
                       {"images_per_unknown_class", c.images_per_unknown_class},
                       {"batch_size", c.batch_size},
                       {"batch_count", c.batch_count},
                       {"run_count", c.run_count},
                       {"seed", c.seed},
                       {"pretrain_per_class", c.pretrain_per_class},
                       {"validation_per_class", c.validation_per_class}};
}

inline void from_json(const nlohmann::json& j, StreamConfig& c) {
    const StreamConfig d;
    c.known_class_count = j.value("known_class_count", d.known_class_count);
    c.unknown_class_count = j.value("unknown_class_count", d.unknown_class_count);
    c.images_per_unknown_class = j.value("images_per_unknown_class", d.images_per_unknown_class);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.batch_count = j.value("batch_count", d.batch_count);
    c.run_count = j.value("run_count", d.run_count);
    c.seed = j.value("seed", d.seed);
    c.pretrain_per_class = j.value("pretrain_per_class", d.pretrain_per_class);
    c.validation_per_class = j.value("validation_per_class", d.validation_per_class);
}

OWL_JSON_ENUM(MeanScheme, {{MeanScheme::hypersphere, "hypersphere"}, {MeanScheme::axes, "axes"}})

inline void to_json(nlohmann::json& j, const BlobGeometry& g) {
    j = nlohmann::json{{"scheme", g.scheme},
                       {"dim", g.dim},
                       {"radius", g.radius},
                       {"spread", g.spread},
                       {"min_separation", g.min_separation}};
}

inline void from_json(const nlohmann::json& j, BlobGeometry& g) {
    const BlobGeometry d;
    g.scheme = j.value("scheme", d.scheme);
    g.dim = j.value("dim", d.dim);
    g.radius = j.value("radius", d.radius);
    g.spread = j.value("spread", d.spread);
    g.min_separation = j.value("min_separation", d.min_separation);
}

}  // namespace owl
