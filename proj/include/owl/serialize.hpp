#pragma once

// Versioned binary checkpoints. Every model blob is
//   tag (u32 length + bytes), u32 blob version, u32 dim, payload
// and numbers are little-endian; doubles are stored as IEEE-754 binary64.

#include "owl/pipeline.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace owl {

inline constexpr std::array<char, 4> kCheckpointMagic{'O', 'W', 'L', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kBlobVersion = 1;

class BlobWriter {
public:
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v)); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    void vec(const Vector& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Index i = 0; i < v.size(); ++i) f64(v[i]);
    }

    template <class M>
    void mat(const M& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }

    void ints(const std::vector<int>& v) {
        u64(v.size());
        for (int x : v) i64(x);
    }

    void begin(const std::string& tag, int dim) {
        str(tag);
        u32(kBlobVersion);
        u32(static_cast<std::uint32_t>(dim));
    }

    const std::vector<char>& bytes() const { return bytes_; }

private:
    void put(std::uint64_t v, int n = 8) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void put(std::uint32_t v) { put(static_cast<std::uint64_t>(v), 4); }

    std::vector<char> bytes_;
};

class BlobReader {
public:
    explicit BlobReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
    double f64() { return std::bit_cast<double>(get(8)); }

    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

    Vector vec() {
        const auto n = count(8);
        Vector v(static_cast<Index>(n));
        for (Index i = 0; i < v.size(); ++i) v[i] = f64();
        return v;
    }

    template <class M>
    M mat() {
        const auto rows = u64();
        const auto cols = u64();
        if (cols != 0 && rows > (bytes_.size() - pos_) / 8 / cols) throw FormatError("checkpoint: truncated matrix");
        M m(static_cast<Index>(rows), static_cast<Index>(cols));
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
        return m;
    }

    std::vector<int> ints() {
        const auto n = count(8);
        std::vector<int> v(n);
        for (auto& x : v) x = static_cast<int>(i64());
        return v;
    }

    // Reads a blob header and returns its dim.
    int begin(const std::string& tag) {
        const std::string got = str();
        if (got != tag) throw FormatError("checkpoint: expected blob '" + tag + "', found '" + got + "'");
        if (u32() != kBlobVersion) throw FormatError("checkpoint: unsupported blob version for " + tag);
        return static_cast<int>(u32());
    }

    std::string peek_tag() {
        const std::size_t at = pos_;
        std::string t = str();
        pos_ = at;
        return t;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated data");
    }

    std::size_t count(std::size_t elem) {
        const auto n = u64();
        if (n > (bytes_.size() - pos_) / elem) throw FormatError("checkpoint: truncated sequence");
        return static_cast<std::size_t>(n);
    }

    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

// --- per-model blobs --------------------------------------------------------

inline void write_blob(BlobWriter& w, const LinearHead& h) {
    w.begin("linear_head", static_cast<int>(h.dim()));
    w.mat(h.weights);
    w.vec(h.bias);
}

inline void read_blob(BlobReader& r, LinearHead& h) {
    r.begin("linear_head");
    h.weights = r.mat<Matrix>();
    h.bias = r.vec();
}

inline void write_blob(BlobWriter& w, const NcmState& s) {
    w.begin("oncm", s.dim);
    w.ints(s.class_ids);
    w.ints(s.counts);
    w.u64(s.means.size());
    for (const auto& m : s.means) w.vec(m);
}

inline void read_blob(BlobReader& r, NcmState& s) {
    s.dim = r.begin("oncm");
    s.class_ids = r.ints();
    s.counts = r.ints();
    s.means.resize(r.u64());
    for (auto& m : s.means) m = r.vec();
}

inline void write_blob(BlobWriter& w, const NnoState& s) {
    w.begin("onno", s.dim);
    w.u32(static_cast<std::uint32_t>(s.rank));
    w.f64(s.tau);
    w.u64(s.seed);
    w.u32(static_cast<std::uint32_t>(s.options.epochs));
    w.f64(s.options.step);
    w.mat(s.metric);
    w.ints(s.class_ids);
    w.u64(s.means.size());
    for (std::size_t i = 0; i < s.means.size(); ++i) {
        w.vec(s.means[i]);
        w.mat(s.samples[i]);
    }
}

inline void read_blob(BlobReader& r, NnoState& s) {
    s.dim = r.begin("onno");
    s.rank = static_cast<int>(r.u32());
    s.tau = r.f64();
    s.seed = r.u64();
    s.options.epochs = static_cast<int>(r.u32());
    s.options.step = r.f64();
    s.metric = r.mat<Matrix>();
    s.class_ids = r.ints();
    const auto n = r.u64();
    s.means.clear();
    s.samples.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        s.means.push_back(r.vec());
        s.samples.push_back(r.mat<RowMatrix>());
    }
}

inline void write_blob(BlobWriter& w, const GmmState& s) {
    w.begin("ogmm", s.dim);
    w.f64(s.scale);
    w.f64(s.eps);
    w.ints(s.class_ids);
    w.ints(s.counts);
    w.u64(s.means.size());
    for (std::size_t i = 0; i < s.means.size(); ++i) {
        w.vec(s.means[i]);
        w.mat(s.covariances[i]);
        w.mat(s.inverses[i]);
    }
}

inline void read_blob(BlobReader& r, GmmState& s) {
    s.dim = r.begin("ogmm");
    s.scale = r.f64();
    s.eps = r.f64();
    s.class_ids = r.ints();
    s.counts = r.ints();
    const auto n = r.u64();
    s.means.clear();
    s.covariances.clear();
    s.inverses.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        s.means.push_back(r.vec());
        s.covariances.push_back(r.mat<Matrix>());
        s.inverses.push_back(r.mat<Matrix>());
    }
}

inline void write_blob(BlobWriter& w, const CbclState& s) {
    w.begin("ocbcl", s.dim);
    w.f64(s.distance_threshold);
    w.u32(static_cast<std::uint32_t>(s.neighbors));
    w.ints(s.class_ids);
    w.u64(s.centroids.size());
    for (const auto& cls : s.centroids) {
        w.u64(cls.size());
        for (const auto& c : cls) {
            w.vec(c.mean);
            w.i64(c.count);
        }
    }
}

inline void read_blob(BlobReader& r, CbclState& s) {
    s.dim = r.begin("ocbcl");
    s.distance_threshold = r.f64();
    s.neighbors = static_cast<int>(r.u32());
    s.class_ids = r.ints();
    s.centroids.resize(r.u64());
    for (auto& cls : s.centroids) {
        cls.resize(r.u64());
        for (auto& c : cls) {
            c.mean = r.vec();
            c.count = static_cast<int>(r.i64());
        }
    }
}

inline void write_blob(BlobWriter& w, const ScailState& s) {
    w.begin("oscail", s.dim);
    w.u32(static_cast<std::uint32_t>(s.buffer_cap));
    w.u32(static_cast<std::uint32_t>(s.training.epochs));
    w.f64(s.training.step);
    w.f64(s.training.l2);
    w.mat(s.head.weights);
    w.vec(s.head.bias);
    w.ints(s.class_ids);
    w.u64(s.class_ids.size());
    for (std::size_t i = 0; i < s.class_ids.size(); ++i) {
        w.vec(s.weight_stats[i]);
        w.f64(s.bias_stats[i]);
        w.mat(s.buffer[i]);
    }
    w.vec(s.current_weight_stats);
    w.f64(s.current_bias_stat);
    w.i64(s.old_class_count);
}

inline void read_blob(BlobReader& r, ScailState& s) {
    s.dim = r.begin("oscail");
    s.buffer_cap = static_cast<int>(r.u32());
    s.training.epochs = static_cast<int>(r.u32());
    s.training.step = r.f64();
    s.training.l2 = r.f64();
    s.head.weights = r.mat<Matrix>();
    s.head.bias = r.vec();
    s.class_ids = r.ints();
    const auto n = r.u64();
    s.weight_stats.clear();
    s.bias_stats.clear();
    s.buffer.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        s.weight_stats.push_back(r.vec());
        s.bias_stats.push_back(r.f64());
        s.buffer.push_back(r.mat<RowMatrix>());
    }
    s.current_weight_stats = r.vec();
    s.current_bias_stat = r.f64();
    s.old_class_count = r.i64();
}

inline void write_blob(BlobWriter& w, const EvmModel& m) {
    w.begin("evm", m.dim);
    w.str(nlohmann::json(m.config).dump());
    w.u64(m.classes.size());
    for (const auto& cls : m.classes) {
        // anchors as a matrix, then (shape, scale) pairs
        RowMatrix anchors(static_cast<Index>(cls.size()), m.dim);
        for (std::size_t i = 0; i < cls.size(); ++i) anchors.row(static_cast<Index>(i)) = cls[i].anchor.transpose();
        w.mat(anchors);
        for (const auto& ev : cls) {
            w.f64(ev.weibull.shape);
            w.f64(ev.weibull.scale);
        }
    }
}

inline void read_blob(BlobReader& r, EvmModel& m) {
    m.dim = r.begin("evm");
    m.config = nlohmann::json::parse(r.str()).get<EvmConfig>();
    m.classes.resize(r.u64());
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
        const auto anchors = r.mat<RowMatrix>();
        auto& cls = m.classes[c];
        cls.resize(static_cast<std::size_t>(anchors.rows()));
        for (std::size_t i = 0; i < cls.size(); ++i) {
            cls[i].anchor = anchors.row(static_cast<Index>(i)).transpose();
            cls[i].weibull.shape = r.f64();
            cls[i].weibull.scale = r.f64();
            cls[i].class_index = static_cast<int>(c);
        }
    }
}

inline void write_blob(BlobWriter& w, const FeatureBank& b) {
    w.begin("feature_bank", b.dim);
    w.u32(static_cast<std::uint32_t>(b.cap_per_class));
    w.u32(b.full ? 1u : 0u);
    w.u64(b.classes.size());
    for (const auto& c : b.classes) w.mat(c);
}

inline void read_blob(BlobReader& r, FeatureBank& b) {
    b.dim = r.begin("feature_bank");
    b.cap_per_class = static_cast<int>(r.u32());
    b.full = r.u32() != 0;
    b.classes.resize(r.u64());
    for (auto& c : b.classes) c = r.mat<RowMatrix>();
}

inline void write_blob(BlobWriter& w, const MevmState& s) {
    w.begin("mevm", s.model.dim);
    write_blob(w, s.model);
    write_blob(w, s.bank);
    w.u64(s.pending.size());
    for (const auto& p : s.pending) w.mat(p);
}

inline void read_blob(BlobReader& r, MevmState& s) {
    r.begin("mevm");
    read_blob(r, s.model);
    read_blob(r, s.bank);
    s.pending.resize(r.u64());
    for (auto& p : s.pending) p = r.mat<RowMatrix>();
}

inline void write_blob(BlobWriter& w, const LearnerState& s) {
    std::visit([&w](const auto& x) { write_blob(w, x); }, s);
}

inline void read_blob(BlobReader& r, LearnerState& s) {
    const std::string tag = r.peek_tag();
    auto load = [&r, &s](auto blank) {
        read_blob(r, blank);
        s = std::move(blank);
    };
    if (tag == "oncm") return load(NcmState{});
    if (tag == "onno") return load(NnoState{});
    if (tag == "ogmm") return load(GmmState{});
    if (tag == "ocbcl") return load(CbclState{});
    if (tag == "oscail") return load(ScailState{});
    if (tag == "mevm") return load(MevmState{});
    throw FormatError("checkpoint: unknown learner blob '" + tag + "'");
}

// --- agent checkpoint -------------------------------------------------------

inline std::vector<char> serialize_agent(const Agent& a) {
    BlobWriter w;
    w.begin("agent", a.dim);
    nlohmann::json meta{{"config", a.config},
                        {"known_classes", a.known_classes},
                        {"detector", a.detector},
                        {"gate", a.gate},
                        {"buffer_dirty", a.buffer_dirty}};
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& [label, cls] : a.label_class) labels.push_back({label, cls});
    meta["label_class"] = labels;
    w.str(meta.dump());
    write_blob(w, a.head);
    write_blob(w, a.known_evm);
    write_blob(w, a.learner);
    write_blob(w, a.evm);
    write_blob(w, a.bank);
    w.u32(a.bounds ? 1u : 0u);
    if (a.bounds) {
        w.vec(a.bounds->lower);
        w.vec(a.bounds->upper);
    }
    w.u64(a.buffer.entries.size());
    for (const auto& e : a.buffer.entries) {
        w.vec(e.feature);
        w.i64(e.item);
        w.i64(e.truth);
    }
    return w.bytes();
}

inline Agent deserialize_agent(std::vector<char> bytes) {
    BlobReader r(std::move(bytes));
    Agent a;
    a.dim = r.begin("agent");
    const auto meta = nlohmann::json::parse(r.str());
    a.config = meta.at("config").get<AgentConfig>();
    a.known_classes = meta.at("known_classes").get<int>();
    a.detector = meta.at("detector").get<DetectorConfig>();
    a.gate = meta.at("gate").get<QualityGate>();
    a.buffer_dirty = meta.at("buffer_dirty").get<bool>();
    for (const auto& p : meta.at("label_class")) a.label_class[p.at(0).get<int>()] = p.at(1).get<Index>();
    read_blob(r, a.head);
    read_blob(r, a.known_evm);
    read_blob(r, a.learner);
    read_blob(r, a.evm);
    read_blob(r, a.bank);
    if (r.u32() != 0) {
        FeatureBounds b;
        b.lower = r.vec();
        b.upper = r.vec();
        a.bounds = b;
    }
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        BufferEntry e;
        e.feature = r.vec();
        e.item = static_cast<long>(r.i64());
        e.truth = static_cast<int>(r.i64());
        a.buffer.entries.push_back(std::move(e));
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes");
    return a;
}

inline void save_checkpoint(const Agent& a, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    BlobWriter header;
    header.u32(kCheckpointVersion);
    out.write(header.bytes().data(), static_cast<std::streamsize>(header.bytes().size()));
    const auto body = serialize_agent(a);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw Error("failed writing checkpoint: " + path.string());
}

inline Agent load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
        throw FormatError("checkpoint: bad magic in " + path.string());
    BlobReader header(std::vector<char>(bytes.begin() + 4, bytes.begin() + 8));
    if (header.u32() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    return deserialize_agent(std::vector<char>(bytes.begin() + 8, bytes.end()));
}

}  // namespace owl
