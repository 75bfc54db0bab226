#pragma once

// Model checkpoints (see docs/checkpoint_format.md) and plain-text weight
// lists.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lcq/error.hpp"
#include "lcq/lc.hpp"
#include "lcq/models.hpp"
#include "lcq/quantizers.hpp"

namespace lcq {

inline constexpr char checkpoint_magic[4] = {'L', 'C', 'Q', 'M'};
inline constexpr std::uint32_t checkpoint_version = 1;

/// Layout, full parameter vector and, for quantized layers, the codebook
/// and assignments the weights were decompressed from.
struct Checkpoint {
    ParamLayout layout;
    Vector params;
    std::vector<std::optional<QuantParams>> quant;  // one slot per layer
    nlohmann::json meta = nlohmann::json::object();
};

/// Splits per-unit results into per-layer codebook/assignment pairs.
inline std::vector<std::optional<QuantParams>> per_layer_params(const ParamLayout& layout, const Compressor& comp,
                                                                const std::vector<QuantParams>& params) {
    std::vector<std::optional<QuantParams>> out(layout.num_layers());
    for (std::size_t u = 0; u < comp.num_units(); ++u) {
        std::size_t pos = 0;
        for (auto l : comp.unit_layers(u)) {
            const auto n = static_cast<std::size_t>(layout.weight_count(l));
            const auto& a = params.at(u).assignments;
            out[l] = QuantParams{params[u].codebook,
                                 Assignments(a.begin() + static_cast<std::ptrdiff_t>(pos),
                                             a.begin() + static_cast<std::ptrdiff_t>(pos + n))};
            pos += n;
        }
    }
    return out;
}

namespace detail {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > b_.size())
            throw ParseError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                             std::to_string(pos_));
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return b_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    const std::uint8_t* take(std::size_t n, const char* what) {
        need(n, what);
        const auto* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == b_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Packs indices of `bits` bits each, least significant bit first.
inline std::vector<std::uint8_t> pack_indices(const Assignments& a, int bits) {
    std::vector<std::uint8_t> out((a.size() * static_cast<std::size_t>(bits) + 7) / 8, 0);
    std::size_t bit = 0;
    for (auto v : a) {
        for (int i = 0; i < bits; ++i, ++bit)
            if ((v >> i) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
    return out;
}

inline Assignments unpack_indices(const std::uint8_t* p, std::size_t count, int bits) {
    Assignments out(count, 0);
    std::size_t bit = 0;
    for (auto& v : out) {
        for (int i = 0; i < bits; ++i, ++bit)
            if ((p[bit / 8] >> (bit % 8)) & 1u) v |= 1u << i;
    }
    return out;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    c.layout.check(c.params, "checkpoint parameters");
    if (c.quant.size() != c.layout.num_layers()) throw ConfigError("checkpoint: one quantization slot per layer required");
    detail::Writer w;
    w.bytes(checkpoint_magic, 4);
    w.u32(checkpoint_version);
    const std::string meta = c.meta.dump();
    w.u32(static_cast<std::uint32_t>(meta.size()));
    w.bytes(meta.data(), meta.size());
    w.u32(static_cast<std::uint32_t>(c.layout.num_layers()));
    for (std::size_t l = 0; l < c.layout.num_layers(); ++l) {
        const auto& s = c.layout.layer(l);
        w.u32(static_cast<std::uint32_t>(s.rows));
        w.u32(static_cast<std::uint32_t>(s.cols));
        w.u8(s.quantizable ? 1 : 0);
        const auto& q = c.quant[l];
        w.u8(q ? 1 : 0);
        if (q) {
            if (q->assignments.size() != static_cast<std::size_t>(c.layout.weight_count(l)))
                throw ConfigError("checkpoint: assignment count mismatch in layer " + std::to_string(l));
            w.u8(static_cast<std::uint8_t>(q->codebook.kind()));
            const auto K = static_cast<std::uint32_t>(q->codebook.size());
            w.u32(K);
            w.f64(q->codebook.scale());
            for (double e : q->codebook.entries()) w.f64(e);
            const int bits = ceil_log2(K);
            w.u8(static_cast<std::uint8_t>(bits));
            const auto packed = pack_indices(q->assignments, bits);
            w.bytes(packed.data(), packed.size());
        } else {
            for (double x : c.layout.weights(c.params, l)) w.f64(x);
        }
        for (double x : c.layout.bias(c.params, l)) w.f64(x);
    }
    return std::move(w.buffer());
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::Reader r(bytes);
    const auto* magic = r.take(4, "magic");
    if (std::memcmp(magic, checkpoint_magic, 4) != 0) throw ParseError("not a checkpoint file (bad magic)");
    const auto version = r.u32("version");
    if (version != checkpoint_version)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    const auto meta_len = r.u32("metadata length");
    const auto* meta = r.take(meta_len, "metadata");
    try {
        c.meta = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(meta), meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint metadata: ") + e.what());
    }
    const auto n_layers = r.u32("layer count");
    if (n_layers == 0 || n_layers > 1024) throw ParseError("checkpoint: implausible layer count");
    struct Pending {
        std::vector<double> w, b;
        std::optional<QuantParams> q;
    };
    std::vector<LayerShape> shapes;
    std::vector<Pending> layers;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        LayerShape s;
        s.rows = r.u32("rows");
        s.cols = r.u32("cols");
        if (s.rows < 1 || s.cols < 1) throw ParseError("checkpoint: empty layer " + std::to_string(l));
        s.quantizable = r.u8("quantizable flag") != 0;
        const bool quantized = r.u8("quantized flag") != 0;
        const auto n = static_cast<std::size_t>(s.rows * s.cols);
        Pending p;
        if (quantized) {
            const auto kind = r.u8("codebook kind");
            if (kind > 2) throw ParseError("checkpoint: unknown codebook kind " + std::to_string(kind));
            const auto K = r.u32("codebook size");
            if (K == 0 || K > (1u << 24)) throw ParseError("checkpoint: bad codebook size");
            const double scale = r.f64("scale");
            std::vector<double> entries(K);
            for (auto& e : entries) e = r.f64("codebook");
            const int bits = r.u8("index width");
            if (bits != ceil_log2(K)) throw ParseError("checkpoint: index width does not match codebook size");
            const auto* packed = r.take((n * static_cast<std::size_t>(bits) + 7) / 8, "indices");
            Assignments a = unpack_indices(packed, n, bits);
            for (auto v : a)
                if (v >= K) throw ParseError("checkpoint: index out of range in layer " + std::to_string(l));
            try {
                const auto k = static_cast<CodebookKind>(kind);
                Codebook cb = k == CodebookKind::adaptive ? Codebook::adaptive(entries)
                              : k == CodebookKind::fixed  ? Codebook::fixed(entries)
                              : scale == 0.0              ? Codebook::degenerate_scale(entries)
                                                          : Codebook::with_scale(entries, scale);
                p.q = QuantParams{std::move(cb), std::move(a)};
            } catch (const Error& e) {
                throw ParseError(std::string("checkpoint: invalid codebook: ") + e.what());
            }
            p.w = decompress(*p.q);
        } else {
            p.w.resize(n);
            for (auto& x : p.w) x = r.f64("weights");
        }
        p.b.resize(static_cast<std::size_t>(s.rows));
        for (auto& x : p.b) x = r.f64("biases");
        shapes.push_back(s);
        layers.push_back(std::move(p));
    }
    if (!r.done()) throw ParseError("checkpoint: trailing bytes after byte " + std::to_string(r.pos()));
    c.layout = ParamLayout(shapes);
    c.params.resize(c.layout.total());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto w = c.layout.weights(c.params, l);
        std::copy(layers[l].w.begin(), layers[l].w.end(), w.begin());
        c.layout.bias(c.params, l) = Eigen::Map<const Vector>(layers[l].b.data(), static_cast<Eigen::Index>(layers[l].b.size()));
        c.quant.push_back(std::move(layers[l].q));
    }
    return c;
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_text(const std::string& path, const std::string& s) { write_bytes(path, s.data(), s.size()); }

inline std::string read_text(const std::string& path) {
    const auto b = read_bytes(path);
    return {b.begin(), b.end()};
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    const auto b = encode_checkpoint(c);
    write_bytes(path, b.data(), b.size());
}

inline Checkpoint load_checkpoint(const std::string& path) {
    try {
        return decode_checkpoint(read_bytes(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Whitespace-separated reals; '#' starts a comment running to end of line.
inline std::vector<double> parse_weight_list(const std::string& text, const std::string& what = "weights") {
    std::vector<double> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0' || !std::isfinite(v))
                throw ParseError(what + ":" + std::to_string(lineno) + ": not a finite number: '" + tok + "'");
            out.push_back(v);
        }
    }
    if (out.empty()) throw ParseError(what + ": no weights found");
    return out;
}

inline std::string format_weight_list(std::span<const double> w) {
    std::string out;
    char buf[32];
    for (double x : w) {
        std::snprintf(buf, sizeof buf, "%.17g\n", x);
        out += buf;
    }
    return out;
}

}  // namespace lcq
