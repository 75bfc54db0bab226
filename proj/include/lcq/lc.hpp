#pragma once

// Learning-compression driver: alternates an L step (penalized training)
// with a C step (optimal quantization of w - lambda/mu) under a growing
// penalty, plus the direct-compression baselines and bit accounting.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lcq/error.hpp"
#include "lcq/models.hpp"
#include "lcq/penalty.hpp"
#include "lcq/quantizers.hpp"

namespace lcq {

// ---------------------------------------------------------------------------
// Schemes

enum class SchemeKind { adaptive, fixed, binary, binary_scale, ternary, ternary_scale, pow2 };

inline const char* to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::adaptive: return "adaptive";
        case SchemeKind::fixed: return "fixed";
        case SchemeKind::binary: return "binary";
        case SchemeKind::binary_scale: return "binary_scale";
        case SchemeKind::ternary: return "ternary";
        case SchemeKind::ternary_scale: return "ternary_scale";
        case SchemeKind::pow2: return "pow2";
    }
    return "unknown";
}

/// How one group of weights is quantized.
struct LayerScheme {
    SchemeKind kind = SchemeKind::adaptive;
    int K = 2;                    // adaptive
    std::vector<double> codebook; // fixed
    int c_exp = 0;                // pow2

    /// Codebook size this scheme produces.
    std::size_t codebook_size() const {
        switch (kind) {
            case SchemeKind::adaptive: return static_cast<std::size_t>(K);
            case SchemeKind::fixed: return codebook.size();
            case SchemeKind::binary:
            case SchemeKind::binary_scale: return 2;
            case SchemeKind::ternary:
            case SchemeKind::ternary_scale: return 3;
            case SchemeKind::pow2: return static_cast<std::size_t>(2 * c_exp + 3);
        }
        return 0;
    }

    void validate() const {
        if (kind == SchemeKind::adaptive && K < 1) throw ConfigError("adaptive scheme needs K >= 1");
        if (kind == SchemeKind::pow2 && c_exp < 0) throw ConfigError("pow2 scheme needs C >= 0");
        if (kind == SchemeKind::fixed) (void)Codebook::fixed(codebook);
    }

    /// "adaptive:K", "fixed:c1,c2,...", "binary", "binary_scale", "ternary",
    /// "ternary_scale", "pow2:C".
    std::string to_spec() const {
        switch (kind) {
            case SchemeKind::adaptive: return "adaptive:" + std::to_string(K);
            case SchemeKind::pow2: return "pow2:" + std::to_string(c_exp);
            case SchemeKind::fixed: {
                std::ostringstream os;
                os.precision(17);
                os << "fixed:";
                for (std::size_t i = 0; i < codebook.size(); ++i) os << (i ? "," : "") << codebook[i];
                return os.str();
            }
            default: return to_string(kind);
        }
    }

    static LayerScheme parse(const std::string& spec) {
        const auto colon = spec.find(':');
        const std::string head = spec.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
        auto need_int = [&](const char* what) {
            try {
                std::size_t used = 0;
                const int v = std::stoi(arg, &used);
                if (used != arg.size()) throw std::invalid_argument(arg);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("scheme '" + spec + "': expected integer " + what);
            }
        };
        LayerScheme s;
        if (head == "adaptive") {
            s.kind = SchemeKind::adaptive;
            s.K = need_int("K");
        } else if (head == "pow2") {
            s.kind = SchemeKind::pow2;
            s.c_exp = need_int("C");
        } else if (head == "fixed") {
            s.kind = SchemeKind::fixed;
            std::stringstream ss(arg);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                try {
                    s.codebook.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw ConfigError("scheme '" + spec + "': bad codebook entry '" + tok + "'");
                }
            }
        } else if (head == "binary" || head == "binary_scale" || head == "ternary" || head == "ternary_scale") {
            if (!arg.empty()) throw ConfigError("scheme '" + spec + "' takes no argument");
            s.kind = head == "binary"         ? SchemeKind::binary
                     : head == "binary_scale" ? SchemeKind::binary_scale
                     : head == "ternary"      ? SchemeKind::ternary
                                              : SchemeKind::ternary_scale;
        } else {
            throw ConfigError("unknown scheme '" + spec + "'");
        }
        s.validate();
        return s;
    }
};

enum class SchemeScope { per_layer, global };

/// Quantization plan for a model. `layers` holds either one entry applied
/// to every quantizable layer or one entry per quantizable layer. Global
/// scope pools all quantizable weights into a single codebook.
struct QuantScheme {
    std::vector<LayerScheme> layers;
    SchemeScope scope = SchemeScope::per_layer;

    static QuantScheme uniform(LayerScheme s, SchemeScope scope = SchemeScope::per_layer) {
        return {{std::move(s)}, scope};
    }
    static QuantScheme adaptive(int K, SchemeScope scope = SchemeScope::per_layer) {
        LayerScheme s;
        s.K = K;
        return uniform(s, scope);
    }
};

// ---------------------------------------------------------------------------
// C step

/// Applies a QuantScheme to full parameter vectors. A "unit" is the group
/// of weights sharing one codebook: a single layer or, for global scope,
/// every quantizable layer.
class Compressor {
public:
    Compressor(const ParamLayout& layout, QuantScheme scheme, std::uint64_t seed)
        : layout_(layout), scheme_(std::move(scheme)), seed_(seed) {
        std::vector<std::size_t> q;
        for (std::size_t l = 0; l < layout_.num_layers(); ++l)
            if (layout_.layer(l).quantizable) q.push_back(l);
        if (q.empty()) throw ConfigError("model has no quantizable layers");
        if (scheme_.layers.empty()) throw ConfigError("quantization scheme is empty");
        for (const auto& s : scheme_.layers) s.validate();
        if (scheme_.scope == SchemeScope::global) {
            if (scheme_.layers.size() != 1) throw ConfigError("global scope takes a single scheme");
            units_.push_back(q);
        } else {
            if (scheme_.layers.size() != 1 && scheme_.layers.size() != q.size())
                throw ConfigError("scheme lists " + std::to_string(scheme_.layers.size()) + " entries for " +
                                  std::to_string(q.size()) + " quantizable layers");
            for (auto l : q) units_.push_back({l});
        }
    }

    std::size_t num_units() const { return units_.size(); }
    const std::vector<std::size_t>& unit_layers(std::size_t u) const { return units_.at(u); }
    const LayerScheme& unit_scheme(std::size_t u) const {
        return scheme_.layers.size() == 1 ? scheme_.layers[0] : scheme_.layers.at(u);
    }
    const QuantScheme& scheme() const { return scheme_; }

    /// Concatenated weights of unit u.
    std::vector<double> gather(const Vector& v, std::size_t u) const {
        std::vector<double> out;
        for (auto l : units_.at(u)) {
            const auto w = layout_.weights(v, l);
            out.insert(out.end(), w.begin(), w.end());
        }
        return out;
    }

    /// Optimal quantization of the weight entries of `v`. Adaptive units
    /// warm-start k-means from `warm` when given, else use k-means++.
    std::vector<QuantParams> compress(const Vector& v, const std::vector<QuantParams>* warm = nullptr,
                                      int* kmeans_iters = nullptr) const {
        layout_.check(v, "compression input");
        std::vector<QuantParams> out;
        int iters = 0;
        for (std::size_t u = 0; u < units_.size(); ++u) {
            const std::vector<double> w = gather(v, u);
            const LayerScheme& s = unit_scheme(u);
            switch (s.kind) {
                case SchemeKind::adaptive: {
                    std::mt19937_64 rng(seed_ + 0x51ed27ull * (u + 1));
                    KMeansResult r = warm ? kmeans_1d(w, warm->at(u).codebook)
                                          : kmeans_1d(w, static_cast<std::size_t>(s.K), rng);
                    iters += r.iterations;
                    out.push_back(std::move(r.params));
                    break;
                }
                case SchemeKind::fixed: {
                    auto cb = Codebook::fixed(s.codebook);
                    auto a = assign_fixed(w, cb);
                    out.push_back({std::move(cb), std::move(a)});
                    break;
                }
                case SchemeKind::binary: out.push_back(binarize(w)); break;
                case SchemeKind::binary_scale: out.push_back(binarize_scale(w)); break;
                case SchemeKind::ternary: out.push_back(ternarize(w)); break;
                case SchemeKind::ternary_scale: out.push_back(ternarize_scale(w)); break;
                case SchemeKind::pow2: out.push_back(pow2_quantize(w, s.c_exp)); break;
            }
        }
        if (kmeans_iters) *kmeans_iters = iters;
        return out;
    }

    /// Copy of `base` with every quantizable weight replaced by its
    /// decompressed value. Biases come from `base`.
    Vector decompress(const std::vector<QuantParams>& params, const Vector& base) const {
        layout_.check(base, "decompression base");
        if (params.size() != units_.size()) throw ConfigError("decompress: wrong number of codebooks");
        Vector out = base;
        for (std::size_t u = 0; u < units_.size(); ++u) {
            const std::vector<double> vals = lcq::decompress(params[u]);
            std::size_t pos = 0;
            for (auto l : units_[u]) {
                auto dst = layout_.weights(out, l);
                if (pos + dst.size() > vals.size()) throw ConfigError("decompress: assignment count mismatch");
                std::copy_n(vals.begin() + static_cast<std::ptrdiff_t>(pos), dst.size(), dst.begin());
                pos += dst.size();
            }
            if (pos != vals.size()) throw ConfigError("decompress: assignment count mismatch");
        }
        return out;
    }

    /// Sum of squared distortions over units.
    double distortion(const Vector& v, const std::vector<QuantParams>& params) const {
        double d = 0.0;
        for (std::size_t u = 0; u < units_.size(); ++u) d += squared_distortion(gather(v, u), params.at(u));
        return d;
    }

private:
    ParamLayout layout_;
    QuantScheme scheme_;
    std::uint64_t seed_;
    std::vector<std::vector<std::size_t>> units_;
};

// ---------------------------------------------------------------------------
// Compression accounting

struct CompressionStats {
    std::int64_t P1 = 0;
    std::int64_t P0 = 0;
    std::int64_t K = 1;
    int b = 32;
    std::int64_t bits_reference = 0;
    std::int64_t bits_quantized = 0;
    double rho = 1.0;
};

inline int ceil_log2(std::int64_t K) {
    int bits = 0;
    while ((std::int64_t{1} << bits) < K) ++bits;
    return bits;
}

/// Reference stores P1 + P0 floats; the quantized model stores P1 indices of
/// ceil(log2 K) bits plus P0 floats and the K codebook floats.
inline CompressionStats compression_stats(std::int64_t P1, std::int64_t P0, std::int64_t K, int b = 32) {
    if (P1 < 0 || P0 < 0) throw ConfigError("compression_stats: counts must be >= 0");
    if (K < 1) throw ConfigError("compression_stats: K must be >= 1");
    if (b < 1) throw ConfigError("compression_stats: b must be >= 1");
    CompressionStats s{P1, P0, K, b, 0, 0, 0.0};
    s.bits_reference = (P1 + P0) * b;
    s.bits_quantized = P1 * ceil_log2(K) + (P0 + K) * b;
    s.rho = static_cast<double>(s.bits_reference) / static_cast<double>(s.bits_quantized);
    return s;
}

/// Same accounting with one codebook per unit; K reports the total number
/// of stored codebook entries.
inline CompressionStats compression_stats(const ParamLayout& layout, const Compressor& comp,
                                          const std::vector<QuantParams>& params, int b = 32) {
    CompressionStats s;
    s.P1 = layout.quantizable_count();
    s.P0 = layout.unquantized_count();
    s.b = b;
    s.K = 0;
    std::int64_t index_bits = 0;
    for (std::size_t u = 0; u < comp.num_units(); ++u) {
        const auto K = static_cast<std::int64_t>(params.at(u).codebook.size());
        std::int64_t n = 0;
        for (auto l : comp.unit_layers(u)) n += layout.weight_count(l);
        index_bits += n * ceil_log2(K);
        s.K += K;
    }
    s.bits_reference = (s.P1 + s.P0) * b;
    s.bits_quantized = index_bits + (s.P0 + s.K) * b;
    s.rho = static_cast<double>(s.bits_reference) / static_cast<double>(s.bits_quantized);
    return s;
}

// ---------------------------------------------------------------------------
// Trace

struct TraceRow {
    int outer_iter = 0;
    double mu = 0.0;
    double loss_train = 0.0;
    double loss_test = std::numeric_limits<double>::quiet_NaN();
    double err_train = std::numeric_limits<double>::quiet_NaN();
    double err_test = std::numeric_limits<double>::quiet_NaN();
    double constraint_violation = 0.0;
    int kmeans_iters = 0;
    double wall_time_s = 0.0;
    double distortion = 0.0;
    std::vector<std::vector<double>> codebooks;
};

inline const char* trace_csv_header() {
    return "outer_iter,mu,loss_train,loss_test,err_train,err_test,constraint_violation,kmeans_iters,wall_time_s";
}

struct Trace {
    std::vector<TraceRow> rows;

    /// `comment` lines, if any, are written first prefixed with "# ".
    std::string to_csv(const std::string& comment = "") const {
        std::string out;
        std::istringstream cl(comment);
        for (std::string line; std::getline(cl, line);) out += "# " + line + "\n";
        out += std::string(trace_csv_header()) + "\n";
        char buf[512];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", r.outer_iter, r.mu,
                          r.loss_train, r.loss_test, r.err_train, r.err_test, r.constraint_violation, r.kmeans_iters,
                          r.wall_time_s);
            out += buf;
        }
        return out;
    }

    static Trace from_csv(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        bool got = false;
        while ((got = static_cast<bool>(std::getline(in, line)))) {
            ++lineno;
            if (line.empty() || line[0] != '#') break;
        }
        if (!got || line != trace_csv_header()) throw ParseError("trace csv: bad header");
        Trace t;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            std::string tok;
            while (std::getline(ss, tok, ',')) f.push_back(tok);
            if (f.size() != 9) throw ParseError("trace csv line " + std::to_string(lineno) + ": expected 9 fields");
            auto num = [&](const std::string& s) {
                char* end = nullptr;
                const double v = std::strtod(s.c_str(), &end);
                if (end == s.c_str() || *end != '\0')
                    throw ParseError("trace csv line " + std::to_string(lineno) + ": bad number '" + s + "'");
                return v;
            };
            TraceRow r;
            r.outer_iter = static_cast<int>(num(f[0]));
            r.mu = num(f[1]);
            r.loss_train = num(f[2]);
            r.loss_test = num(f[3]);
            r.err_train = num(f[4]);
            r.err_test = num(f[5]);
            r.constraint_violation = num(f[6]);
            r.kmeans_iters = static_cast<int>(num(f[7]));
            r.wall_time_s = num(f[8]);
            t.rows.push_back(std::move(r));
        }
        return t;
    }

    nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : rows) {
            arr.push_back({{"outer_iter", r.outer_iter},
                           {"mu", r.mu},
                           {"loss_train", num(r.loss_train)},
                           {"loss_test", num(r.loss_test)},
                           {"err_train", num(r.err_train)},
                           {"err_test", num(r.err_test)},
                           {"constraint_violation", num(r.constraint_violation)},
                           {"kmeans_iters", r.kmeans_iters},
                           {"wall_time_s", r.wall_time_s},
                           {"distortion", num(r.distortion)},
                           {"codebooks", r.codebooks}});
        }
        return arr;
    }

    static Trace from_json(const nlohmann::json& arr) {
        if (!arr.is_array()) throw ParseError("trace json: expected an array of rows");
        auto num = [](const nlohmann::json& v) {
            return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
        };
        Trace t;
        try {
            for (const auto& o : arr) {
                TraceRow r;
                r.outer_iter = o.at("outer_iter").get<int>();
                r.mu = o.at("mu").get<double>();
                r.loss_train = num(o.at("loss_train"));
                r.loss_test = num(o.at("loss_test"));
                r.err_train = num(o.at("err_train"));
                r.err_test = num(o.at("err_test"));
                r.constraint_violation = num(o.at("constraint_violation"));
                r.kmeans_iters = o.at("kmeans_iters").get<int>();
                r.wall_time_s = o.at("wall_time_s").get<double>();
                r.distortion = num(o.at("distortion"));
                r.codebooks = o.at("codebooks").get<std::vector<std::vector<double>>>();
                t.rows.push_back(std::move(r));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("trace json: ") + e.what());
        }
        return t;
    }
};

/// L-step failure inside a run; carries the trace recorded so far.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, Trace trace) : NumericalError(what), trace_(std::move(trace)) {}
    const Trace& trace() const { return trace_; }

private:
    Trace trace_;
};

// ---------------------------------------------------------------------------
// Drivers

struct LcOptions {
    PenaltySchedule schedule;
    SgdConfig sgd;
    double tolerance = 1e-6;
    std::uint64_t seed = 1;
    /// Turning this off under augmented_lagrangian reproduces the quadratic
    /// penalty method.
    bool update_multipliers = true;
    bool evaluate_test = true;
    std::function<void(const TraceRow&)> on_iteration;
    /// Called with the exact vector handed to each C step after the first.
    std::function<void(const Vector& c_input, const Vector& w, const Vector& lambda, double mu)> on_c_step;
};

struct LcResult {
    std::vector<QuantParams> params;
    Vector weights;   // Delta(Theta) with the final biases
    Vector w_real;    // last L-step iterate
    Vector lambda;
    Trace trace;
    bool converged = false;
    int iterations = 0;     // outer iterations executed
    int selected_iter = 0;  // trace row the returned model comes from
};

namespace detail {

inline double weight_violation(const ParamLayout& layout, const Vector& w, const Vector& wc) {
    double m = 0.0;
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        if (!layout.layer(l).quantizable) continue;
        const auto o = layout.weight_offset(l), n = layout.weight_count(l);
        m = std::max(m, (w.segment(o, n) - wc.segment(o, n)).lpNorm<Eigen::Infinity>());
    }
    return m;
}

inline TraceRow make_row(const LossModel& m, const Compressor& comp, int iter, double mu, const Vector& w,
                         const Vector& wc, const std::vector<QuantParams>& params, int kmeans_iters, double t0,
                         bool eval_test, const Vector& c_input) {
    TraceRow r;
    r.outer_iter = iter;
    r.mu = mu;
    r.loss_train = m.loss(wc);
    if (eval_test && m.has_test()) {
        r.loss_test = m.test_loss(wc);
        r.err_test = m.test_error(wc);
    }
    r.err_train = m.error(wc);
    r.constraint_violation = weight_violation(m.layout(), w, wc);
    r.kmeans_iters = kmeans_iters;
    r.distortion = comp.distortion(c_input, params);
    for (const auto& p : params) r.codebooks.push_back(p.codebook.values());
    r.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count() - t0;
    return r;
}

inline double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace detail

/// Direct compression: one C step on the reference weights.
inline LcResult dc_run(const LossModel& m, const Vector& w_ref, const QuantScheme& scheme, std::uint64_t seed = 1,
                       bool evaluate_test = true) {
    const double t0 = detail::now_s();
    const Compressor comp(m.layout(), scheme, seed);
    LcResult res;
    int it = 0;
    res.params = comp.compress(w_ref, nullptr, &it);
    res.weights = comp.decompress(res.params, w_ref);
    res.w_real = w_ref;
    res.lambda = Vector::Zero(w_ref.size());
    res.trace.rows.push_back(detail::make_row(m, comp, 0, 0.0, w_ref, res.weights, res.params, it, t0,
                                              evaluate_test, w_ref));
    res.converged = true;
    return res;
}

/// Learning-compression. Row 0 of the trace is the direct-compression
/// point; row k >= 1 follows the k-th L/C/multiplier update at mu_{k-1}.
/// Stops once ||w - Delta(Theta)||_inf < tolerance and returns Delta(Theta).
/// Otherwise returns the row with the lowest training loss, flagged not
/// converged.
inline LcResult lc_run(const LossModel& m, const Vector& w_ref, const QuantScheme& scheme, const LcOptions& opt) {
    opt.schedule.validate();
    opt.sgd.validate();
    if (!(opt.tolerance > 0.0)) throw ConfigError("lc: tolerance must be positive");
    m.layout().check(w_ref, "reference weights");
    const double t0 = detail::now_s();
    const Compressor comp(m.layout(), scheme, opt.seed);
    const bool al = opt.schedule.method == PenaltyMethod::augmented_lagrangian && opt.update_multipliers;

    LcResult res;
    Vector w = w_ref;
    Vector lambda = Vector::Zero(w.size());
    int it = 0;
    std::vector<QuantParams> params = comp.compress(w, nullptr, &it);
    Vector wc = comp.decompress(params, w);
    res.trace.rows.push_back(detail::make_row(m, comp, 0, 0.0, w, wc, params, it, t0, opt.evaluate_test, w));
    if (opt.on_iteration) opt.on_iteration(res.trace.rows.back());

    double best_loss = res.trace.rows.back().loss_train;
    std::vector<QuantParams> best_params = params;
    Vector best_wc = wc;
    int best_iter = 0;

    const auto mus = opt.schedule.mus();
    for (int k = 0; k < opt.schedule.max_outer_iters; ++k) {
        const double mu = mus[static_cast<std::size_t>(k)];
        const Vector shift = lambda / mu;
        try {
            w = m.l_step(w, wc + shift, mu, opt.sgd, k);
        } catch (const NumericalError& e) {
            throw DivergenceError(std::string("L step diverged at outer iteration ") + std::to_string(k + 1) + ": " +
                                      e.what(),
                                  res.trace);
        }
        const Vector c_input = w - shift;
        if (opt.on_c_step) opt.on_c_step(c_input, w, lambda, mu);
        params = comp.compress(c_input, &params, &it);
        wc = comp.decompress(params, w);
        if (al) {
            const Vector d = w - wc;
            for (std::size_t l = 0; l < m.layout().num_layers(); ++l) {
                if (!m.layout().layer(l).quantizable) continue;
                const auto o = m.layout().weight_offset(l), n = m.layout().weight_count(l);
                lambda.segment(o, n) -= mu * d.segment(o, n);
            }
        }
        auto row = detail::make_row(m, comp, k + 1, mu, w, wc, params, it, t0, opt.evaluate_test, c_input);
        if (!std::isfinite(row.loss_train))
            throw DivergenceError("non-finite loss at outer iteration " + std::to_string(k + 1), res.trace);
        res.trace.rows.push_back(std::move(row));
        if (opt.on_iteration) opt.on_iteration(res.trace.rows.back());
        res.iterations = k + 1;

        const auto& last = res.trace.rows.back();
        if (last.loss_train < best_loss) {
            best_loss = last.loss_train;
            best_params = params;
            best_wc = wc;
            best_iter = k + 1;
        }
        if (last.constraint_violation < opt.tolerance) {
            res.converged = true;
            break;
        }
    }

    res.w_real = w;
    res.lambda = lambda;
    if (res.converged) {
        res.params = std::move(params);
        res.weights = std::move(wc);
        res.selected_iter = res.iterations;
    } else {
        res.params = std::move(best_params);
        res.weights = std::move(best_wc);
        res.selected_iter = best_iter;
    }
    return res;
}

/// Iterated direct compression: retrain from the quantized point at mu = 0,
/// then quantize again, `outer_iters` times. Returns the last iterate.
inline LcResult idc_run(const LossModel& m, const Vector& w_ref, const QuantScheme& scheme, int outer_iters,
                        const LcOptions& opt) {
    if (outer_iters < 1) throw ConfigError("idc: outer_iters must be >= 1");
    opt.sgd.validate();
    m.layout().check(w_ref, "reference weights");
    const double t0 = detail::now_s();
    const Compressor comp(m.layout(), scheme, opt.seed);

    LcResult res;
    int it = 0;
    std::vector<QuantParams> params = comp.compress(w_ref, nullptr, &it);
    Vector wc = comp.decompress(params, w_ref);
    Vector w = w_ref;
    res.trace.rows.push_back(detail::make_row(m, comp, 0, 0.0, w, wc, params, it, t0, opt.evaluate_test, w));
    if (opt.on_iteration) opt.on_iteration(res.trace.rows.back());
    for (int j = 0; j < outer_iters; ++j) {
        try {
            w = m.l_step(wc, wc, 0.0, opt.sgd, j);
        } catch (const NumericalError& e) {
            throw DivergenceError(std::string("retraining diverged at iteration ") + std::to_string(j + 1) + ": " +
                                      e.what(),
                                  res.trace);
        }
        params = comp.compress(w, &params, &it);
        wc = comp.decompress(params, w);
        res.trace.rows.push_back(detail::make_row(m, comp, j + 1, 0.0, w, wc, params, it, t0, opt.evaluate_test, w));
        if (opt.on_iteration) opt.on_iteration(res.trace.rows.back());
    }
    res.params = std::move(params);
    res.weights = std::move(wc);
    res.w_real = std::move(w);
    res.lambda = Vector::Zero(w_ref.size());
    res.iterations = outer_iters;
    res.selected_iter = outer_iters;
    res.converged = true;
    return res;
}

}  // namespace lcq
