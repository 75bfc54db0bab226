#pragma once

// Loss/size grid over hidden units H and codebook size K for a single
// hidden-layer classifier, and selection of the smallest model meeting a
// loss target.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "lcq/lc.hpp"
#include "lcq/models.hpp"

namespace lcq {

/// One grid cell. log2k == 0 denotes the unquantized reference.
struct SweepCell {
    int hidden = 0;
    int log2k = 0;
    double size_bits = 0.0;
    double loss_train = std::numeric_limits<double>::quiet_NaN();
    double loss_test = std::numeric_limits<double>::quiet_NaN();
    double err_train = std::numeric_limits<double>::quiet_NaN();
    double err_test = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    bool ok = false;
    std::string error;
};

struct SweepConfig {
    std::vector<int> hidden{2, 4, 8, 16};
    std::vector<int> log2k{1, 2, 3, 4, 0};
    Activation activation = Activation::tanh;
    SgdConfig sgd;
    int reference_epochs = 30;
    PenaltySchedule schedule{1e-3, 1.25, 90, PenaltyMethod::augmented_lagrangian};
    double tolerance = 1e-6;
    std::uint64_t seed = 1;
    int bits_per_float = 32;
    int jobs = 1;
};

/// Storage of a D-H-d net: (D+d)H weights at log2 K bits, H+d biases and
/// one K-entry codebook per layer at b bits; log2k == 0 stores every
/// parameter as a float.
inline double sweep_size_bits(int D, int d, int H, int log2k, int b = 32) {
    const double weights = static_cast<double>(D + d) * H;
    const double biases = static_cast<double>(H + d);
    if (log2k == 0) return (weights + biases) * b;
    return weights * log2k + biases * b + 2.0 * std::ldexp(1.0, log2k) * b;
}

namespace detail {

inline std::vector<SweepCell> sweep_one_hidden(const LabeledImageSet& train, const std::optional<LabeledImageSet>& test,
                                               const SweepConfig& cfg, int H) {
    std::vector<SweepCell> out;
    const int D = static_cast<int>(train.d()), d = train.n_classes;
    auto fill = [&](SweepCell& c, const LossModel& m, const Vector& w) {
        c.loss_train = m.loss(w);
        c.err_train = m.error(w);
        if (m.has_test()) {
            c.loss_test = m.test_loss(w);
            c.err_test = m.test_error(w);
        }
        c.ok = std::isfinite(c.loss_train);
        if (!c.ok) c.error = "non-finite loss";
    };
    std::optional<MlpModel> model;
    Vector ref;
    std::string ref_error;
    try {
        model.emplace(std::vector<int>{D, H, d}, cfg.activation, train, test);
        ref = train_reference(*model, model->initial_weights(cfg.seed + static_cast<std::uint64_t>(H)), cfg.sgd,
                              cfg.reference_epochs);
    } catch (const Error& e) {
        ref_error = e.what();
    }
    for (int k : cfg.log2k) {
        SweepCell c;
        c.hidden = H;
        c.log2k = k;
        c.size_bits = sweep_size_bits(D, d, H, k, cfg.bits_per_float);
        if (!ref_error.empty()) {
            c.error = "reference training failed: " + ref_error;
        } else if (k == 0) {
            fill(c, *model, ref);
            c.converged = true;
        } else {
            try {
                LcOptions o;
                o.schedule = cfg.schedule;
                o.sgd = cfg.sgd;
                o.tolerance = cfg.tolerance;
                o.seed = cfg.seed;
                const auto r = lc_run(*model, ref, QuantScheme::adaptive(1 << k), o);
                fill(c, *model, r.weights);
                c.converged = r.converged;
            } catch (const Error& e) {
                c.error = e.what();
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace detail

/// Trains one reference per H and runs LC for every finite log2 K. Cell
/// failures are recorded and the sweep continues. Cells are independent, so
/// `jobs > 1` evaluates different H concurrently with identical results.
inline std::vector<SweepCell> run_sweep(const LabeledImageSet& train, const std::optional<LabeledImageSet>& test,
                                        const SweepConfig& cfg) {
    if (cfg.hidden.empty() || cfg.log2k.empty()) throw ConfigError("sweep: grid is empty");
    for (int H : cfg.hidden)
        if (H < 1) throw ConfigError("sweep: hidden sizes must be >= 1");
    for (int k : cfg.log2k)
        if (k < 0 || k > 16) throw ConfigError("sweep: log2 K must be in 1..16 (0 for the reference)");
    std::vector<std::vector<SweepCell>> per(cfg.hidden.size());
    if (cfg.jobs <= 1) {
        for (std::size_t i = 0; i < cfg.hidden.size(); ++i)
            per[i] = detail::sweep_one_hidden(train, test, cfg, cfg.hidden[i]);
    } else {
        for (std::size_t start = 0; start < cfg.hidden.size(); start += static_cast<std::size_t>(cfg.jobs)) {
            std::vector<std::future<std::vector<SweepCell>>> fut;
            const std::size_t end = std::min(cfg.hidden.size(), start + static_cast<std::size_t>(cfg.jobs));
            for (std::size_t i = start; i < end; ++i)
                fut.push_back(std::async(std::launch::async, [&, i] {
                    return detail::sweep_one_hidden(train, test, cfg, cfg.hidden[i]);
                }));
            for (std::size_t i = start; i < end; ++i) per[i] = fut[i - start].get();
        }
    }
    std::vector<SweepCell> out;
    for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
    return out;
}

/// Smallest cell with loss_train <= max_loss; ties go to the lower loss.
inline std::optional<std::size_t> select_operational_point(const std::vector<SweepCell>& cells, double max_loss) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (!c.ok || !(c.loss_train <= max_loss)) continue;
        if (!best || c.size_bits < cells[*best].size_bits ||
            (c.size_bits == cells[*best].size_bits && c.loss_train < cells[*best].loss_train))
            best = i;
    }
    return best;
}

/// q-quantile (linear interpolation) of the training losses of successful cells.
inline double loss_quantile(const std::vector<SweepCell>& cells, double q) {
    std::vector<double> v;
    for (const auto& c : cells)
        if (c.ok) v.push_back(c.loss_train);
    if (v.empty()) throw NumericalError("sweep: no successful cells");
    std::sort(v.begin(), v.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::string out = "hidden,log2k,K,size_bits,loss_train,loss_test,err_train,err_test,converged,ok,error\n";
    char buf[512];
    for (const auto& c : cells) {
        std::string err = c.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        std::snprintf(buf, sizeof buf, "%d,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,", c.hidden,
                      c.log2k == 0 ? "inf" : std::to_string(c.log2k).c_str(),
                      c.log2k == 0 ? "inf" : std::to_string(1 << c.log2k).c_str(), c.size_bits, c.loss_train,
                      c.loss_test, c.err_train, c.err_test, c.converged ? 1 : 0, c.ok ? 1 : 0);
        out += buf + err + "\n";
    }
    return out;
}

}  // namespace lcq
