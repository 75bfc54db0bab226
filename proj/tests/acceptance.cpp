// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lcq/lc.hpp"
#include "lcq/oracles.hpp"
#include "lcq/sweep.hpp"

using namespace lcq;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> logscale(-3.0, 3.0);
    const double s = std::exp(logscale(rng));
    std::vector<double> w(n);
    for (auto& x : w) x = s * g(rng);
    return w;
}

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300}); }

Outcome criterion1() {
    const double expected[] = {30.5, 15.6, 10.5, 7.9, 6.3, 5.3};
    std::string got;
    bool pass = true;
    int i = 0;
    for (std::int64_t K : {2, 4, 8, 16, 32, 64}) {
        const double rho = compression_stats(266200, 410, K, 32).rho;
        const double r1 = std::round(rho * 10.0) / 10.0;
        pass &= r1 == expected[i++];
        got += fmt(" K=%lld:x%.1f", static_cast<long long>(K), r1);
    }
    return {pass, "rho" + got};
}

Outcome criterion2() {
    std::mt19937_64 rng(2024);
    int bad_b = 0, bad_t = 0, bad_p = 0;
    double worst = 0.0;
    const int N = 1000;
    for (int t = 0; t < N; ++t) {
        const auto w = normal_vector(rng, 10);
        const double a = squared_distortion(w, binarize_scale(w)), b = oracles::brute_binarize_scale(w).objective;
        worst = std::max(worst, std::abs(a - b) / std::max(b, 1e-300));
        bad_b += rel_close(a, b, 1e-12) ? 0 : 1;
    }
    for (int t = 0; t < N; ++t) {
        const auto w = normal_vector(rng, 8);
        const double a = squared_distortion(w, ternarize_scale(w)), b = oracles::brute_ternarize_scale(w).objective;
        worst = std::max(worst, std::abs(a - b) / std::max(b, 1e-300));
        bad_t += rel_close(a, b, 1e-12) ? 0 : 1;
    }
    for (int t = 0; t < N; ++t) {
        const int c_exp = t % 7;
        const auto w = normal_vector(rng, 1000);
        const auto cb = oracles::pow2_values(c_exp);
        const auto nn = oracles::brute_nearest(w, cb);
        double b = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) b += (w[i] - cb[nn[i]]) * (w[i] - cb[nn[i]]);
        const double a = squared_distortion(w, pow2_quantize(w, c_exp));
        worst = std::max(worst, std::abs(a - b) / std::max(b, 1e-300));
        bad_p += rel_close(a, b, 1e-12) ? 0 : 1;
    }
    return {bad_b + bad_t + bad_p == 0,
            fmt("%d vectors each; mismatches binary_scale %d, ternary_scale %d, pow2 %d; worst relative gap %.2e", N,
                bad_b, bad_t, bad_p, worst)};
}

Outcome criterion3() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> psize(1, 64), ksize(1, 8), nclust(1, 6);
    std::normal_distribution<double> g;
    const int N = 300;
    int fixed_fail = 0, mono_fail = 0, bound_fail = 0, within = 0;
    for (int t = 0; t < N; ++t) {
        const auto P = static_cast<std::size_t>(psize(rng));
        const auto K = static_cast<std::size_t>(ksize(rng));
        // Alternate plain Gaussian data with clustered mixtures.
        std::vector<double> w;
        if (t % 2 == 0) {
            w = normal_vector(rng, P);
        } else {
            const int c = nclust(rng);
            std::vector<double> centres(static_cast<std::size_t>(c));
            for (auto& x : centres) x = 4.0 * g(rng);
            for (std::size_t i = 0; i < P; ++i) w.push_back(centres[i % centres.size()] + 0.3 * g(rng));
        }
        const double opt = oracles::kmeans_1d_dp(w, K).distortion;
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < 10; ++r) {
            const auto res = kmeans_1d(w, K, rng);
            for (std::size_t i = 1; i < res.history.size(); ++i) mono_fail += res.history[i] > res.history[i - 1] ? 1 : 0;
            const auto again = kmeans_1d(w, res.params.codebook);
            if (again.params.assignments != res.params.assignments || again.params.codebook != res.params.codebook)
                ++fixed_fail;
            if (res.distortion < opt * (1.0 - 1e-12) - 1e-15) ++bound_fail;
            best = std::min(best, res.distortion);
        }
        within += best <= opt * 1.01 + 1e-15 ? 1 : 0;
    }
    const double frac = within / static_cast<double>(N);
    return {fixed_fail == 0 && mono_fail == 0 && bound_fail == 0 && frac >= 0.9,
            fmt("%d instances x 10 restarts; fixed-point failures %d, increases %d, below-optimum %d; "
                "best-of-10 within 1%% of optimum on %.1f%%",
                N, fixed_fail, mono_fail, bound_fail, 100.0 * frac)};
}

Outcome criterion4() {
    const auto data = gen_superres(gen_stroke_images(1000, 28, 7), 0.01, 11);
    const LinearRegressionModel m(data);
    const Vector ref = m.solve_ols();
    bool pass = true;
    std::string detail = fmt("reference loss %.4g;", m.loss(ref));
    const double published[2][2] = {{23.721, 15.026}, {21.531, 10.666}};
    int i = 0;
    for (int K : {2, 4}) {
        const auto scheme = QuantScheme::adaptive(K);
        const auto dc = dc_run(m, ref, scheme, 1, false);
        const double dc_loss = m.loss(dc.weights);
        LcOptions o;
        o.schedule = PenaltySchedule::regression_default();
        o.evaluate_test = false;
        const auto idc = idc_run(m, ref, scheme, 30, o);
        double idc_gap = 0.0;
        for (const auto& r : idc.trace.rows) idc_gap = std::max(idc_gap, std::abs(r.loss_train - dc_loss) / dc_loss);
        const auto lc = lc_run(m, ref, scheme, o);
        const double lc_loss = m.loss(lc.weights);
        pass &= idc.trace.rows.size() == 31 && idc_gap <= 1e-10 && lc_loss < 0.8 * dc_loss;
        detail += fmt(" K=%d: DC %.4g, iDC max rel gap %.1e over %zu rows, LC %.4g (ratio %.3f; reference ratio %.3f);",
                      K, dc_loss, idc_gap, idc.trace.rows.size(), lc_loss, lc_loss / dc_loss,
                      published[i][1] / published[i][0]);
        ++i;
    }
    return {pass, detail};
}

struct MlpSetup {
    LabeledImageSet train, test;
    SgdConfig sgd;
};

MlpSetup mlp_setup() {
    SyntheticClassConfig sc;
    sc.d = 64;
    sc.n = 6000;
    sc.separation = 1.5;
    sc.noise_spread = 1.5;
    auto all = gen_synthetic_classes(sc, 5);
    normalize(all);
    auto [tr, te] = split_set(all, 0.9, 6);
    te.split = Split::test;
    SgdConfig sgd;
    sgd.lr = 0.05;
    sgd.momentum = 0.9;
    sgd.batch_size = 128;
    sgd.epochs = 1;
    return {std::move(tr), std::move(te), sgd};
}

LcOptions mlp_lc_options(const SgdConfig& sgd) {
    LcOptions o;
    o.schedule = {1e-3, 1.25, 90, PenaltyMethod::augmented_lagrangian};
    o.sgd = sgd;
    return o;
}

Outcome criterion5() {
    const auto s = mlp_setup();
    const MlpModel m({64, 40, 10}, Activation::tanh, s.train, s.test);
    const Vector ref = train_reference(m, m.initial_weights(1), s.sgd, 30);
    const auto scheme = QuantScheme::adaptive(2);
    const auto dc = dc_run(m, ref, scheme);
    const auto lc = lc_run(m, ref, scheme, mlp_lc_options(s.sgd));
    const double e_ref = 100.0 * m.test_error(ref), e_dc = 100.0 * m.test_error(dc.weights),
                 e_lc = 100.0 * m.test_error(lc.weights);
    const bool pass = e_lc < e_dc && e_dc - e_ref >= 5.0 && e_lc - e_ref < 2.0;
    return {pass, fmt("synthetic 64-40-10 tanh, %d train; test error reference %.2f%%, DC %.2f%%, LC %.2f%% "
                      "(LC converged %s after %d iterations)",
                      static_cast<int>(s.train.n()), e_ref, e_dc, e_lc, lc.converged ? "yes" : "no", lc.iterations)};
}

// Checks one LC run against the feasibility invariant; returns false on violation.
bool check_feasible(const LossModel& m, const Vector& ref, const QuantScheme& scheme, const LcOptions& o,
                    std::uint64_t seed, int& converged, std::string& why) {
    LcOptions oo = o;
    oo.seed = seed;
    const auto lc = lc_run(m, ref, scheme, oo);
    const auto dc = dc_run(m, ref, scheme, seed, o.evaluate_test);
    const auto& r0 = lc.trace.rows.front();
    const auto& d0 = dc.trace.rows.front();
    if (!(r0.loss_train == d0.loss_train && r0.codebooks == d0.codebooks && r0.distortion == d0.distortion)) {
        why = "iteration 0 differs from DC";
        return false;
    }
    if (!lc.converged) return true;
    ++converged;
    const auto& layout = m.layout();
    double viol = 0.0;
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        if (!layout.layer(l).quantizable) continue;
        const auto a = layout.weights(lc.w_real, l), b = layout.weights(lc.weights, l);
        for (std::size_t i = 0; i < a.size(); ++i) viol = std::max(viol, std::abs(a[i] - b[i]));
        const std::size_t K = scheme.layers.front().codebook_size();
        if (std::set<double>(b.begin(), b.end()).size() > K) {
            why = "layer has more than K distinct weights";
            return false;
        }
    }
    if (!(viol < 1e-6)) {
        why = fmt("converged run ends with violation %.3g", viol);
        return false;
    }
    return true;
}

Outcome criterion6() {
    int runs = 0, converged = 0;
    std::string why;
    bool pass = true;
    {
        SyntheticClassConfig sc;
        sc.d = 16;
        sc.n = 1500;
        sc.separation = 2.5;
        sc.noise_spread = 0.5;
        auto all = gen_synthetic_classes(sc, 9);
        normalize(all);
        SgdConfig sgd;
        sgd.lr = 0.05;
        sgd.momentum = 0.9;
        sgd.batch_size = 64;
        for (const auto& sizes : std::vector<std::vector<int>>{{16, 12, 10}, {16, 8, 6, 10}}) {
            const MlpModel m(sizes, Activation::tanh, all);
            const Vector ref = train_reference(m, m.initial_weights(3), sgd, 15);
            auto o = mlp_lc_options(sgd);
            o.evaluate_test = false;
            for (int K : {2, 4, 8})
                for (std::uint64_t seed : {1, 2}) {
                    ++runs;
                    pass &= check_feasible(m, ref, QuantScheme::adaptive(K), o, seed, converged, why);
                }
        }
    }
    {
        const auto data = gen_superres(gen_stroke_images(300, 16, 3), 0.01, 4);
        const LinearRegressionModel m(data);
        const Vector ref = m.solve_ols();
        LcOptions o;
        o.schedule = {10.0, 1.5, 60, PenaltyMethod::augmented_lagrangian};
        o.evaluate_test = false;
        for (int K : {2, 4}) {
            ++runs;
            pass &= check_feasible(m, ref, QuantScheme::adaptive(K), o, 1, converged, why);
        }
    }
    pass &= converged > 0;
    return {pass, fmt("%d LC runs, %d converged; ", runs, converged) +
                      (why.empty() ? std::string("all converged runs feasible, iteration 0 identical to DC") : why)};
}

Outcome criterion7() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g;
    double worst = 0.0;
    int nets = 0;
    const std::vector<std::pair<std::vector<int>, Activation>> archs = {
        {{5, 8, 3}, Activation::tanh}, {{4, 6, 5, 3}, Activation::tanh}, {{6, 10, 4}, Activation::relu},
        {{3, 7, 7, 2}, Activation::relu}, {{10, 12, 5}, Activation::tanh}};
    for (const auto& [sizes, act] : archs) {
        LabeledImageSet s;
        const int n = 40, d = sizes.front(), C = sizes.back();
        s.images.resize(d, n);
        for (auto& x : s.images.reshaped()) x = g(rng);
        s.labels.resize(n);
        for (auto& y : s.labels) y = static_cast<int>(rng() % static_cast<unsigned>(C));
        s.n_classes = C;
        const MlpModel m(sizes, act, s);
        if (m.layout().total() > 200) return {false, "test network exceeds 200 parameters"};
        for (int rep = 0; rep < 3; ++rep) {
            ++nets;
            Vector w(m.layout().total());
            for (auto& x : w) x = 0.8 * g(rng);
            const Vector an = m.gradient(w);
            // Five-point central stencil: a two-point difference at h=1e-6 is
            // already at roundoff level on components near 1e-7.
            const double h = 1e-4;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                auto f = [&](double t) {
                    Vector v = w;
                    v[i] += t;
                    return m.loss(v);
                };
                const double fd = (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
                worst = std::max(worst, std::abs(fd - an[i]) / std::max(std::abs(fd) + std::abs(an[i]), 1e-6));
            }
        }
    }
    return {worst < 1e-5, fmt("%d networks (P <= 200), max relative error %.2e", nets, worst)};
}

Outcome criterion8() {
    SyntheticClassConfig sc;
    sc.d = 64;
    sc.n = 3000;
    sc.separation = 2.0;
    sc.noise_spread = 0.0;
    auto all = gen_synthetic_classes(sc, 5);
    normalize(all);
    auto [tr, te] = split_set(all, 0.9, 6);
    te.split = Split::test;
    SweepConfig cfg;
    cfg.hidden = {2, 4, 8, 16};
    cfg.log2k = {1, 2, 3, 4, 0};
    cfg.sgd.lr = 0.05;
    cfg.sgd.momentum = 0.9;
    cfg.sgd.batch_size = 128;
    const auto cells = run_sweep(tr, te, cfg);
    int failed = 0;
    for (const auto& c : cells) failed += c.ok ? 0 : 1;
    const double loose = loss_quantile(cells, 0.75);
    const auto sel = select_operational_point(cells, loose);
    bool pass = failed == 0 && sel && cells[*sel].log2k == 1;
    std::string detail = fmt("%zu cells (%d failed); loose target %.4g -> ", cells.size(), failed, loose);
    if (sel) detail += fmt("H=%d log2K=%d;", cells[*sel].hidden, cells[*sel].log2k);
    double prev = 0.0;
    int violations = 0;
    std::string sizes;
    for (int i = 20; i >= 0; --i) {
        const auto p = select_operational_point(cells, loss_quantile(cells, i / 20.0));
        if (!p) {
            ++violations;
            continue;
        }
        if (cells[*p].size_bits < prev) ++violations;
        prev = cells[*p].size_bits;
        if (i % 5 == 0) sizes += fmt(" %.0f", cells[*p].size_bits);
    }
    pass &= violations == 0;
    return {pass, detail + fmt(" sizes while tightening:%s bits; decreases %d", sizes.c_str(), violations)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                            criterion5, criterion6, criterion7, criterion8};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
