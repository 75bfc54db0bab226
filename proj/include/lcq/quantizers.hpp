#pragma once

// Compression mappings for scalar weight quantization: given a real weight
// vector, find the codebook, assignments (and optional global scale) that
// minimize the squared distortion. These are the C-step solvers of the
// learning-compression driver in lc.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcq/error.hpp"

namespace lcq {

enum class CodebookKind { adaptive, fixed, fixed_with_scale };

inline const char* to_string(CodebookKind kind) {
    switch (kind) {
        case CodebookKind::adaptive: return "adaptive";
        case CodebookKind::fixed: return "fixed";
        case CodebookKind::fixed_with_scale: return "fixed_with_scale";
    }
    return "unknown";
}

/// Sorted set of K scalar values c_1 < ... < c_K, optionally multiplied by a
/// global scale. A scale of exactly zero marks a degenerate result (the
/// input to a *_scale quantizer was all zeros).
class Codebook {
public:
    static Codebook adaptive(std::vector<double> entries) {
        return Codebook(std::move(entries), CodebookKind::adaptive, 1.0);
    }

    static Codebook fixed(std::vector<double> entries) {
        return Codebook(std::move(entries), CodebookKind::fixed, 1.0);
    }

    static Codebook with_scale(std::vector<double> entries, double scale) {
        if (!(scale > 0.0) || !std::isfinite(scale)) {
            throw ConfigError("codebook scale must be positive and finite");
        }
        return Codebook(std::move(entries), CodebookKind::fixed_with_scale, scale);
    }

    static Codebook degenerate_scale(std::vector<double> entries) {
        return Codebook(std::move(entries), CodebookKind::fixed_with_scale, 0.0);
    }

    std::span<const double> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    CodebookKind kind() const { return kind_; }
    bool has_scale() const { return kind_ == CodebookKind::fixed_with_scale; }
    double scale() const { return scale_; }
    bool degenerate() const { return has_scale() && scale_ == 0.0; }

    /// Value a weight assigned to entry k decompresses to.
    double value(std::size_t k) const { return has_scale() ? scale_ * entries_[k] : entries_[k]; }

    std::vector<double> values() const {
        std::vector<double> out(entries_.size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = value(k);
        return out;
    }

    friend bool operator==(const Codebook&, const Codebook&) = default;

private:
    Codebook(std::vector<double> entries, CodebookKind kind, double scale)
        : entries_(std::move(entries)), kind_(kind), scale_(scale) {
        if (entries_.empty()) throw ConfigError("codebook must have at least one entry");
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            if (!std::isfinite(entries_[k])) throw ConfigError("codebook entries must be finite");
            if (k > 0 && !(entries_[k - 1] < entries_[k])) {
                throw ConfigError("codebook entries must be strictly increasing");
            }
        }
    }

    std::vector<double> entries_;
    CodebookKind kind_;
    double scale_;
};

/// Zero-based index of each weight's codebook entry (kappa(i) - 1).
using Assignments = std::vector<std::uint32_t>;

struct QuantParams {
    Codebook codebook;
    Assignments assignments;

    bool degenerate() const { return codebook.degenerate(); }
};

/// Lookup-table decompression: out[i] = scale * c[kappa(i)].
inline std::vector<double> decompress(const QuantParams& q) {
    std::vector<double> out(q.assignments.size());
    const auto values = q.codebook.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = values[q.assignments[i]];
    return out;
}

/// Sum of squared differences between w and its decompressed approximation.
inline double squared_distortion(std::span<const double> w, const QuantParams& q) {
    const auto values = q.codebook.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = w[i] - values[q.assignments[i]];
        sum += d * d;
    }
    return sum;
}

inline double absolute_distortion(std::span<const double> w, const QuantParams& q) {
    const auto values = q.codebook.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) sum += std::abs(w[i] - values[q.assignments[i]]);
    return sum;
}

namespace detail {

inline std::vector<double> midpoints(std::span<const double> sorted_values) {
    std::vector<double> mid(sorted_values.empty() ? 0 : sorted_values.size() - 1);
    for (std::size_t k = 0; k + 1 < sorted_values.size(); ++k) {
        mid[k] = 0.5 * (sorted_values[k] + sorted_values[k + 1]);
    }
    return mid;
}

// Voronoi cell of t: the number of midpoints <= t. A value sitting exactly on
// a midpoint goes to the upper cell.
inline std::uint32_t cell_of(std::span<const double> mid, double t) {
    return static_cast<std::uint32_t>(std::upper_bound(mid.begin(), mid.end(), t) - mid.begin());
}

inline void assign_sorted(std::span<const double> w, std::span<const double> sorted_values,
                          Assignments& out) {
    const auto mid = midpoints(sorted_values);
    out.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = cell_of(mid, w[i]);
}

inline std::uint32_t sgn_index(double t) { return t >= 0.0 ? 1u : 0u; }

}  // namespace detail

/// Nearest-entry assignment by binary search over Voronoi midpoints,
/// O(P log K). Ties at a midpoint go to the higher index.
inline Assignments assign_fixed(std::span<const double> w, const Codebook& c) {
    Assignments out;
    const auto values = c.values();
    detail::assign_sorted(w, values, out);
    return out;
}

/// Options shared by the Lloyd-type clustering routines.
struct KMeansOptions {
    int max_iterations = 100;
};

struct KMeansResult {
    QuantParams params;
    double distortion = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Distortion after each assignment step; nonincreasing.
    std::vector<double> history;
};

namespace detail {

enum class CentroidRule { mean, lower_median };

inline double point_cost(double d, CentroidRule rule) {
    return rule == CentroidRule::mean ? d * d : std::abs(d);
}

inline double lower_median(std::vector<double>& v) {
    const std::size_t m = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    return v[m];
}

// Lloyd iteration in 1-D from the given starting centroids. Centroids are
// kept sorted so the assignment step is a binary search.
inline KMeansResult lloyd_1d(std::span<const double> w, std::vector<double> centroids,
                             CentroidRule rule, const KMeansOptions& opts) {
    if (w.empty()) throw ConfigError("clustering needs at least one weight");
    if (centroids.empty()) throw ConfigError("clustering needs at least one centroid");
    for (double x : w) {
        if (!std::isfinite(x)) throw NumericalError("non-finite weight passed to clustering");
    }

    const std::size_t P = w.size();
    Assignments assign(P), previous;
    KMeansResult result{QuantParams{Codebook::adaptive({0.0}), {}}, 0.0, 0, false, {}};

    std::vector<double> sums;
    std::vector<std::size_t> counts;
    std::vector<std::vector<double>> members;

    for (int iter = 0;; ++iter) {
        std::sort(centroids.begin(), centroids.end());
        assign_sorted(w, centroids, assign);

        double distortion = 0.0;
        for (std::size_t i = 0; i < P; ++i) distortion += point_cost(w[i] - centroids[assign[i]], rule);
        result.history.push_back(distortion);
        result.iterations = iter + 1;
        result.distortion = distortion;

        // Lloyd rounds = centroid updates; a warm start at a fixed point is 1.
        if (iter > 0 && assign == previous) {
            result.iterations = iter;
            result.converged = true;
            break;
        }
        if (iter + 1 >= opts.max_iterations) break;
        previous = assign;

        const std::size_t K = centroids.size();
        counts.assign(K, 0);
        if (rule == CentroidRule::mean) {
            sums.assign(K, 0.0);
            for (std::size_t i = 0; i < P; ++i) {
                sums[assign[i]] += w[i];
                ++counts[assign[i]];
            }
            for (std::size_t k = 0; k < K; ++k) {
                if (counts[k] > 0) centroids[k] = sums[k] / static_cast<double>(counts[k]);
            }
        } else {
            members.assign(K, {});
            for (std::size_t i = 0; i < P; ++i) {
                members[assign[i]].push_back(w[i]);
                ++counts[assign[i]];
            }
            for (std::size_t k = 0; k < K; ++k) {
                if (counts[k] > 0) centroids[k] = lower_median(members[k]);
            }
        }

        // Empty clusters: move the centroid onto the weight farthest from its
        // own centroid. A weight already sitting on a centroid cannot help, so
        // such centroids are dropped instead.
        std::vector<bool> taken(P, false);
        std::vector<double> kept;
        kept.reserve(K);
        bool dropped = false;
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] > 0) {
                kept.push_back(centroids[k]);
                continue;
            }
            double best = 0.0;
            std::size_t best_i = P;
            for (std::size_t i = 0; i < P; ++i) {
                if (taken[i]) continue;
                const double d = std::abs(w[i] - centroids[assign[i]]);
                if (d > best) {
                    best = d;
                    best_i = i;
                }
            }
            if (best_i == P) {
                dropped = true;
                continue;
            }
            taken[best_i] = true;
            kept.push_back(w[best_i]);
        }
        centroids = std::move(kept);
        if (dropped) previous.clear();
    }

    // Duplicate centroids can only arise when K exceeds the number of
    // distinct weights; collapse them so the codebook stays strictly sorted.
    std::vector<double> unique_c;
    std::vector<std::uint32_t> remap(centroids.size());
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        if (unique_c.empty() || unique_c.back() < centroids[k]) unique_c.push_back(centroids[k]);
        remap[k] = static_cast<std::uint32_t>(unique_c.size() - 1);
    }
    for (auto& a : assign) a = remap[a];

    result.params = QuantParams{Codebook::adaptive(std::move(unique_c)), std::move(assign)};
    return result;
}

}  // namespace detail

/// k-means++ seeding on scalar data: first centre uniform, then each next
/// centre drawn with probability proportional to squared distance.
inline std::vector<double> kmeanspp_seed(std::span<const double> w, std::size_t K,
                                         std::mt19937_64& rng) {
    if (w.empty()) throw ConfigError("k-means++ needs at least one weight");
    if (K == 0) throw ConfigError("codebook size K must be at least 1");
    std::vector<double> centres;
    centres.reserve(K);
    std::uniform_int_distribution<std::size_t> pick(0, w.size() - 1);
    centres.push_back(w[pick(rng)]);

    std::vector<double> d2(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = w[i] - centres[0];
        d2[i] = d * d;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (centres.size() < K) {
        double total = 0.0;
        for (double v : d2) total += v;
        if (!(total > 0.0)) break;  // fewer distinct values than K
        const double target = unit(rng) * total;
        double acc = 0.0;
        std::size_t chosen = w.size() - 1;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += d2[i];
            if (acc > target && d2[i] > 0.0) {
                chosen = i;
                break;
            }
        }
        while (d2[chosen] == 0.0) --chosen;
        const double c = w[chosen];
        centres.push_back(c);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = w[i] - c;
            d2[i] = std::min(d2[i], d * d);
        }
    }
    return centres;
}

/// Scalar k-means seeded with k-means++.
inline KMeansResult kmeans_1d(std::span<const double> w, std::size_t K, std::mt19937_64& rng,
                              const KMeansOptions& opts = {}) {
    return detail::lloyd_1d(w, kmeanspp_seed(w, K, rng), detail::CentroidRule::mean, opts);
}

/// Scalar k-means warm-started from an existing codebook.
inline KMeansResult kmeans_1d(std::span<const double> w, const Codebook& warm,
                              const KMeansOptions& opts = {}) {
    const auto v = warm.values();
    return detail::lloyd_1d(w, {v.begin(), v.end()}, detail::CentroidRule::mean, opts);
}

/// k-medians (l1 distortion); even-sized clusters take the lower middle value.
inline KMeansResult kmedians_1d(std::span<const double> w, std::size_t K, std::mt19937_64& rng,
                                const KMeansOptions& opts = {}) {
    return detail::lloyd_1d(w, kmeanspp_seed(w, K, rng), detail::CentroidRule::lower_median, opts);
}

inline KMeansResult kmedians_1d(std::span<const double> w, const Codebook& warm,
                                const KMeansOptions& opts = {}) {
    const auto v = warm.values();
    return detail::lloyd_1d(w, {v.begin(), v.end()}, detail::CentroidRule::lower_median, opts);
}

// ---------------------------------------------------------------------------
// Fixed codebooks

/// q(t) = sgn(t) over {-1, +1}, with sgn(0) = +1.
inline QuantParams binarize(std::span<const double> w) {
    Assignments a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = detail::sgn_index(w[i]);
    return {Codebook::fixed({-1.0, 1.0}), std::move(a)};
}

/// Optimal {-a, +a} quantization: a = mean |w_i|, theta_i = sgn(w_i).
inline QuantParams binarize_scale(std::span<const double> w) {
    if (w.empty()) throw ConfigError("binarize_scale needs at least one weight");
    double sum = 0.0;
    Assignments a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        sum += std::abs(w[i]);
        a[i] = detail::sgn_index(w[i]);
    }
    const double scale = sum / static_cast<double>(w.size());
    if (scale == 0.0) return {Codebook::degenerate_scale({-1.0, 1.0}), std::move(a)};
    return {Codebook::with_scale({-1.0, 1.0}, scale), std::move(a)};
}

/// q(t) over {-1, 0, +1}: zero when |t| < 1/2, otherwise sgn(t).
inline QuantParams ternarize(std::span<const double> w) {
    Assignments a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        a[i] = std::abs(w[i]) < 0.5 ? 1u : (w[i] >= 0.0 ? 2u : 0u);
    }
    return {Codebook::fixed({-1.0, 0.0, 1.0}), std::move(a)};
}

/// Diagnostics of the closed-form ternarization: the selected support size
/// j* (number of nonzero weights, in decreasing-magnitude order).
struct TernaryScaleResult {
    QuantParams params;
    std::size_t support = 0;
};

/// Optimal {-a, 0, +a} quantization. With |w| sorted decreasingly,
/// j* = argmax_j S_j / sqrt(j) (S_j the prefix sum of magnitudes) and
/// a = S_j* / j*. O(P log P), dominated by the sort.
inline TernaryScaleResult ternarize_scale_detailed(std::span<const double> w) {
    if (w.empty()) throw ConfigError("ternarize_scale needs at least one weight");
    std::vector<double> mag(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) mag[i] = std::abs(w[i]);
    std::sort(mag.begin(), mag.end(), std::greater<>());

    double prefix = 0.0, best_stat = -1.0, best_sum = 0.0;
    std::size_t best_j = 1;
    for (std::size_t j = 1; j <= mag.size(); ++j) {
        prefix += mag[j - 1];
        const double stat = prefix / std::sqrt(static_cast<double>(j));
        if (stat > best_stat) {
            best_stat = stat;
            best_j = j;
            best_sum = prefix;
        }
    }
    const double scale = best_sum / static_cast<double>(best_j);

    Assignments a(w.size());
    if (scale == 0.0) {
        std::fill(a.begin(), a.end(), 1u);
        return {{Codebook::degenerate_scale({-1.0, 0.0, 1.0}), std::move(a)}, 0};
    }
    const double half = 0.5 * scale;
    std::size_t support = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (std::abs(w[i]) < half) {
            a[i] = 1u;
        } else {
            a[i] = w[i] >= 0.0 ? 2u : 0u;
            ++support;
        }
    }
    return {{Codebook::with_scale({-1.0, 0.0, 1.0}, scale), std::move(a)}, support};
}

inline QuantParams ternarize_scale(std::span<const double> w) {
    return ternarize_scale_detailed(w).params;
}

/// Sorted powers-of-two codebook {0, +-1, +-2^-1, ..., +-2^-c_exp}.
inline Codebook pow2_codebook(int c_exp) {
    if (c_exp < 0) throw ConfigError("powers-of-two exponent count must be >= 0");
    std::vector<double> e;
    e.reserve(static_cast<std::size_t>(2 * c_exp + 3));
    for (int k = 0; k <= c_exp; ++k) e.push_back(-std::ldexp(1.0, -k));
    e.push_back(0.0);
    for (int k = c_exp; k >= 0; --k) e.push_back(std::ldexp(1.0, -k));
    return Codebook::fixed(std::move(e));
}

/// Nearest powers-of-two value in O(1) per weight via f = -log2|t|.
inline double pow2_value(double t, int c_exp) {
    const double f = -std::log2(std::abs(t));  // +inf at t = 0
    const double c = static_cast<double>(c_exp);
    double alpha;
    if (f > c + 1.0) {
        alpha = 0.0;
    } else if (f <= 0.0) {
        alpha = 1.0;
    } else if (f > c) {
        alpha = std::ldexp(1.0, -c_exp);
    } else {
        alpha = std::ldexp(1.0, -static_cast<int>(std::floor(f + std::log2(1.5))));
    }
    return t >= 0.0 ? alpha : -alpha;
}

inline QuantParams pow2_quantize(std::span<const double> w, int c_exp) {
    Codebook cb = pow2_codebook(c_exp);
    const std::uint32_t zero = static_cast<std::uint32_t>(c_exp + 1);
    const std::uint32_t top = static_cast<std::uint32_t>(2 * c_exp + 2);
    Assignments a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double q = pow2_value(w[i], c_exp);
        if (q == 0.0) {
            a[i] = zero;
            continue;
        }
        int exp = 0;
        std::frexp(std::abs(q), &exp);  // |q| = 2^(exp-1)
        const auto e = static_cast<std::uint32_t>(1 - exp);
        a[i] = q > 0.0 ? top - e : e;
    }
    return {std::move(cb), std::move(a)};
}

struct ScaleAlternationResult {
    QuantParams params;
    int iterations = 0;
    bool converged = false;
    /// Objective sum_i (w_i - a c_kappa(i))^2 after each assignment step.
    std::vector<double> history;
};

/// Fixed codebook with a learned global scale, by alternating the
/// assignment step and the closed-form scale step. Starts from
/// a0 = mean|w| / mean|c_k| (nonzero entries only).
inline ScaleAlternationResult fixed_scale_alternate(std::span<const double> w, const Codebook& c,
                                                    int max_iters = 100) {
    if (w.empty()) throw ConfigError("fixed_scale_alternate needs at least one weight");
    if (max_iters < 1) throw ConfigError("fixed_scale_alternate needs max_iters >= 1");
    const auto entries = c.entries();
    double mean_w = 0.0, mean_c = 0.0;
    std::size_t nonzero_c = 0;
    for (double x : w) mean_w += std::abs(x);
    mean_w /= static_cast<double>(w.size());
    for (double e : entries) {
        if (e != 0.0) {
            mean_c += std::abs(e);
            ++nonzero_c;
        }
    }
    if (nonzero_c == 0) throw ConfigError("scaled codebook needs a nonzero entry");
    mean_c /= static_cast<double>(nonzero_c);

    std::vector<double> base(entries.begin(), entries.end());
    ScaleAlternationResult result{{Codebook::degenerate_scale(base), Assignments(w.size(), 0)}, 0, false, {}};

    double scale = mean_w / mean_c;
    if (scale == 0.0) {
        // All-zero input: every weight takes the entry closest to zero.
        const auto zero_it = std::min_element(base.begin(), base.end(),
                                              [](double x, double y) { return std::abs(x) < std::abs(y); });
        std::fill(result.params.assignments.begin(), result.params.assignments.end(),
                  static_cast<std::uint32_t>(zero_it - base.begin()));
        result.converged = true;
        return result;
    }

    Assignments assign, previous;
    std::vector<double> scaled(base.size());
    for (int iter = 0; iter < max_iters; ++iter) {
        for (std::size_t k = 0; k < base.size(); ++k) scaled[k] = scale * base[k];
        detail::assign_sorted(w, scaled, assign);

        double objective = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = w[i] - scaled[assign[i]];
            objective += d * d;
        }
        result.history.push_back(objective);
        result.iterations = iter + 1;

        if (iter > 0 && assign == previous) {
            result.converged = true;
            break;
        }
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double ck = base[assign[i]];
            num += w[i] * ck;
            den += ck * ck;
        }
        previous = assign;
        if (den == 0.0 || !(num / den > 0.0)) {
            // Scale step undefined (everything on the zero entry): keep a.
            result.converged = true;
            break;
        }
        scale = num / den;
    }
    if (!previous.empty()) assign = previous;
    result.params = {Codebook::with_scale(std::move(base), scale), std::move(assign)};
    return result;
}

}  // namespace lcq
