#pragma once

// Brute-force reference solutions used by the test and acceptance suites.
// Nothing here includes or calls the production quantizers; every answer is
// found by exhaustive enumeration or exact dynamic programming.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace lcq::oracles {

struct ScaledSigns {
    double scale = 0.0;
    std::vector<int> theta;  // each in {-1, 0, +1}
    double objective = 0.0;
};

namespace detail {

inline double scaled_objective(std::span<const double> w, const std::vector<int>& theta, double& scale) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        num += w[i] * theta[i];
        den += static_cast<double>(theta[i] * theta[i]);
    }
    scale = den > 0.0 ? num / den : 0.0;
    double obj = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double r = w[i] - scale * theta[i];
        obj += r * r;
    }
    return obj;
}

// Enumerates every theta in alphabet^P (odometer order) and keeps the best.
inline ScaledSigns enumerate(std::span<const double> w, const std::vector<int>& alphabet) {
    const std::size_t P = w.size();
    std::vector<std::size_t> digit(P, 0);
    std::vector<int> theta(P, alphabet[0]);
    ScaledSigns best;
    best.objective = std::numeric_limits<double>::infinity();
    while (true) {
        double scale = 0.0;
        const double obj = scaled_objective(w, theta, scale);
        if (obj < best.objective) best = {scale, theta, obj};
        std::size_t pos = 0;
        while (pos < P && ++digit[pos] == alphabet.size()) {
            digit[pos] = 0;
            theta[pos] = alphabet[0];
            ++pos;
        }
        if (pos == P) break;
        theta[pos] = alphabet[digit[pos]];
    }
    return best;
}

}  // namespace detail

/// Global optimum of sum_i (w_i - a theta_i)^2 over a in R, theta in {-1,+1}^P
/// by enumerating all 2^P sign patterns.
inline ScaledSigns brute_binarize_scale(std::span<const double> w) {
    if (w.size() > 16) throw std::invalid_argument("brute_binarize_scale: P must be <= 16");
    if (w.empty()) return {};
    return detail::enumerate(w, {-1, 1});
}

/// Same over theta in {-1,0,+1}^P (3^P patterns).
inline ScaledSigns brute_ternarize_scale(std::span<const double> w) {
    if (w.size() > 10) throw std::invalid_argument("brute_ternarize_scale: P must be <= 10");
    if (w.empty()) return {};
    return detail::enumerate(w, {-1, 0, 1});
}

/// Linear-scan nearest entry of `values` (any order) for each weight. Ties
/// prefer the larger value.
inline std::vector<std::size_t> brute_nearest(std::span<const double> w, std::span<const double> values,
                                              double scale = 1.0) {
    std::vector<std::size_t> out(w.size(), 0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double v = scale * values[k];
            const double d = std::abs(w[i] - v);
            if (d < best || (d == best && v > scale * values[out[i]])) {
                best = d;
                out[i] = k;
            }
        }
    }
    return out;
}

/// Powers-of-two codebook built independently by repeated halving.
inline std::vector<double> pow2_values(int c_exp) {
    std::vector<double> v{0.0};
    double p = 1.0;
    for (int k = 0; k <= c_exp; ++k) {
        v.push_back(p);
        v.push_back(-p);
        p /= 2.0;
    }
    return v;
}

struct OptimalClustering {
    std::vector<double> centroids;  // sorted
    double distortion = 0.0;
};

/// Exact 1-D k-means: optimal clusters are contiguous runs of the sorted
/// data, so a DP over (clusters used, prefix length) finds the optimum in
/// O(K P^2).
inline OptimalClustering kmeans_1d_dp(std::span<const double> w, std::size_t K) {
    if (w.size() > 512 || K > 16) throw std::invalid_argument("kmeans_1d_dp: P <= 512 and K <= 16 required");
    if (w.empty() || K == 0) throw std::invalid_argument("kmeans_1d_dp: need P >= 1 and K >= 1");
    std::vector<double> x(w.begin(), w.end());
    std::sort(x.begin(), x.end());
    const std::size_t P = x.size();
    K = std::min(K, P);

    std::vector<double> s(P + 1, 0.0), s2(P + 1, 0.0);
    for (std::size_t i = 0; i < P; ++i) {
        s[i + 1] = s[i] + x[i];
        s2[i + 1] = s2[i] + x[i] * x[i];
    }
    // Cost of cluster x[i..j), clamped against cancellation.
    auto cost = [&](std::size_t i, std::size_t j) {
        const double n = static_cast<double>(j - i);
        const double sum = s[j] - s[i];
        return std::max(0.0, (s2[j] - s2[i]) - sum * sum / n);
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> D(K + 1, std::vector<double>(P + 1, inf));
    std::vector<std::vector<std::size_t>> split(K + 1, std::vector<std::size_t>(P + 1, 0));
    D[0][0] = 0.0;
    for (std::size_t k = 1; k <= K; ++k) {
        for (std::size_t j = k; j <= P; ++j) {
            for (std::size_t i = k - 1; i < j; ++i) {
                if (D[k - 1][i] == inf) continue;
                const double v = D[k - 1][i] + cost(i, j);
                if (v < D[k][j]) {
                    D[k][j] = v;
                    split[k][j] = i;
                }
            }
        }
    }

    // Recover the partition and recompute its distortion directly.
    OptimalClustering out;
    std::size_t j = P;
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t k = K; k >= 1; --k) {
        const std::size_t i = split[k][j];
        runs.emplace_back(i, j);
        j = i;
    }
    std::reverse(runs.begin(), runs.end());
    for (auto [i0, i1] : runs) {
        double mean = 0.0;
        for (std::size_t t = i0; t < i1; ++t) mean += x[t];
        mean /= static_cast<double>(i1 - i0);
        for (std::size_t t = i0; t < i1; ++t) out.distortion += (x[t] - mean) * (x[t] - mean);
        if (out.centroids.empty() || out.centroids.back() < mean) out.centroids.push_back(mean);
    }
    return out;
}

/// Best single l1 centre: scans every data value as a candidate median.
inline double brute_l1_center(std::span<const double> w, double* distortion = nullptr) {
    double best = std::numeric_limits<double>::infinity(), arg = 0.0;
    for (double c : w) {
        double d = 0.0;
        for (double x : w) d += std::abs(x - c);
        if (d < best || (d == best && c < arg)) {
            best = d;
            arg = c;
        }
    }
    if (distortion) *distortion = best;
    return arg;
}

}  // namespace lcq::oracles
