#pragma once

// Penalty schedule and multiplier state for the learning-compression loop.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lcq/error.hpp"

namespace lcq {

enum class PenaltyMethod { augmented_lagrangian, quadratic_penalty };

inline const char* to_string(PenaltyMethod m) {
    return m == PenaltyMethod::augmented_lagrangian ? "augmented_lagrangian" : "quadratic_penalty";
}

inline PenaltyMethod parse_penalty_method(const std::string& s) {
    if (s == "augmented_lagrangian" || s == "al") return PenaltyMethod::augmented_lagrangian;
    if (s == "quadratic_penalty" || s == "qp") return PenaltyMethod::quadratic_penalty;
    throw ConfigError("unknown penalty method '" + s + "'");
}

/// mu_k = mu0 * growth^k, k = 0 .. max_outer_iters-1.
struct PenaltySchedule {
    double mu0 = 9.76e-5;
    double growth = 1.1;
    int max_outer_iters = 30;
    PenaltyMethod method = PenaltyMethod::augmented_lagrangian;

    static PenaltySchedule mlp_default() { return {}; }
    static PenaltySchedule regression_default() { return {10.0, 1.1, 30, PenaltyMethod::augmented_lagrangian}; }

    void validate() const {
        if (!(mu0 > 0.0) || !std::isfinite(mu0)) throw ConfigError("schedule: mu0 must be positive and finite");
        if (!(growth > 1.0) || !std::isfinite(growth)) throw ConfigError("schedule: growth must be > 1");
        if (max_outer_iters < 1) throw ConfigError("schedule: max_outer_iters must be >= 1");
    }

    /// Values are built by repeated multiplication so consecutive ratios
    /// equal `growth` up to a single rounding.
    std::vector<double> mus() const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(max_outer_iters));
        double mu = mu0;
        for (int k = 0; k < max_outer_iters; ++k) {
            out.push_back(mu);
            mu *= growth;
        }
        return out;
    }
};

/// Current penalty, multipliers (one per quantizable weight) and iteration.
struct PenaltyState {
    double mu = 0.0;
    std::vector<double> lambda;
    int outer_iter = 0;
};

/// Learning rate clipped so that a step on the penalty term never
/// overshoots: min(eta, 1/mu). mu == 0 leaves eta unchanged.
inline double clipped_lr(double eta, double mu) {
    if (mu < 0.0) throw ConfigError("clipped_lr: mu must be nonnegative");
    if (mu == 0.0) return eta;
    return std::min(eta, 1.0 / mu);
}

}  // namespace lcq
