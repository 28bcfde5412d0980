#pragma once

// Proper scores for okta PMFs, LogS flooring, skill scores and randomized PIT.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oktacal/errors.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

/// Discrete CRPS on the okta fractions:
/// sum_k p_k |y_k - x| - sum_{k>l} p_k p_l |y_k - y_l|.
inline double crps_discrete(const Pmf& pmf, OktaIndex obs) {
    const double x = okta_fraction(obs);
    double first = 0.0, second = 0.0;
    for (std::size_t k = 0; k < kNumOktas; ++k) {
        first += pmf[k] * std::abs(kOktaValues[k] - x);
        for (std::size_t l = 0; l < k; ++l) second += pmf[k] * pmf[l] * (kOktaValues[k] - kOktaValues[l]);
    }
    return std::max(0.0, first - second);
}

inline double log_score(const Pmf& pmf, OktaIndex obs) {
    const double p = pmf[obs];
    if (!(p > 0.0))
        throw ZeroProbabilityError("zero predicted probability at observed okta " + std::to_string(obs) +
                                   " (floor the PMF before scoring)");
    return -std::log(p);
}

/// Smallest probability that gives a 1% chance of seeing a category at least
/// once in `training_days` days: 1 - 0.99^(1/T).
inline double min_probability(double training_days) {
    if (!(training_days >= 1.0)) throw DomainError("training length must be at least one day");
    return -std::expm1(std::log1p(-0.01) / training_days);
}

/// Raises every entry to at least p_min and rescales the remaining entries
/// proportionally so the result is again a PMF.
inline Pmf floor_pmf(const Pmf& pmf, double training_days) {
    const double p_min = min_probability(training_days);
    std::array<bool, kNumOktas> floored{};
    bool any = false;
    for (std::size_t k = 0; k < kNumOktas; ++k) any = any || (floored[k] = pmf[k] < p_min);
    if (!any) return pmf;

    std::array<double, kNumOktas> out{};
    for (;;) {
        std::size_t n_floor = 0;
        double free_mass = 0.0;
        for (std::size_t k = 0; k < kNumOktas; ++k) {
            if (floored[k]) ++n_floor;
            else free_mass += pmf[k];
        }
        const double scale = (1.0 - static_cast<double>(n_floor) * p_min) / free_mass;
        bool changed = false;
        for (std::size_t k = 0; k < kNumOktas; ++k) {
            out[k] = floored[k] ? p_min : pmf[k] * scale;
            if (!floored[k] && out[k] < p_min) {
                floored[k] = true;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return Pmf(out);
}

/// 1 - mean_score / mean_score_ref; positive when better than the reference.
inline double skill_score(double mean_score, double mean_score_ref) {
    if (!(mean_score_ref > 0.0)) throw DomainError("reference mean score must be positive");
    return 1.0 - mean_score / mean_score_ref;
}

/// Randomized PIT: uniform on [F(x-), F(x)] for the observed okta x.
/// One uniform is always drawn so parallel streams stay aligned.
inline double pit_value(const Pmf& pmf, OktaIndex obs, std::mt19937_64& rng) {
    const auto cdf = pmf.cdf();
    const double hi = cdf.at(obs);
    const double lo = obs == 0 ? 0.0 : cdf[obs - 1];
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (!(hi > lo)) return lo;
    return std::min(hi, lo + (hi - lo) * u);
}

/// Equal-width bin counts of PIT values on [0, 1].
inline std::vector<std::size_t> pit_histogram(std::span<const double> pit, std::size_t bins = 20) {
    if (bins == 0) throw DomainError("histogram needs at least one bin");
    std::vector<std::size_t> counts(bins, 0);
    for (double u : pit) {
        auto b = static_cast<std::size_t>(u * static_cast<double>(bins));
        counts[std::min(b, bins - 1)] += 1;
    }
    return counts;
}

}  // namespace oktacal
