#pragma once

// Okta scale, quantization of continuous cloud cover, and the predictive
// PMF type that every model returns and every score consumes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "oktacal/calendar.hpp"
#include "oktacal/errors.hpp"

namespace oktacal {

inline constexpr std::size_t kNumOktas = 9;
inline constexpr std::size_t kNumExchangeable = 50;
inline constexpr std::size_t kNumMembers = kNumExchangeable + 2;

/// Reported SYNOP values of the nine okta categories.
inline constexpr std::array<double, kNumOktas> kOktaValues{0.0,  0.1,  0.25, 0.4, 0.5,
                                                           0.6,  0.75, 0.9,  1.0};

/// Interior cut points of the quantization intervals [lo, hi); the last
/// interval [0.99, 1] is closed.
inline constexpr std::array<double, kNumOktas - 1> kQuantizationBounds{
    0.01, 0.1875, 0.3125, 0.4375, 0.5625, 0.6875, 0.8125, 0.99};

using OktaIndex = std::size_t;

/// Category index of a cloud-cover fraction. A value equal to a cut point
/// belongs to the upper interval.
inline OktaIndex quantize_tcc(double value) {
    if (!(value >= 0.0 && value <= 1.0))
        throw DomainError("TCC value " + std::to_string(value) + " outside [0, 1]");
    const auto it = std::upper_bound(kQuantizationBounds.begin(), kQuantizationBounds.end(), value);
    return static_cast<OktaIndex>(it - kQuantizationBounds.begin());
}

inline double okta_fraction(OktaIndex k) {
    if (k >= kNumOktas) throw DomainError("okta index " + std::to_string(k) + " out of range");
    return kOktaValues[k];
}

/// Probability mass function over the nine okta categories. The invariants
/// (non-negative entries summing to one) are checked on construction.
class Pmf {
public:
    static constexpr double kSumTolerance = 1e-9;

    explicit Pmf(const std::array<double, kNumOktas>& probs) : probs_(probs) {
        double sum = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("PMF entry negative or non-finite");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kSumTolerance)
            throw DomainError("PMF entries sum to " + std::to_string(sum));
    }

    /// Normalizes non-negative weights (at least one positive) into a PMF.
    static Pmf from_weights(std::span<const double> weights) {
        if (weights.size() != kNumOktas) throw DimensionMismatch("PMF needs 9 weights");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("negative or non-finite weight");
            sum += w;
        }
        if (!(sum > 0.0)) throw DomainError("weights sum to zero");
        std::array<double, kNumOktas> p{};
        for (std::size_t k = 0; k < kNumOktas; ++k) p[k] = weights[k] / sum;
        return Pmf(p);
    }

    static Pmf uniform() {
        std::array<double, kNumOktas> p;
        p.fill(1.0 / kNumOktas);
        return Pmf(p);
    }

    static Pmf point_mass(OktaIndex k) {
        std::array<double, kNumOktas> p{};
        p.at(k) = 1.0;
        return Pmf(p);
    }

    double operator[](OktaIndex k) const { return probs_[k]; }
    const std::array<double, kNumOktas>& probs() const noexcept { return probs_; }

    /// Cumulative probabilities; the last entry is exactly 1.
    std::array<double, kNumOktas> cdf() const {
        std::array<double, kNumOktas> c{};
        double acc = 0.0;
        for (std::size_t k = 0; k < kNumOktas; ++k) {
            acc += probs_[k];
            c[k] = std::min(acc, 1.0);
        }
        c[kNumOktas - 1] = 1.0;
        return c;
    }

    friend bool operator==(const Pmf&, const Pmf&) = default;

private:
    std::array<double, kNumOktas> probs_;
};

/// One 52-member TCC ensemble forecast for a station, valid date and lead time.
struct EnsembleForecast {
    double hres = 0.0;
    double ctrl = 0.0;
    std::array<double, kNumExchangeable> members{};
    std::optional<double> precip_mean;
    std::string station_id;
    Date valid_date{};
    int lead_time_days = 1;

    /// Visits HRES, CTRL and the 50 exchangeable members.
    template <class F>
    void for_each_member(F&& f) const {
        f(hres);
        f(ctrl);
        for (double m : members) f(m);
    }
};

inline void validate(const EnsembleForecast& fc) {
    bool ok = true;
    fc.for_each_member([&](double v) { ok = ok && v >= 0.0 && v <= 1.0; });
    if (!ok) throw DomainError("ensemble TCC value outside [0, 1]");
    if (fc.precip_mean && !(*fc.precip_mean >= 0.0 && std::isfinite(*fc.precip_mean)))
        throw DomainError("precipitation mean must be finite and non-negative");
    if (fc.lead_time_days < 1 || fc.lead_time_days > 10)
        throw DomainError("lead time must lie in 1..10 days");
}

struct Observation {
    OktaIndex okta_index = 0;
    std::string station_id;
    Date valid_date{};

    double fraction() const { return okta_fraction(okta_index); }
};

/// Empirical distribution of the 52 quantized members, each with weight 1/52.
inline Pmf raw_ensemble_pmf(const EnsembleForecast& fc) {
    std::array<double, kNumOktas> counts{};
    fc.for_each_member([&](double v) { counts[quantize_tcc(v)] += 1.0; });
    for (double& c : counts) c /= static_cast<double>(kNumMembers);
    return Pmf(counts);
}

}  // namespace oktacal
