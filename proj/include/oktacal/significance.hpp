#pragma once

// Diebold-Mariano tests, Benjamini-Hochberg FDR control and stationary
// block bootstrap intervals for per-date score series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oktacal/calendar.hpp"
#include "oktacal/errors.hpp"

namespace oktacal {

enum class ScoreKind { Crps, LogS };

inline const char* to_string(ScoreKind k) { return k == ScoreKind::Crps ? "CRPS" : "LogS"; }

struct ScoreSeries {
    std::vector<Date> dates;
    std::vector<double> values;
    std::string station_id;
    std::string method_id;
    int lead_time = 1;
    ScoreKind kind = ScoreKind::Crps;

    std::size_t size() const noexcept { return values.size(); }

    double mean() const {
        return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
};

inline void validate(const ScoreSeries& s) {
    if (s.dates.size() != s.values.size()) throw DomainError("score series dates/values differ in length");
    for (double v : s.values)
        if (!std::isfinite(v)) throw DomainError("non-finite score in series");
    for (std::size_t i = 1; i < s.dates.size(); ++i)
        if (!(s.dates[i - 1] < s.dates[i])) throw DomainError("score series dates not strictly increasing");
}

inline bool comparable(const ScoreSeries& a, const ScoreSeries& b) {
    return a.station_id == b.station_id && a.lead_time == b.lead_time && a.kind == b.kind && a.dates == b.dates;
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int direction = 0;  ///< sign of mean(a - b)
};

inline double standard_normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// DM test on a loss-differential series with a rectangular HAC variance of
/// `max_lag` autocovariances. An identically zero series yields statistic 0
/// and p = 1.
inline TestResult dm_test(std::span<const double> d, int max_lag) {
    const std::size_t n = d.size();
    if (n < 2) throw DegenerateSeriesError("DM test needs at least two differences");
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) return {};
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    auto autocov = [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t t = k; t < n; ++t) s += (d[t] - mean) * (d[t - k] - mean);
        return s / static_cast<double>(n);
    };
    const double gamma0 = autocov(0);
    if (!(gamma0 > 0.0)) throw DegenerateSeriesError("score differences have zero variance");
    double var = gamma0;
    const std::size_t lag = static_cast<std::size_t>(std::max(0, max_lag));
    for (std::size_t k = 1; k <= lag && k < n; ++k) var += 2.0 * autocov(k);
    if (!(var > 0.0)) var = gamma0;
    TestResult r;
    r.statistic = mean / std::sqrt(var / static_cast<double>(n));
    r.p_value = standard_normal_two_sided_p(r.statistic);
    r.direction = (mean > 0.0) - (mean < 0.0);
    return r;
}

/// DM test of a against b (d = a - b) with lag window lead_time - 1.
inline TestResult dm_test(const ScoreSeries& a, const ScoreSeries& b, std::size_t min_length = 30) {
    validate(a);
    validate(b);
    if (!comparable(a, b))
        throw IncomparableSeriesError("score series differ in station, lead time, score kind or dates");
    if (a.size() < min_length)
        throw DegenerateSeriesError("DM test needs at least " + std::to_string(min_length) + " cases");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values[i] - b.values[i];
    return dm_test(d, a.lead_time - 1);
}

/// Step-up rule: reject the k smallest p-values for the largest k with
/// p_(k) <= k alpha / n. Returns rejected positions in ascending order.
inline std::vector<std::size_t> benjamini_hochberg(std::span<const double> p, double alpha = 0.05) {
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("p-value outside [0, 1]");
    const std::size_t n = p.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::size_t k = 0;
    for (std::size_t r = n; r >= 1; --r) {
        if (p[order[r - 1]] <= static_cast<double>(r) * alpha / static_cast<double>(n)) {
            k = r;
            break;
        }
    }
    std::vector<std::size_t> rejected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(rejected.begin(), rejected.end());
    return rejected;
}

/// One stationary-bootstrap index path of length n: blocks restart at a
/// uniform position with probability 1/mean_block_len and wrap circularly.
inline void stationary_bootstrap_indices(std::size_t n, double mean_block_len, std::mt19937_64& rng,
                                         std::vector<std::size_t>& out) {
    out.resize(n);
    std::uniform_int_distribution<std::size_t> start(0, n - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double restart = 1.0 / mean_block_len;
    out[0] = start(rng);
    for (std::size_t t = 1; t < n; ++t) out[t] = unif(rng) < restart ? start(rng) : (out[t - 1] + 1) % n;
}

/// Linear-interpolation quantile of sorted values.
inline double sorted_quantile(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BootstrapOptions {
    std::size_t n_boot = 2000;
    double mean_block_len = 25.0;
    double level = 0.95;
};

/// Percentile interval of statistic(indices) over stationary-bootstrap
/// resamples of positions 0..n-1.
template <class Statistic>
std::pair<double, double> stationary_bootstrap_interval(std::size_t n, Statistic&& statistic,
                                                        const BootstrapOptions& opt, std::mt19937_64& rng) {
    if (n < 10) throw DegenerateSeriesError("bootstrap needs a series of length >= 10");
    if (!(opt.mean_block_len >= 1.0)) throw DomainError("mean block length must be >= 1");
    if (opt.n_boot < 2) throw DomainError("need at least two bootstrap samples");
    if (!(opt.level > 0.0 && opt.level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
    std::vector<double> stats(opt.n_boot);
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < opt.n_boot; ++b) {
        stationary_bootstrap_indices(n, opt.mean_block_len, rng, idx);
        stats[b] = statistic(std::span<const std::size_t>(idx));
    }
    std::sort(stats.begin(), stats.end());
    const double tail = (1.0 - opt.level) / 2.0;
    return {sorted_quantile(stats, tail), sorted_quantile(stats, 1.0 - tail)};
}

/// Percentile interval for the mean of a series.
inline std::pair<double, double> stationary_bootstrap_ci(std::span<const double> series, std::mt19937_64& rng,
                                                         const BootstrapOptions& opt = {}) {
    for (double v : series)
        if (!std::isfinite(v)) throw DomainError("non-finite value in bootstrap series");
    auto mean_of = [&](std::span<const std::size_t> idx) {
        double s = 0.0;
        for (std::size_t i : idx) s += series[i];
        return s / static_cast<double>(idx.size());
    };
    return stationary_bootstrap_interval(series.size(), mean_of, opt, rng);
}

}  // namespace oktacal
