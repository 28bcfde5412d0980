#pragma once

// Synthetic stand-in for an ECMWF-like TCC archive.
//
// Each station carries a latent cloud state u_t = mu_t + a_t, where mu_t is a
// seasonal climatology and a_t a stationary AR(1) anomaly with marginal sd
// tau. The observation is the okta of clip(u_t, 0, 1).
//
// A forecast at lead L sees u_t through a noisy signal y = u_t + s_L * nu with
// s_L = error_sd_base + error_sd_growth * (L - 1). Its conditional mean given
// the signal is c = mu_t + k (y - mu_t), k = tau^2 / (tau^2 + s_L^2), with
// conditional sd r = tau sqrt(1 - k). Members are c + b + deflation * r * xi
// with a station bias b that is either +bias everywhere or alternates in sign
// between consecutive stations (the default). Deflation = 1 with bias = 0
// gives members exchangeable with the truth; deflation < 1 gives an
// underdispersive ensemble. HRES uses a reduced noise
// factor. All TCC values are rounded to `precision` and clipped to [0, 1].
// The precipitation mean is a softplus of an independent noisy view of u_t.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "oktacal/calendar.hpp"
#include "oktacal/dataset.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

enum class BiasPattern { Constant, Alternating };

inline const char* to_string(BiasPattern p) { return p == BiasPattern::Constant ? "constant" : "alternating"; }

inline BiasPattern parse_bias_pattern(std::string_view s) {
    if (s == "constant") return BiasPattern::Constant;
    if (s == "alternating") return BiasPattern::Alternating;
    throw ConfigError("unknown bias pattern '" + std::string(s) + "'");
}

struct SynthConfig {
    std::size_t n_stations = 4;
    std::size_t n_days = 2557;
    Date start_date = make_date(2002, 1, 1);
    std::vector<int> lead_times{1, 4, 7};

    // Truth process.
    double ar_coefficient = 0.6;
    double climate_mean = 0.55;
    double station_mean_spread = 0.1;  ///< station climatologies uniform in mean +- spread
    double seasonal_amplitude = 0.12;
    double climate_sd = 0.35;

    // Ensemble corruption.
    double bias = 0.0;
    BiasPattern bias_pattern = BiasPattern::Alternating;
    double spread_deflation = 1.0;
    double error_sd_base = 0.12;
    double error_sd_growth = 0.04;
    double hres_noise_factor = 0.6;
    double precision = 1e-4;

    // Precipitation coupling.
    bool with_precip = true;
    double precip_coupling = 4.0;
    double precip_noise_factor = 1.0;

    std::uint64_t seed = 1;
};

inline void validate(const SynthConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError("synthetic config: " + m); };
    if (c.n_stations == 0) fail("n_stations must be positive");
    if (c.n_days == 0) fail("n_days must be positive");
    if (c.lead_times.empty()) fail("at least one lead time is required");
    for (int l : c.lead_times)
        if (l < 1 || l > 10) fail("lead times must lie in 1..10");
    if (!(std::abs(c.ar_coefficient) < 1.0)) fail("ar_coefficient must lie in (-1, 1)");
    if (!(c.climate_sd > 0.0)) fail("climate_sd must be positive");
    if (!(c.spread_deflation > 0.0 && c.spread_deflation <= 1.0)) fail("spread_deflation must lie in (0, 1]");
    if (!(c.error_sd_base > 0.0) || !(c.error_sd_growth >= 0.0)) fail("forecast error sd must be positive");
    if (!(c.hres_noise_factor >= 0.0)) fail("hres_noise_factor must be non-negative");
    if (!(c.precision >= 0.0)) fail("precision must be non-negative");
    if (!(c.station_mean_spread >= 0.0) || !(c.seasonal_amplitude >= 0.0)) fail("spreads must be non-negative");
    if (!std::isfinite(c.bias)) fail("bias must be finite");
}

inline double forecast_error_sd(const SynthConfig& c, int lead) {
    return c.error_sd_base + c.error_sd_growth * static_cast<double>(lead - 1);
}

/// Rounds to a multiple of `precision`. Decimal steps such as 1e-4 divide by
/// the integer 1/precision so that the result is the double nearest to the
/// short decimal and prints as such.
inline double round_to_precision(double v, double precision) {
    if (!(precision > 0.0)) return v;
    const double inv = std::round(1.0 / precision);
    if (inv >= 1.0 && std::abs(inv * precision - 1.0) < 1e-12) return std::round(v * inv) / inv;
    return std::round(v / precision) * precision;
}

inline StationDataset synth_generate(const SynthConfig& cfg) {
    validate(cfg);
    std::vector<int> leads = cfg.lead_times;
    std::sort(leads.begin(), leads.end());
    leads.erase(std::unique(leads.begin(), leads.end()), leads.end());

    auto finish = [&](double v) {
        return std::clamp(round_to_precision(v, cfg.precision), 0.0, 1.0);
    };
    auto softplus = [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); };

    StationDataset ds;
    for (std::size_t s = 0; s < cfg.n_stations; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(s), 0xc10du};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(-1.0, 1.0);

        char id[16];
        std::snprintf(id, sizeof id, "ST%03zu", s + 1);
        const double level = cfg.climate_mean + cfg.station_mean_spread * unif(rng);
        const double tau = cfg.climate_sd, phi = cfg.ar_coefficient;
        const double innov = tau * std::sqrt(1.0 - phi * phi);
        const double bias = (cfg.bias_pattern == BiasPattern::Alternating && s % 2 == 1) ? -cfg.bias : cfg.bias;

        std::vector<ForecastSeries> per_lead;
        for (int l : leads) per_lead.push_back({id, l, {}, {}});
        double anomaly = tau * normal(rng);
        for (std::size_t t = 0; t < cfg.n_days; ++t) {
            const Date date = cfg.start_date + std::chrono::days{static_cast<int>(t)};
            if (t > 0) anomaly = phi * anomaly + innov * normal(rng);
            const double phase = 2.0 * std::numbers::pi * (static_cast<double>(day_of_year(date)) - 80.0) / 365.25;
            const double clim = level + cfg.seasonal_amplitude * std::sin(phase);
            const double u = clim + anomaly;
            const OktaIndex obs = quantize_tcc(std::clamp(u, 0.0, 1.0));

            for (std::size_t li = 0; li < leads.size(); ++li) {
                const double err = forecast_error_sd(cfg, leads[li]);
                const double k = tau * tau / (tau * tau + err * err);
                const double signal = u + err * normal(rng);
                const double center = clim + k * (signal - clim) + bias;
                const double spread = cfg.spread_deflation * tau * std::sqrt(1.0 - k);

                EnsembleForecast fc;
                fc.station_id = id;
                fc.valid_date = date;
                fc.lead_time_days = leads[li];
                fc.hres = finish(center + cfg.hres_noise_factor * spread * normal(rng));
                fc.ctrl = finish(center + spread * normal(rng));
                for (double& m : fc.members) m = finish(center + spread * normal(rng));
                const double precip_view = u + cfg.precip_noise_factor * err * normal(rng);
                if (cfg.with_precip) {
                    double p = 2.0 * softplus(cfg.precip_coupling * (precip_view - 0.6));
                    p = round_to_precision(p, cfg.precision);
                    fc.precip_mean = p;
                }
                per_lead[li].forecasts.push_back(std::move(fc));
                per_lead[li].obs.push_back(obs);
            }
        }
        for (auto& p : per_lead) ds.series.push_back(std::move(p));
    }
    detail::finalize_dataset(ds);
    return ds;
}

}  // namespace oktacal
