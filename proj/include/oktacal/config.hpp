#pragma once

// JSON configuration for experiments and the synthetic generator. Unknown
// keys are rejected so that typos do not silently fall back to defaults.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oktacal/calendar.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/gbm.hpp"
#include "oktacal/linear_models.hpp"
#include "oktacal/mlp.hpp"
#include "oktacal/significance.hpp"
#include "oktacal/synthetic.hpp"

namespace oktacal {

using Json = nlohmann::json;

enum class MethodFamily { Raw, Mlr, Polr, Mlp, Rf, Gbm };

/// One column of the experimental grid, e.g. "POLR", "GBMS" or "MLPS-P".
struct MethodSpec {
    MethodFamily family = MethodFamily::Raw;
    bool seasonal = false;
    bool precip = false;

    std::string id() const {
        static constexpr const char* names[] = {"RAW", "MLR", "POLR", "MLP", "RF", "GBM"};
        std::string s = names[static_cast<int>(family)];
        if (seasonal) s += 'S';
        if (precip) s += "-P";
        return s;
    }

    FeatureVariant variant() const {
        if (precip) return FeatureVariant::Extended8;
        return family == MethodFamily::Mlr ? FeatureVariant::Mlr6 : FeatureVariant::Full7;
    }

    friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

inline MethodSpec parse_method(std::string_view id) {
    MethodSpec m;
    std::string s(id);
    if (s.size() > 2 && s.ends_with("-P")) {
        m.precip = true;
        s.resize(s.size() - 2);
    }
    struct Entry {
        const char* name;
        MethodFamily family;
    };
    static constexpr Entry entries[] = {{"RAW", MethodFamily::Raw}, {"MLR", MethodFamily::Mlr},
                                        {"POLR", MethodFamily::Polr}, {"MLP", MethodFamily::Mlp},
                                        {"RF", MethodFamily::Rf},     {"GBM", MethodFamily::Gbm}};
    for (const auto& e : entries) {
        if (s == e.name) {
            m.family = e.family;
            return m.family == MethodFamily::Raw && m.precip ? throw ConfigError("RAW has no -P variant") : m;
        }
        if (s == std::string(e.name) + "S" && e.family != MethodFamily::Raw) {
            m.family = e.family;
            m.seasonal = true;
            return m;
        }
    }
    throw ConfigError("unknown method '" + std::string(id) + "'");
}

struct RfTuning {
    std::vector<int> depth_grid{2, 3, 4};
    std::vector<std::size_t> mtry_grid{1, 2, 3};
    std::size_t tuning_trees = 300;
    std::size_t final_trees = 1000;
};

struct GbmTuning {
    std::vector<int> depth_grid{1, 2, 3, 4};
    double learning_rate = 0.1;
    int early_stop_rounds = 25;
    int max_rounds = 1000;
};

struct ExperimentConfig {
    std::vector<MethodSpec> methods;  ///< always starts with RAW
    std::vector<int> lead_times;      ///< empty = every lead time in the data
    std::vector<std::string> stations;  ///< empty = every station
    int window_years = 5;
    std::uint64_t seed = 1;
    std::string reference = "RAW";
    std::size_t threads = 0;  ///< 0 = hardware concurrency
    FitConfig linear{};
    std::vector<std::size_t> polr_nonneg = default_polr_nonneg();
    MlpConfig mlp{};
    RfTuning rf{};
    GbmTuning gbm{};
    BootstrapOptions bootstrap{};
    std::size_t pit_bins = 20;
    bool save_models = false;

    std::vector<std::string> method_ids() const {
        std::vector<std::string> ids;
        for (const auto& m : methods) ids.push_back(m.id());
        return ids;
    }
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return item.key() == a; });
        if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
    }
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
    if (c.methods.empty() || c.methods.front().family != MethodFamily::Raw)
        throw ConfigError("method list must start with RAW");
    std::set<std::string> seen;
    for (const auto& m : c.methods)
        if (!seen.insert(m.id()).second) throw ConfigError("duplicate method '" + m.id() + "'");
    if (!seen.count(c.reference)) throw ConfigError("reference method '" + c.reference + "' is not among the methods");
    if (c.window_years < 2) throw ConfigError("window_years must be at least 2");
    for (int l : c.lead_times)
        if (l < 1 || l > 10) throw ConfigError("lead times must lie in 1..10");
    for (std::size_t j : c.polr_nonneg)
        if (j >= 3) throw ConfigError("polr.nonneg indices must refer to ens_mean (0), ctrl (1) or hres (2)");
    if (c.rf.depth_grid.empty() || c.rf.mtry_grid.empty()) throw ConfigError("RF tuning grid is empty");
    if (c.rf.tuning_trees == 0 || c.rf.final_trees == 0) throw ConfigError("RF tree counts must be positive");
    for (int d : c.rf.depth_grid)
        if (d < 0) throw ConfigError("RF depths must be non-negative");
    for (std::size_t m : c.rf.mtry_grid)
        if (m == 0) throw ConfigError("RF mtry values must be positive");
    if (c.gbm.depth_grid.empty()) throw ConfigError("GBM depth grid is empty");
    for (int d : c.gbm.depth_grid)
        if (d < 0) throw ConfigError("GBM depths must be non-negative");
    if (c.gbm.max_rounds < 1 || c.gbm.early_stop_rounds < 1) throw ConfigError("GBM round limits must be positive");
    if (!(c.gbm.learning_rate >= 0.0)) throw ConfigError("GBM learning rate must be non-negative");
    if (!(c.linear.l2 >= 0.0) || !(c.mlp.l2_factor >= 0.0)) throw ConfigError("penalties must be non-negative");
    if (!(c.mlp.val_fraction > 0.0 && c.mlp.val_fraction < 1.0)) throw ConfigError("mlp.val_fraction must lie in (0, 1)");
    if (c.mlp.max_epochs < 1 || c.mlp.batch_size == 0 || !(c.mlp.learning_rate > 0.0))
        throw ConfigError("invalid MLP optimiser settings");
    if (c.bootstrap.n_boot < 2 || !(c.bootstrap.mean_block_len >= 1.0) ||
        !(c.bootstrap.level > 0.0 && c.bootstrap.level < 1.0))
        throw ConfigError("invalid bootstrap settings");
    if (c.pit_bins == 0) throw ConfigError("pit_bins must be positive");
}

inline ExperimentConfig experiment_config_from_json(const Json& j) {
    using detail::read_opt;
    detail::check_keys(j,
                       {"methods", "lead_times", "stations", "window_years", "seed", "reference", "threads", "linear",
                        "mlp", "rf", "gbm", "bootstrap", "pit_bins", "save_models"},
                       "experiment config");
    ExperimentConfig c;
    std::vector<std::string> ids{"RAW", "MLR", "POLR", "MLP", "RF", "GBM"};
    read_opt(j, "methods", ids, "experiment config");
    c.methods.push_back({});
    for (const auto& id : ids) {
        const auto m = parse_method(id);
        if (m.family != MethodFamily::Raw) c.methods.push_back(m);
    }
    read_opt(j, "lead_times", c.lead_times, "experiment config");
    read_opt(j, "stations", c.stations, "experiment config");
    read_opt(j, "window_years", c.window_years, "experiment config");
    read_opt(j, "seed", c.seed, "experiment config");
    read_opt(j, "reference", c.reference, "experiment config");
    read_opt(j, "threads", c.threads, "experiment config");
    read_opt(j, "pit_bins", c.pit_bins, "experiment config");
    read_opt(j, "save_models", c.save_models, "experiment config");
    if (j.contains("linear")) {
        const auto& s = j.at("linear");
        detail::check_keys(s, {"l2", "polr_nonneg", "max_iterations"}, "linear");
        read_opt(s, "l2", c.linear.l2, "linear");
        read_opt(s, "polr_nonneg", c.polr_nonneg, "linear");
        read_opt(s, "max_iterations", c.linear.optimizer.max_iterations, "linear");
    }
    if (j.contains("mlp")) {
        const auto& s = j.at("mlp");
        detail::check_keys(s, {"l2_factor", "val_fraction", "patience", "max_epochs", "batch_size", "learning_rate"},
                           "mlp");
        read_opt(s, "l2_factor", c.mlp.l2_factor, "mlp");
        read_opt(s, "val_fraction", c.mlp.val_fraction, "mlp");
        read_opt(s, "patience", c.mlp.patience, "mlp");
        read_opt(s, "max_epochs", c.mlp.max_epochs, "mlp");
        read_opt(s, "batch_size", c.mlp.batch_size, "mlp");
        read_opt(s, "learning_rate", c.mlp.learning_rate, "mlp");
    }
    if (j.contains("rf")) {
        const auto& s = j.at("rf");
        detail::check_keys(s, {"depth_grid", "mtry_grid", "tuning_trees", "final_trees"}, "rf");
        read_opt(s, "depth_grid", c.rf.depth_grid, "rf");
        read_opt(s, "mtry_grid", c.rf.mtry_grid, "rf");
        read_opt(s, "tuning_trees", c.rf.tuning_trees, "rf");
        read_opt(s, "final_trees", c.rf.final_trees, "rf");
    }
    if (j.contains("gbm")) {
        const auto& s = j.at("gbm");
        detail::check_keys(s, {"depth_grid", "learning_rate", "early_stop_rounds", "max_rounds"}, "gbm");
        read_opt(s, "depth_grid", c.gbm.depth_grid, "gbm");
        read_opt(s, "learning_rate", c.gbm.learning_rate, "gbm");
        read_opt(s, "early_stop_rounds", c.gbm.early_stop_rounds, "gbm");
        read_opt(s, "max_rounds", c.gbm.max_rounds, "gbm");
    }
    if (j.contains("bootstrap")) {
        const auto& s = j.at("bootstrap");
        detail::check_keys(s, {"n_boot", "mean_block_len", "level"}, "bootstrap");
        read_opt(s, "n_boot", c.bootstrap.n_boot, "bootstrap");
        read_opt(s, "mean_block_len", c.bootstrap.mean_block_len, "bootstrap");
        read_opt(s, "level", c.bootstrap.level, "bootstrap");
    }
    validate(c);
    return c;
}

/// Canonical form with every setting that influences results spelled out;
/// used in run manifests. The thread count is left out because outputs do
/// not depend on it.
inline Json to_json(const ExperimentConfig& c) {
    return {
        {"methods", c.method_ids()},
        {"lead_times", c.lead_times},
        {"stations", c.stations},
        {"window_years", c.window_years},
        {"seed", c.seed},
        {"reference", c.reference},
        {"linear",
         {{"l2", c.linear.l2}, {"polr_nonneg", c.polr_nonneg}, {"max_iterations", c.linear.optimizer.max_iterations}}},
        {"mlp",
         {{"l2_factor", c.mlp.l2_factor},
          {"val_fraction", c.mlp.val_fraction},
          {"patience", c.mlp.patience},
          {"max_epochs", c.mlp.max_epochs},
          {"batch_size", c.mlp.batch_size},
          {"learning_rate", c.mlp.learning_rate}}},
        {"rf",
         {{"depth_grid", c.rf.depth_grid},
          {"mtry_grid", c.rf.mtry_grid},
          {"tuning_trees", c.rf.tuning_trees},
          {"final_trees", c.rf.final_trees}}},
        {"gbm",
         {{"depth_grid", c.gbm.depth_grid},
          {"learning_rate", c.gbm.learning_rate},
          {"early_stop_rounds", c.gbm.early_stop_rounds},
          {"max_rounds", c.gbm.max_rounds}}},
        {"bootstrap",
         {{"n_boot", c.bootstrap.n_boot}, {"mean_block_len", c.bootstrap.mean_block_len}, {"level", c.bootstrap.level}}},
        {"pit_bins", c.pit_bins},
        {"save_models", c.save_models},
    };
}

inline SynthConfig synth_config_from_json(const Json& j) {
    using detail::read_opt;
    detail::check_keys(j,
                       {"n_stations", "n_days", "start_date", "lead_times", "ar_coefficient", "climate_mean",
                        "station_mean_spread", "seasonal_amplitude", "climate_sd", "bias", "bias_pattern",
                        "spread_deflation", "error_sd_base", "error_sd_growth", "hres_noise_factor", "precision",
                        "with_precip", "precip_coupling", "precip_noise_factor", "seed"},
                       "synthetic config");
    SynthConfig c;
    const std::string w = "synthetic config";
    read_opt(j, "n_stations", c.n_stations, w);
    read_opt(j, "n_days", c.n_days, w);
    if (j.contains("start_date")) {
        std::string s;
        read_opt(j, "start_date", s, w);
        try {
            c.start_date = parse_iso_date(s);
        } catch (const DomainError& e) {
            throw ConfigError(std::string("start_date: ") + e.what());
        }
    }
    read_opt(j, "lead_times", c.lead_times, w);
    read_opt(j, "ar_coefficient", c.ar_coefficient, w);
    read_opt(j, "climate_mean", c.climate_mean, w);
    read_opt(j, "station_mean_spread", c.station_mean_spread, w);
    read_opt(j, "seasonal_amplitude", c.seasonal_amplitude, w);
    read_opt(j, "climate_sd", c.climate_sd, w);
    read_opt(j, "bias", c.bias, w);
    if (j.contains("bias_pattern")) {
        std::string s;
        read_opt(j, "bias_pattern", s, w);
        c.bias_pattern = parse_bias_pattern(s);
    }
    read_opt(j, "spread_deflation", c.spread_deflation, w);
    read_opt(j, "error_sd_base", c.error_sd_base, w);
    read_opt(j, "error_sd_growth", c.error_sd_growth, w);
    read_opt(j, "hres_noise_factor", c.hres_noise_factor, w);
    read_opt(j, "precision", c.precision, w);
    read_opt(j, "with_precip", c.with_precip, w);
    read_opt(j, "precip_coupling", c.precip_coupling, w);
    read_opt(j, "precip_noise_factor", c.precip_noise_factor, w);
    read_opt(j, "seed", c.seed, w);
    validate(c);
    return c;
}

inline Json to_json(const SynthConfig& c) {
    return {{"n_stations", c.n_stations},
            {"n_days", c.n_days},
            {"start_date", format_iso_date(c.start_date)},
            {"lead_times", c.lead_times},
            {"ar_coefficient", c.ar_coefficient},
            {"climate_mean", c.climate_mean},
            {"station_mean_spread", c.station_mean_spread},
            {"seasonal_amplitude", c.seasonal_amplitude},
            {"climate_sd", c.climate_sd},
            {"bias", c.bias},
            {"bias_pattern", to_string(c.bias_pattern)},
            {"spread_deflation", c.spread_deflation},
            {"error_sd_base", c.error_sd_base},
            {"error_sd_growth", c.error_sd_growth},
            {"hres_noise_factor", c.hres_noise_factor},
            {"precision", c.precision},
            {"with_precip", c.with_precip},
            {"precip_coupling", c.precip_coupling},
            {"precip_noise_factor", c.precip_noise_factor},
            {"seed", c.seed}};
}

/// Parses a JSON file, mapping I/O and syntax problems to ConfigError.
inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace oktacal
