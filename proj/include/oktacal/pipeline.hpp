#pragma once

// Rolling-window experiment runner. Every (station, lead time, method) task
// fits one model per training window, predicts the following calendar year
// and scores the predictions; tasks run on a small thread pool and their
// results are merged in task order, so the output never depends on timing.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "oktacal/calendar.hpp"
#include "oktacal/config.hpp"
#include "oktacal/dataset.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/gbm.hpp"
#include "oktacal/linear_models.hpp"
#include "oktacal/mlp.hpp"
#include "oktacal/model_record.hpp"
#include "oktacal/random_forest.hpp"
#include "oktacal/scores.hpp"
#include "oktacal/significance.hpp"
#include "oktacal/text_io.hpp"

namespace oktacal {

enum class SchemeKind { NonSeasonal, Seasonal };

struct TrainingScheme {
    SchemeKind kind = SchemeKind::NonSeasonal;
    int window_years = 5;
};

/// Row indices (into the date sequence handed to rolling_windows) of one
/// training window and the test rows it predicts.
struct WindowSplit {
    int test_year = 0;
    std::optional<Season> season;  ///< set for the seasonal scheme only
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline std::string season_label(const std::optional<Season>& s) { return s ? to_string(*s) : "all"; }

/// Splits dated rows into rolling windows of `window_years` consecutive
/// calendar years, each followed by its test year. The seasonal scheme
/// emits one split per season and test year; its training rows come from
/// the same season only. Fewer than `window_years` distinct years is an
/// error; exactly `window_years` years yields no split.
inline std::vector<WindowSplit> rolling_windows(std::span<const Date> dates, const TrainingScheme& scheme) {
    if (scheme.window_years < 1) throw ConfigError("window_years must be positive");
    std::set<int> year_set;
    for (Date d : dates) year_set.insert(year_of(d));
    if (year_set.size() < static_cast<std::size_t>(scheme.window_years))
        throw InsufficientHistoryError("need at least " + std::to_string(scheme.window_years) +
                                       " calendar years of data, found " + std::to_string(year_set.size()));
    const std::vector<int> years(year_set.begin(), year_set.end());
    const int w = scheme.window_years;

    std::vector<WindowSplit> out;
    for (std::size_t i = static_cast<std::size_t>(w); i < years.size(); ++i) {
        const int test_year = years[i];
        // A gap in the record would stretch the window; such years are skipped.
        if (years[i - static_cast<std::size_t>(w)] != test_year - w) continue;
        const int first = test_year - w;

        std::vector<std::optional<Season>> parts;
        if (scheme.kind == SchemeKind::Seasonal)
            parts = {Season::Winter, Season::Summer};
        else
            parts = {std::nullopt};

        for (const auto& part : parts) {
            WindowSplit s;
            s.test_year = test_year;
            s.season = part;
            for (std::size_t r = 0; r < dates.size(); ++r) {
                const int y = year_of(dates[r]);
                if (part && season_of(dates[r]) != *part) continue;
                if (y >= first && y < test_year)
                    s.train.push_back(r);
                else if (y == test_year)
                    s.test.push_back(r);
            }
            if (s.test.empty()) continue;

            // Construction audit: a test date must never be a training date.
            std::set<Date> train_dates;
            for (std::size_t r : s.train) train_dates.insert(dates[r]);
            for (std::size_t r : s.test)
                if (train_dates.count(dates[r]))
                    throw std::logic_error("test date " + format_iso_date(dates[r]) + " leaked into training window");
            out.push_back(std::move(s));
        }
    }
    return out;
}

/// Splits training rows into the earlier years (fit) and the last year
/// (validation) of a window.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_last_year(std::span<const int> row_years) {
    if (row_years.empty()) throw EmptyDataError("empty tuning window");
    const auto [lo, hi] = std::minmax_element(row_years.begin(), row_years.end());
    if (*lo == *hi) throw InsufficientHistoryError("tuning needs a window covering at least two years");
    std::vector<std::size_t> fit, val;
    for (std::size_t i = 0; i < row_years.size(); ++i) (row_years[i] == *hi ? val : fit).push_back(i);
    return {std::move(fit), std::move(val)};
}

/// Mean LogS of `pmfs` on `y` after flooring with `training_days`.
template <class Predict>
double floored_mean_logs(const LabeledData& data, Predict&& predict, double training_days) {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        s += log_score(floor_pmf(predict(data.x.row(i)), training_days), data.y[i]);
    return s / static_cast<double>(data.size());
}

struct RfGridCell {
    int depth = 0;
    std::size_t mtry = 0;
    double val_logs = 0.0;
};

struct RfTuneResult {
    RfParams params;  ///< winning pair, with n_trees set to the final forest size
    std::vector<RfGridCell> cells;
};

/// Grid search over (depth, mtry) using small forests fitted on all but the
/// last year of the window and scored by floored validation LogS on that
/// year. Ties go to the lexicographically smallest (depth, mtry).
inline RfTuneResult tune_rf(const LabeledData& window, std::span<const int> row_years, FeatureVariant variant,
                            const RfTuning& grid, std::uint64_t seed) {
    if (grid.depth_grid.empty() || grid.mtry_grid.empty()) throw ConfigError("empty RF tuning grid");
    if (row_years.size() != window.size()) throw DimensionMismatch("row years do not match the window");
    const auto [fit_idx, val_idx] = split_last_year(row_years);
    const LabeledData fit = window.select(fit_idx), val = window.select(val_idx);

    std::vector<int> depths = grid.depth_grid;
    std::vector<std::size_t> mtrys = grid.mtry_grid;
    std::sort(depths.begin(), depths.end());
    depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
    std::sort(mtrys.begin(), mtrys.end());
    mtrys.erase(std::unique(mtrys.begin(), mtrys.end()), mtrys.end());

    RfTuneResult result;
    double best = std::numeric_limits<double>::infinity();
    for (int depth : depths) {
        for (std::size_t mtry : mtrys) {
            RfParams p;
            p.n_trees = grid.tuning_trees;
            p.depth = depth;
            p.mtry = mtry;
            p.seed = seed;
            const RfModel model = rf_fit(fit, variant, p);
            const double score = floored_mean_logs(
                val, [&](std::span<const double> x) { return rf_predict(model, x); }, static_cast<double>(fit.size()));
            result.cells.push_back({depth, mtry, score});
            if (score < best) {
                best = score;
                result.params = p;
            }
        }
    }
    result.params.n_trees = grid.final_trees;
    return result;
}

struct GbmGridCell {
    int depth = 0;
    int rounds = 0;
    double val_logs = 0.0;
    double se_vs_best = 0.0;  ///< standard error of the paired loss difference to the best cell
};

struct GbmTuneResult {
    GbmParams params;
    int rounds = 0;  ///< early-stopped number of boosting rounds M
    std::vector<GbmGridCell> cells;
};

/// Early-stopped boosting for each candidate depth on all but the last year
/// of the window, validated on the last year. The chosen depth is the
/// shallowest one whose validation LogS lies within one standard error of
/// the best depth's, the error taken over paired per-case loss differences.
/// Each depth's M is picked on the same validation year, which biases the
/// minimum towards deeper, noisier trees; the tolerance removes that bias.
inline GbmTuneResult tune_gbm(const LabeledData& window, std::span<const int> row_years, FeatureVariant variant,
                              const GbmTuning& grid) {
    if (grid.depth_grid.empty()) throw ConfigError("empty GBM depth grid");
    if (row_years.size() != window.size()) throw DimensionMismatch("row years do not match the window");
    const auto [fit_idx, val_idx] = split_last_year(row_years);
    const LabeledData fit = window.select(fit_idx), val = window.select(val_idx);

    std::vector<int> depths = grid.depth_grid;
    std::sort(depths.begin(), depths.end());
    depths.erase(std::unique(depths.begin(), depths.end()), depths.end());

    GbmTuneResult result;
    std::vector<GbmParams> params;
    std::vector<std::vector<double>> losses;
    std::size_t best = 0;
    for (int depth : depths) {
        GbmParams p;
        p.depth = depth;
        p.learning_rate = grid.learning_rate;
        p.early_stop_rounds = grid.early_stop_rounds;
        p.max_rounds = grid.max_rounds;
        GbmFitReport report;
        const GbmModel model = gbm_fit(fit, val, variant, p, &report);
        std::vector<double> loss(val.size());
        for (std::size_t i = 0; i < val.size(); ++i) loss[i] = -std::log(gbm_predict(model, val.x.row(i))[val.y[i]]);
        const double mean = report.val_logs.at(static_cast<std::size_t>(report.best_round - 1));
        result.cells.push_back({depth, report.best_round, mean, 0.0});
        params.push_back(p);
        losses.push_back(std::move(loss));
        if (mean < result.cells[best].val_logs) best = result.cells.size() - 1;
    }

    const std::size_t n = val.size();
    std::size_t chosen = best;
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = losses[c][i] - losses[best][i];
            sum += d;
            sum_sq += d * d;
        }
        const double mean = sum / static_cast<double>(n);
        const double var = n > 1 ? std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(n - 1)) : 0.0;
        result.cells[c].se_vs_best = std::sqrt(var / static_cast<double>(n));
    }
    for (std::size_t c = 0; c < best; ++c) {
        if (result.cells[c].val_logs - result.cells[best].val_logs <= result.cells[c].se_vs_best) {
            chosen = c;
            break;
        }
    }
    result.params = params[chosen];
    result.rounds = result.cells[chosen].rounds;
    return result;
}

/// One scored test case.
struct CaseRecord {
    std::string station_id;
    int lead_time = 0;
    std::string method;
    Date date{};
    OktaIndex obs = 0;
    std::array<double, kNumOktas> pmf{};  ///< unfloored predictive PMF
    double crps = 0.0;                    ///< on the unfloored PMF
    double logs = 0.0;                    ///< on the floored PMF
    double pit = 0.0;
    int test_year = 0;
    std::size_t n_train = 0;  ///< training days of the fit, also the flooring T
};

/// What was fitted for one window, for auditing tuning behaviour.
struct ProvenanceRecord {
    std::string station_id;
    int lead_time = 0;
    std::string method;
    int test_year = 0;
    std::string season;
    std::size_t n_train = 0;
    std::string details;  ///< semicolon-separated key=value pairs
};

struct FailureRecord {
    std::string station_id;
    int lead_time = 0;
    std::string method;
    int test_year = 0;  ///< 0 when the whole task failed
    std::string message;
};

struct ExperimentResult {
    std::vector<std::string> methods;
    std::vector<CaseRecord> cases;  ///< ordered by station, lead, method (config order), date
    std::vector<ProvenanceRecord> provenance;
    std::vector<FailureRecord> failures;

    /// Methods that produced at least one scored case.
    std::vector<std::string> completed_methods() const {
        std::vector<std::string> out;
        for (const auto& m : methods)
            if (std::any_of(cases.begin(), cases.end(), [&](const CaseRecord& c) { return c.method == m; }))
                out.push_back(m);
        return out;
    }
};

/// Identifies a fitted model handed to a ModelSink.
struct ModelKey {
    std::string station_id;
    int lead_time = 0;
    std::string method;
    int test_year = 0;
    std::string season;
};

using ModelSink = std::function<void(const ModelKey&, const ClassifierModel&)>;

struct RunOptions {
    ModelSink model_sink;  ///< called from worker threads; may be empty
    std::function<void(std::size_t done, std::size_t total)> progress;  ///< serialized; may be empty
};

/// Derives a reproducible 64-bit seed from the experiment seed and a label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = fnv1a64(label, 0xcbf29ce484222325ull ^ (seed * 0x9e3779b97f4a7c15ull));
    // splitmix64 finalizer to spread the hash bits
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

namespace detail {

struct TaskOutput {
    std::vector<CaseRecord> cases;
    std::vector<ProvenanceRecord> provenance;
    std::vector<FailureRecord> failures;
};

inline LabeledData series_features(const ForecastSeries& series, FeatureVariant variant) {
    LabeledData d{FeatureMatrix(series.size(), feature_dimension(variant)), series.obs};
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto f = extract_features(series.forecasts[i], variant);
        const auto v = f.values();
        std::copy(v.begin(), v.end(), d.x.row(i).begin());
    }
    return d;
}

inline std::string join_indices(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s.empty() ? "none" : s;
}

struct FitOutcome {
    ClassifierModel model;
    std::string details;
};

inline FitOutcome fit_family(const MethodSpec& method, const LabeledData& train, std::span<const int> row_years,
                             const ExperimentConfig& cfg, const std::optional<RfParams>& rf_params,
                             std::uint64_t seed) {
    const FeatureVariant variant = method.variant();
    switch (method.family) {
        case MethodFamily::Mlr: {
            FitReport rep;
            auto m = mlr_fit(train, variant, cfg.linear, &rep);
            return {std::move(m), "iterations=" + std::to_string(rep.optimizer.iterations)};
        }
        case MethodFamily::Polr: {
            FitReport rep;
            auto m = polr_fit(train, variant, cfg.linear, cfg.polr_nonneg, &rep);
            std::string d = "excluded=" + join_indices(m.excluded) + ";refits=" + std::to_string(rep.refits);
            return {std::move(m), d};
        }
        case MethodFamily::Mlp: {
            MlpConfig mc = cfg.mlp;
            mc.seed = seed;
            MlpTrainReport rep;
            auto m = mlp_train(train, variant, mc, &rep);
            return {std::move(m),
                    "epochs=" + std::to_string(rep.epochs_run) + ";best_epoch=" + std::to_string(rep.best_epoch)};
        }
        case MethodFamily::Rf: {
            RfParams p = rf_params.value();
            p.seed = seed;
            auto m = rf_fit(train, variant, p);
            return {std::move(m), "depth=" + std::to_string(p.depth) + ";mtry=" + std::to_string(p.mtry) +
                                      ";trees=" + std::to_string(p.n_trees)};
        }
        case MethodFamily::Gbm: {
            const GbmTuneResult t = tune_gbm(train, row_years, variant, cfg.gbm);
            auto m = gbm_fit_rounds(train, variant, t.params, t.rounds);
            return {std::move(m), "depth=" + std::to_string(t.params.depth) + ";rounds=" + std::to_string(t.rounds)};
        }
        case MethodFamily::Raw:
            break;
    }
    throw std::logic_error("fit_family called for the raw ensemble");
}

inline TaskOutput run_task(const ForecastSeries& series, const MethodSpec& method, const ExperimentConfig& cfg,
                           const RunOptions& opts) {
    TaskOutput out;
    const std::string mid = method.id();
    auto fail = [&](int year, const std::string& msg) {
        out.failures.push_back({series.station_id, series.lead_time, mid, year, msg});
    };
    const std::uint64_t task_seed =
        derive_seed(cfg.seed, series.station_id + "|" + std::to_string(series.lead_time) + "|" + mid);

    if (method.precip && !series.has_precip()) {
        fail(0, "precipitation covariate not available");
        return out;
    }
    const std::vector<Date> dates = series.dates();
    std::vector<WindowSplit> splits;
    try {
        splits = rolling_windows(dates, {method.seasonal ? SchemeKind::Seasonal : SchemeKind::NonSeasonal,
                                         cfg.window_years});
    } catch (const Error& e) {
        fail(0, e.what());
        return out;
    }

    const bool raw = method.family == MethodFamily::Raw;
    LabeledData all;
    if (!raw) all = series_features(series, method.variant());
    std::vector<int> all_years(dates.size());
    for (std::size_t i = 0; i < dates.size(); ++i) all_years[i] = year_of(dates[i]);

    // Random forests are tuned once per season on the first window and the
    // chosen pair reused for every later window.
    std::map<std::string, RfParams> rf_tuned;
    std::map<std::string, std::string> rf_failed;

    for (const auto& split : splits) {
        const std::string season = season_label(split.season);
        const std::uint64_t window_seed = derive_seed(task_seed, std::to_string(split.test_year) + "|" + season);
        const double T = static_cast<double>(split.train.size());
        try {
            if (split.train.empty()) throw EmptyDataError("empty training window");
            std::optional<ClassifierModel> model;
            std::string details = "raw ensemble";
            if (!raw) {
                const LabeledData train = all.select(split.train);
                std::vector<int> row_years;
                row_years.reserve(split.train.size());
                for (std::size_t r : split.train) row_years.push_back(all_years[r]);

                std::optional<RfParams> rf_params;
                if (method.family == MethodFamily::Rf) {
                    if (rf_failed.count(season)) throw Error("RF tuning failed: " + rf_failed[season]);
                    if (!rf_tuned.count(season)) {
                        try {
                            const auto t = tune_rf(train, row_years, method.variant(), cfg.rf,
                                                   derive_seed(task_seed, "rf-tuning|" + season));
                            rf_tuned[season] = t.params;
                        } catch (const Error& e) {
                            rf_failed[season] = e.what();
                            throw;
                        }
                    }
                    rf_params = rf_tuned[season];
                }
                auto fitted = fit_family(method, train, row_years, cfg, rf_params, window_seed);
                details = std::move(fitted.details);
                model = std::move(fitted.model);
            }

            std::vector<CaseRecord> cases;
            cases.reserve(split.test.size());
            for (std::size_t r : split.test) {
                CaseRecord c;
                c.station_id = series.station_id;
                c.lead_time = series.lead_time;
                c.method = mid;
                c.date = dates[r];
                c.obs = series.obs[r];
                const Pmf pmf = raw ? raw_ensemble_pmf(series.forecasts[r]) : predict(*model, all.x.row(r));
                c.pmf = pmf.probs();
                c.crps = crps_discrete(pmf, c.obs);
                c.logs = log_score(floor_pmf(pmf, T), c.obs);
                c.test_year = split.test_year;
                c.n_train = split.train.size();
                cases.push_back(c);
            }
            out.cases.insert(out.cases.end(), cases.begin(), cases.end());
            out.provenance.push_back(
                {series.station_id, series.lead_time, mid, split.test_year, season, split.train.size(), details});
            if (model && opts.model_sink)
                opts.model_sink({series.station_id, series.lead_time, mid, split.test_year, season}, *model);
        } catch (const std::exception& e) {
            fail(split.test_year, e.what());
        }
    }

    // PIT draws consume one stream in date order, so they do not depend on
    // how the windows were split.
    std::sort(out.cases.begin(), out.cases.end(),
              [](const CaseRecord& a, const CaseRecord& b) { return a.date < b.date; });
    std::mt19937_64 pit_rng(derive_seed(task_seed, "pit"));
    for (auto& c : out.cases) c.pit = pit_value(Pmf(c.pmf), c.obs, pit_rng);
    return out;
}

}  // namespace detail

/// Runs every (station, lead time, method) task of the configuration on the
/// dataset. Failures are recorded per window or per task and never abort
/// the run.
inline ExperimentResult run_experiment(const StationDataset& data, const ExperimentConfig& cfg,
                                       const RunOptions& opts = {}) {
    validate(cfg);
    std::vector<std::string> stations = cfg.stations.empty() ? data.station_ids() : cfg.stations;
    std::vector<int> leads = cfg.lead_times.empty() ? data.lead_times() : cfg.lead_times;

    ExperimentResult result;
    result.methods = cfg.method_ids();

    struct Task {
        const ForecastSeries* series;
        std::string station;
        int lead;
        const MethodSpec* method;
    };
    std::vector<Task> tasks;
    for (const auto& s : stations)
        for (int l : leads)
            for (const auto& m : cfg.methods) tasks.push_back({data.find(s, l), s, l, &m});

    std::vector<detail::TaskOutput> outputs(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    std::size_t done = 0;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& t = tasks[i];
            if (!t.series) {
                outputs[i].failures.push_back({t.station, t.lead, t.method->id(), 0, "no data for station and lead time"});
            } else {
                try {
                    outputs[i] = detail::run_task(*t.series, *t.method, cfg, opts);
                } catch (const std::exception& e) {
                    outputs[i] = {};
                    outputs[i].failures.push_back({t.station, t.lead, t.method->id(), 0, e.what()});
                }
            }
            if (opts.progress) {
                std::lock_guard lock(progress_mutex);
                opts.progress(++done, tasks.size());
            }
        }
    };

    std::size_t n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min(n_threads, std::max<std::size_t>(tasks.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (auto& o : outputs) {
        std::move(o.cases.begin(), o.cases.end(), std::back_inserter(result.cases));
        std::move(o.provenance.begin(), o.provenance.end(), std::back_inserter(result.provenance));
        std::move(o.failures.begin(), o.failures.end(), std::back_inserter(result.failures));
    }
    return result;
}

/// Score series of one (station, lead time, method) in date order.
inline ScoreSeries score_series(const std::vector<CaseRecord>& cases, const std::string& station, int lead,
                                const std::string& method, ScoreKind kind) {
    ScoreSeries s;
    s.station_id = station;
    s.lead_time = lead;
    s.method_id = method;
    s.kind = kind;
    for (const auto& c : cases) {
        if (c.station_id != station || c.lead_time != lead || c.method != method) continue;
        s.dates.push_back(c.date);
        s.values.push_back(kind == ScoreKind::Crps ? c.crps : c.logs);
    }
    return s;
}

}  // namespace oktacal
