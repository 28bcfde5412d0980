#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oktacal/config.hpp"
#include "oktacal/pipeline.hpp"
#include "oktacal/reports.hpp"
#include "oktacal/synthetic.hpp"

using namespace oktacal;

namespace {

std::vector<Date> daily(Date from, Date to) {
    std::vector<Date> d;
    for (Date x = from; x <= to; x += std::chrono::days{1}) d.push_back(x);
    return d;
}

const StationDataset& small_dataset() {
    static const StationDataset ds = [] {
        SynthConfig c;
        c.n_stations = 2;
        c.n_days = 2557;  // 2002-01-01 .. 2008-12-31
        c.lead_times = {1, 7};
        c.spread_deflation = 0.5;
        c.bias = 0.1;
        c.seed = 11;
        return synth_generate(c);
    }();
    return ds;
}

ExperimentConfig fast_config(std::vector<std::string> methods) {
    Json j{{"methods", methods}, {"seed", 5}, {"threads", 1}};
    j["rf"] = {{"tuning_trees", 20}, {"final_trees", 40}};
    j["mlp"] = {{"max_epochs", 40}};
    return experiment_config_from_json(j);
}

std::string serialize(const ExperimentResult& r) {
    std::ostringstream os;
    write_scores(r.cases, os);
    write_pmfs(r.cases, os);
    write_provenance(r.provenance, os);
    write_failures(r.failures, os);
    return os.str();
}

double mean_crps(const ExperimentResult& r, const std::string& method, int lead) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : r.cases)
        if (c.method == method && c.lead_time == lead) {
            s += c.crps;
            ++n;
        }
    return s / static_cast<double>(n);
}

LabeledData labeled(const std::vector<std::vector<double>>& rows, const std::vector<OktaIndex>& y) {
    LabeledData d{FeatureMatrix(rows.size(), rows.front().size()), y};
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) d.x(i, j) = rows[i][j];
    return d;
}

}  // namespace

TEST(RollingWindows, TwoSplitsForSevenYears) {
    const auto dates = daily(make_date(2002, 1, 1), make_date(2008, 12, 31));
    const auto splits = rolling_windows(dates, {SchemeKind::NonSeasonal, 5});
    ASSERT_EQ(splits.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
        const int test_year = 2007 + static_cast<int>(k);
        EXPECT_EQ(splits[k].test_year, test_year);
        EXPECT_EQ(dates[splits[k].train.front()], make_date(test_year - 5, 1, 1));
        EXPECT_EQ(dates[splits[k].train.back()], make_date(test_year - 1, 12, 31));
        EXPECT_EQ(dates[splits[k].test.front()], make_date(test_year, 1, 1));
        EXPECT_EQ(dates[splits[k].test.back()], make_date(test_year, 12, 31));
        EXPECT_EQ(splits[k].train.size(), 1826u);  // 2004 is a leap year inside both windows
    }
}

TEST(RollingWindows, HistoryBoundaries) {
    const auto five = daily(make_date(2002, 1, 1), make_date(2006, 12, 31));
    EXPECT_TRUE(rolling_windows(five, {SchemeKind::NonSeasonal, 5}).empty());
    EXPECT_TRUE(rolling_windows(five, {SchemeKind::Seasonal, 5}).empty());
    const auto four = daily(make_date(2002, 1, 1), make_date(2005, 12, 31));
    EXPECT_THROW(rolling_windows(four, {SchemeKind::NonSeasonal, 5}), InsufficientHistoryError);
    EXPECT_THROW(rolling_windows(std::vector<Date>{}, {SchemeKind::NonSeasonal, 5}), InsufficientHistoryError);
}

TEST(RollingWindows, SeasonalFilterMatchesEnumeration) {
    const auto dates = daily(make_date(2002, 1, 1), make_date(2008, 12, 31));
    const auto splits = rolling_windows(dates, {SchemeKind::Seasonal, 5});
    const Date probe = make_date(2007, 7, 15);
    const auto it = std::find_if(splits.begin(), splits.end(), [&](const WindowSplit& s) {
        return std::any_of(s.test.begin(), s.test.end(), [&](std::size_t r) { return dates[r] == probe; });
    });
    ASSERT_NE(it, splits.end());
    std::set<Date> expected;
    for (Date d : dates) {
        const auto ymd = std::chrono::year_month_day{d};
        const unsigned m = static_cast<unsigned>(ymd.month());
        const int y = static_cast<int>(ymd.year());
        if (y >= 2002 && y <= 2006 && m >= 4 && m <= 9) expected.insert(d);
    }
    std::set<Date> got;
    for (std::size_t r : it->train) got.insert(dates[r]);
    EXPECT_EQ(got, expected);
    EXPECT_EQ(got.size(), 5u * 183u);
}

TEST(RollingWindows, AuditOnIrregularRecords) {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Date> dates;
        for (Date d = make_date(2000, 1, 1); d <= make_date(2010, 6, 30); d += std::chrono::days{1})
            if (std::bernoulli_distribution(0.7)(rng)) dates.push_back(d);
        const auto a = rolling_windows(dates, {SchemeKind::NonSeasonal, 4});
        const auto b = rolling_windows(dates, {SchemeKind::Seasonal, 4});
        std::set<Date> test_a, test_b;
        for (const auto& s : a) {
            std::set<Date> train;
            for (std::size_t r : s.train) train.insert(dates[r]);
            for (std::size_t r : s.test) {
                EXPECT_FALSE(train.count(dates[r]));
                test_a.insert(dates[r]);
            }
        }
        for (const auto& s : b) {
            for (std::size_t r : s.train) EXPECT_EQ(season_of(dates[r]), *s.season);
            for (std::size_t r : s.test) {
                EXPECT_EQ(season_of(dates[r]), *s.season);
                test_b.insert(dates[r]);
            }
        }
        EXPECT_EQ(test_a, test_b);
        EXPECT_FALSE(test_a.empty());
    }
}

namespace {

struct TuningData {
    LabeledData data;
    std::vector<int> years;
};

/// Three years of 7-feature rows; only feature 0 carries information.
TuningData feature_one_informative(std::uint64_t seed, std::size_t per_year) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    std::vector<std::vector<double>> rows;
    std::vector<OktaIndex> y;
    TuningData t;
    for (int year = 0; year < 3; ++year) {
        for (std::size_t i = 0; i < per_year; ++i) {
            std::vector<double> x(7);
            for (double& v : x) v = n01(rng);
            const double latent = 1.6 * x[0] + 0.6 * n01(rng);
            y.push_back(static_cast<OktaIndex>(std::clamp(std::lround(latent + 4.0), 0l, 8l)));
            rows.push_back(x);
            t.years.push_back(2000 + year);
        }
    }
    t.data = labeled(rows, y);
    return t;
}

}  // namespace

TEST(TuneRf, SingleCellReturnedUnchanged) {
    const auto t = feature_one_informative(1, 120);
    RfTuning grid;
    grid.depth_grid = {3};
    grid.mtry_grid = {2};
    grid.tuning_trees = 15;
    grid.final_trees = 77;
    const auto r = tune_rf(t.data, t.years, FeatureVariant::Full7, grid, 9);
    EXPECT_EQ(r.params.depth, 3);
    EXPECT_EQ(r.params.mtry, 2u);
    EXPECT_EQ(r.params.n_trees, 77u);
    ASSERT_EQ(r.cells.size(), 1u);
}

TEST(TuneRf, WinnerHasLowestValidationScoreOnRecomputation) {
    const auto t = feature_one_informative(2, 200);
    RfTuning grid;
    grid.tuning_trees = 40;
    const auto r = tune_rf(t.data, t.years, FeatureVariant::Full7, grid, 4);
    ASSERT_EQ(r.cells.size(), 9u);

    const auto [fit_idx, val_idx] = split_last_year(t.years);
    const LabeledData fit = t.data.select(fit_idx), val = t.data.select(val_idx);
    double best = 1e300;
    for (const auto& cell : r.cells) {
        RfParams p;
        p.n_trees = 40;
        p.depth = cell.depth;
        p.mtry = cell.mtry;
        p.seed = 4;
        const auto model = rf_fit(fit, FeatureVariant::Full7, p);
        double s = 0.0;
        for (std::size_t i = 0; i < val.size(); ++i)
            s += -std::log(floor_pmf(rf_predict(model, val.x.row(i)), static_cast<double>(fit.size()))[val.y[i]]);
        s /= static_cast<double>(val.size());
        EXPECT_NEAR(s, cell.val_logs, 1e-12);
        best = std::min(best, s);
    }
    const auto winner = std::find_if(r.cells.begin(), r.cells.end(), [&](const RfGridCell& c) {
        return c.depth == r.params.depth && c.mtry == r.params.mtry;
    });
    ASSERT_NE(winner, r.cells.end());
    EXPECT_EQ(winner->val_logs, best);
    // With a single informative covariate among seven, deeper trees that see
    // more candidates per split win.
    EXPECT_GE(r.params.mtry, 2u);
}

TEST(TuneRf, TiesGoToSmallestPair) {
    // Depth-0 forests ignore the covariates, so every mtry scores the same.
    const auto t = feature_one_informative(3, 60);
    RfTuning grid;
    grid.depth_grid = {0};
    grid.mtry_grid = {3, 1, 2};
    grid.tuning_trees = 10;
    const auto r = tune_rf(t.data, t.years, FeatureVariant::Full7, grid, 1);
    ASSERT_EQ(r.cells.size(), 3u);
    EXPECT_EQ(r.cells[0].val_logs, r.cells[1].val_logs);
    EXPECT_EQ(r.cells[1].val_logs, r.cells[2].val_logs);
    EXPECT_EQ(r.params.mtry, 1u);
}

TEST(TuneRf, Errors) {
    const auto t = feature_one_informative(4, 30);
    RfTuning grid;
    grid.depth_grid.clear();
    EXPECT_THROW(tune_rf(t.data, t.years, FeatureVariant::Full7, grid, 1), ConfigError);
    const std::vector<int> one_year(t.data.size(), 2001);
    EXPECT_THROW(tune_rf(t.data, one_year, FeatureVariant::Full7, RfTuning{}, 1), InsufficientHistoryError);
}

TEST(TuneGbm, SingleDepthMatchesDirectEarlyStopping) {
    const auto t = feature_one_informative(5, 150);
    GbmTuning grid;
    grid.depth_grid = {2};
    const auto r = tune_gbm(t.data, t.years, FeatureVariant::Full7, grid);
    const auto [fit_idx, val_idx] = split_last_year(t.years);
    GbmParams p;
    p.depth = 2;
    GbmFitReport rep;
    gbm_fit(t.data.select(fit_idx), t.data.select(val_idx), FeatureVariant::Full7, p, &rep);
    EXPECT_EQ(r.params.depth, 2);
    EXPECT_EQ(r.rounds, rep.best_round);
}

TEST(TuneGbm, NoiseLabelsSelectDepthOne) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    std::uniform_int_distribution<int> label(0, 8);
    std::vector<std::vector<double>> rows;
    std::vector<OktaIndex> y;
    std::vector<int> years;
    for (int i = 0; i < 1500; ++i) {
        std::vector<double> x(7);
        for (double& v : x) v = n01(rng);
        rows.push_back(x);
        y.push_back(static_cast<OktaIndex>(label(rng)));
        years.push_back(2000 + i / 300);
    }
    const auto r = tune_gbm(labeled(rows, y), years, FeatureVariant::Full7, GbmTuning{});
    ASSERT_EQ(r.cells.size(), 4u);
    EXPECT_EQ(r.params.depth, 1);
    const auto best = std::min_element(r.cells.begin(), r.cells.end(),
                                       [](const GbmGridCell& a, const GbmGridCell& b) { return a.val_logs < b.val_logs; });
    EXPECT_LE(r.cells.front().val_logs - best->val_logs, r.cells.front().se_vs_best);
}

TEST(TuneGbm, ChoosesShallowestDepthWithinOneStandardError) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto t = feature_one_informative(seed, 200);
        const auto r = tune_gbm(t.data, t.years, FeatureVariant::Full7, GbmTuning{});
        double best = 1e300;
        for (const auto& c : r.cells) best = std::min(best, c.val_logs);
        std::size_t expected = r.cells.size();
        for (std::size_t c = 0; c < r.cells.size() && expected == r.cells.size(); ++c)
            if (r.cells[c].val_logs - best <= r.cells[c].se_vs_best) expected = c;
        ASSERT_LT(expected, r.cells.size());
        EXPECT_EQ(r.params.depth, r.cells[expected].depth);
        EXPECT_EQ(r.rounds, r.cells[expected].rounds);
    }
}

TEST(TuneGbm, InteractionNeedsDepthTwo) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> rows;
    std::vector<OktaIndex> y;
    std::vector<int> years;
    for (int i = 0; i < 1500; ++i) {
        std::vector<double> x(7);
        for (double& v : x) v = u(rng);
        const bool same_sign = (x[0] > 0.0) == (x[1] > 0.0);
        y.push_back(same_sign ? 7 : 1);
        rows.push_back(x);
        years.push_back(2000 + i / 300);
    }
    const auto r = tune_gbm(labeled(rows, y), years, FeatureVariant::Full7, GbmTuning{});
    EXPECT_GE(r.params.depth, 2);
}

TEST(Config, MethodIds) {
    for (const char* id : {"MLR", "POLRS", "MLP-P", "RFS-P", "GBM", "RAW"}) EXPECT_EQ(parse_method(id).id(), id);
    EXPECT_TRUE(parse_method("GBMS").seasonal);
    EXPECT_EQ(parse_method("MLR").variant(), FeatureVariant::Mlr6);
    EXPECT_EQ(parse_method("MLRS-P").variant(), FeatureVariant::Extended8);
    EXPECT_EQ(parse_method("POLR").variant(), FeatureVariant::Full7);
    for (const char* bad : {"XGB", "RAWS", "RAW-P", "mlr", "RF-PS", ""}) EXPECT_THROW(parse_method(bad), ConfigError);
}

TEST(Config, ValidationAndRoundTrip) {
    EXPECT_THROW(experiment_config_from_json(Json{{"methodz", {"MLR"}}}), ConfigError);
    EXPECT_THROW(experiment_config_from_json(Json{{"methods", {"MLR"}}, {"reference", "POLR"}}), ConfigError);
    EXPECT_THROW(experiment_config_from_json(Json{{"methods", {"MLR", "MLR"}}}), ConfigError);
    EXPECT_THROW(experiment_config_from_json(Json{{"window_years", "five"}}), ConfigError);
    EXPECT_THROW(experiment_config_from_json(Json{{"rf", {{"depth_grid", Json::array()}}}}), ConfigError);
    EXPECT_THROW(experiment_config_from_json(Json{{"linear", {{"polr_nonneg", {5}}}}}), ConfigError);

    const auto c = experiment_config_from_json(Json{{"methods", {"POLR", "GBMS"}}, {"reference", "POLR"}});
    EXPECT_EQ(c.method_ids(), (std::vector<std::string>{"RAW", "POLR", "GBMS"}));
    const Json canon = to_json(c);
    EXPECT_EQ(to_json(experiment_config_from_json(canon)), canon);

    SynthConfig s;
    s.bias_pattern = BiasPattern::Constant;
    s.start_date = make_date(2010, 3, 4);
    EXPECT_EQ(to_json(synth_config_from_json(to_json(s))), to_json(s));
    EXPECT_THROW(synth_config_from_json(Json{{"spread_deflation", 1.5}}), ConfigError);
    EXPECT_THROW(synth_config_from_json(Json{{"start_date", "2010-13-01"}}), ConfigError);
}

TEST(RunExperiment, RawOnlyEqualsDirectScoring) {
    const auto& ds = small_dataset();
    const auto r = run_experiment(ds, fast_config({"RAW"}));
    EXPECT_TRUE(r.failures.empty());
    std::size_t checked = 0;
    for (const auto& series : ds.series) {
        const auto dates = series.dates();
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (year_of(dates[i]) < 2007) continue;
            const auto it = std::find_if(r.cases.begin(), r.cases.end(), [&](const CaseRecord& c) {
                return c.station_id == series.station_id && c.lead_time == series.lead_time && c.date == dates[i];
            });
            ASSERT_NE(it, r.cases.end());
            const Pmf raw = raw_ensemble_pmf(series.forecasts[i]);
            EXPECT_EQ(it->pmf, raw.probs());
            EXPECT_EQ(it->crps, crps_discrete(raw, series.obs[i]));
            EXPECT_EQ(it->logs, log_score(floor_pmf(raw, 1826.0), series.obs[i]));
            ++checked;
        }
    }
    EXPECT_EQ(checked, r.cases.size());
    EXPECT_EQ(checked, 2u * 2u * 731u);
}

TEST(RunExperiment, ReproducibleAcrossThreadCounts) {
    const auto& ds = small_dataset();
    auto cfg = fast_config({"RAW", "POLR", "MLP", "RF"});
    const auto a = run_experiment(ds, cfg);
    cfg.threads = 3;
    const auto b = run_experiment(ds, cfg);
    EXPECT_EQ(serialize(a), serialize(b));
    EXPECT_TRUE(a.failures.empty());
}

TEST(RunExperiment, PolrBeatsUnderdispersedRawAtEveryLead) {
    const auto& ds = small_dataset();
    const auto r = run_experiment(ds, fast_config({"RAW", "POLR", "POLRS"}));
    for (int lead : {1, 7}) {
        EXPECT_LT(mean_crps(r, "POLR", lead), mean_crps(r, "RAW", lead));
        EXPECT_LT(mean_crps(r, "POLRS", lead), mean_crps(r, "RAW", lead));
    }
}

TEST(RunExperiment, ScoresUseUnflooredAndFlooredPmfs) {
    const auto& ds = small_dataset();
    const auto r = run_experiment(ds, fast_config({"RAW", "GBMS"}));
    ASSERT_FALSE(r.cases.empty());
    for (const auto& c : r.cases) {
        const Pmf pmf(c.pmf);
        const Pmf floored = floor_pmf(pmf, static_cast<double>(c.n_train));
        EXPECT_EQ(c.crps, crps_discrete(pmf, c.obs));
        EXPECT_EQ(c.logs, log_score(floored, c.obs));
        // Raised entries gain at most p_min each and the others give up the
        // same total, so no entry moves by more than 8 p_min and the L1
        // change is twice the mass moved.
        const double p_min = min_probability(static_cast<double>(c.n_train));
        double l1 = 0.0, raised = 0.0;
        for (std::size_t k = 0; k < kNumOktas; ++k) {
            EXPECT_LE(std::abs(pmf[k] - floored[k]), 9.0 * p_min);
            l1 += std::abs(pmf[k] - floored[k]);
            raised += std::max(0.0, floored[k] - pmf[k]);
        }
        EXPECT_NEAR(l1, 2.0 * raised, 1e-15);
        EXPECT_LE(raised, 8.0 * p_min);
        EXPECT_GE(c.pit, 0.0);
        EXPECT_LE(c.pit, 1.0);
    }
    // Seasonal fits train on roughly half of the window.
    for (const auto& c : r.cases) {
        if (c.method == "GBMS") {
            EXPECT_LT(c.n_train, 1000u);
        }
    }
}

TEST(RunExperiment, ProvenanceShowsTuningPolicy) {
    const auto& ds = small_dataset();
    const auto r = run_experiment(ds, fast_config({"RAW", "RF", "GBM"}));
    std::map<std::pair<std::string, int>, std::set<std::string>> rf_params;
    std::map<std::pair<std::string, int>, std::set<int>> gbm_years;
    for (const auto& p : r.provenance) {
        if (p.method == "RF") rf_params[{p.station_id, p.lead_time}].insert(p.details);
        if (p.method == "GBM") {
            gbm_years[{p.station_id, p.lead_time}].insert(p.test_year);
            EXPECT_NE(p.details.find("depth="), std::string::npos);
            EXPECT_NE(p.details.find("rounds="), std::string::npos);
        }
    }
    ASSERT_EQ(rf_params.size(), 4u);
    for (const auto& [key, details] : rf_params) EXPECT_EQ(details.size(), 1u);
    for (const auto& [key, years] : gbm_years) EXPECT_EQ(years, (std::set<int>{2007, 2008}));
}

TEST(RunExperiment, FailuresAreRecordedNotFatal) {
    SynthConfig c;
    c.n_stations = 1;
    c.n_days = 2557;
    c.lead_times = {2};
    c.with_precip = false;
    const auto ds = synth_generate(c);
    auto cfg = fast_config({"RAW", "POLR-P", "MLR"});
    cfg.stations = {ds.station_ids().front(), "NOPE"};
    const auto r = run_experiment(ds, cfg);
    EXPECT_EQ(r.completed_methods(), (std::vector<std::string>{"RAW", "MLR"}));
    ASSERT_EQ(r.failures.size(), 4u);  // POLR-P at the real station, three methods at the missing one
    EXPECT_EQ(r.failures.front().method, "POLR-P");
    EXPECT_NE(r.failures.front().message.find("precipitation"), std::string::npos);
}

TEST(Reports, ScoresRoundTripExactly) {
    const auto& ds = small_dataset();
    const auto r = run_experiment(ds, fast_config({"RAW", "POLR"}));
    std::ostringstream a;
    write_scores(r.cases, a);
    std::istringstream in(a.str());
    const auto back = read_scores(in);
    std::ostringstream b;
    write_scores(back, b);
    EXPECT_EQ(a.str(), b.str());

    std::istringstream bad("station_id,lead_time\n");
    EXPECT_THROW(read_scores(bad), SchemaError);
    std::istringstream bad_row(std::string(kScoresHeader) + "\nS1,1,RAW,2007-01-01,12,0.1,1,0.5,2007,10\n");
    try {
        read_scores(bad_row);
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Reports, SkillAgainstItselfIsZero) {
    const auto& ds = small_dataset();
    const auto r = run_experiment(ds, fast_config({"RAW", "POLR"}));
    BootstrapOptions boot;
    boot.n_boot = 200;
    const auto rows = skill_table(r.cases, "RAW", boot, 1);
    std::size_t self = 0;
    for (const auto& row : rows) {
        ASSERT_TRUE(row.ci_lo && row.ci_hi);
        EXPECT_LE(*row.ci_lo, row.value);
        EXPECT_GE(*row.ci_hi, row.value);
        if (row.method == "RAW") {
            EXPECT_EQ(row.value, 0.0);
            EXPECT_LE(*row.ci_lo, 0.0);
            EXPECT_GE(*row.ci_hi, 0.0);
            ++self;
        } else if (row.metric == "CRPSS") {
            EXPECT_GT(row.value, 0.0);
        }
    }
    EXPECT_EQ(self, 2u * 2u * 3u);  // (2 stations + pooled) x 2 leads x 2 metrics
    EXPECT_THROW(skill_table(r.cases, "MLP", boot, 1), IncomparableSeriesError);
}

TEST(Reports, DmMatrixOfIdenticalMethodsIsEmpty) {
    const auto& ds = small_dataset();
    auto cases = run_experiment(ds, fast_config({"RAW"})).cases;
    const std::size_t n = cases.size();
    for (std::size_t i = 0; i < n; ++i) {
        CaseRecord copy = cases[i];
        copy.method = "TWIN";
        cases.push_back(copy);
    }
    const auto cells = dm_matrix(cases, 0.05, ScoreKind::Crps);
    ASSERT_EQ(cells.size(), 2u * 2u);
    for (const auto& c : cells) {
        EXPECT_EQ(c.n_stations, 2u);
        EXPECT_EQ(c.n_significant, 0u);
        EXPECT_EQ(c.proportion(), 0.0);
    }
}

TEST(Reports, IdealForecasterPitIsFlat) {
    std::mt19937_64 rng(21);
    std::vector<CaseRecord> cases;
    for (int i = 0; i < 10000; ++i) {
        std::array<double, kNumOktas> w{};
        for (double& v : w) v = std::exponential_distribution<double>(1.0)(rng);
        const Pmf pmf = Pmf::from_weights(w);
        std::discrete_distribution<std::size_t> draw(pmf.probs().begin(), pmf.probs().end());
        CaseRecord c;
        c.station_id = "S";
        c.lead_time = 1;
        c.method = "IDEAL";
        c.date = make_date(2000, 1, 1) + std::chrono::days{i};
        c.obs = draw(rng);
        c.pit = pit_value(pmf, c.obs, rng);
        cases.push_back(c);
    }
    const auto rows = pit_table(cases, 20);
    ASSERT_EQ(rows.size(), 40u);  // lead 1 and pooled
    std::size_t lo = SIZE_MAX, hi = 0, total = 0;
    for (const auto& r : rows) {
        if (r.lead_time != "all") continue;
        lo = std::min(lo, r.count);
        hi = std::max(hi, r.count);
        total += r.count;
    }
    EXPECT_EQ(total, 10000u);
    EXPECT_LT(static_cast<double>(hi) / static_cast<double>(lo), 1.3);
}
