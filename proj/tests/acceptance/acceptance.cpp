// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oktacal/config.hpp"
#include "oktacal/gbm.hpp"
#include "oktacal/linear_models.hpp"
#include "oktacal/manifest.hpp"
#include "oktacal/mlp.hpp"
#include "oktacal/pipeline.hpp"
#include "oktacal/random_forest.hpp"
#include "oktacal/reports.hpp"
#include "oktacal/scores.hpp"
#include "oktacal/significance.hpp"
#include "oktacal/synthetic.hpp"
#include "support/oracles.hpp"
#include "support/split_oracle.hpp"

using namespace oktacal;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

// ------------------------------------------------------------------ 1

Outcome crps_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto p = oracle::random_pmf(rng);
        const OktaIndex obs = rng() % kNumOktas;
        worst = std::max(worst, std::abs(crps_discrete(Pmf(p), obs) - oracle::crps_expectation(p, obs)));
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-12 && t < 1.0, "max |diff| " + fmt(worst) + " over 1000 pairs, " + fmt(t, 3) + " s"};
}

// ------------------------------------------------------------------ 2

FeatureMatrix normal_matrix(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::normal_distribution<double> nd(0.0, 1.0);
    FeatureMatrix x(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) x(i, j) = nd(rng);
    return x;
}

std::vector<OktaIndex> uniform_labels(std::mt19937_64& rng, std::size_t n) {
    std::vector<OktaIndex> y(n);
    for (auto& v : y) v = rng() % kNumOktas;
    return y;
}

Outcome gradient_checks() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::normal_distribution<double> nd(0.0, 0.5);
    double worst_mlr = 0.0, worst_polr = 0.0, worst_mlp = 0.0;

    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 2 + rep % 5, n = 15;
        const auto x = normal_matrix(rng, n, m);
        const auto y = uniform_labels(rng, n);
        std::vector<double> a(8 * (m + 1)), g(a.size()), tmp(a.size());
        for (double& v : a) v = nd(rng);
        mlr_nll(a, x, y, g);
        const auto num =
            oracle::numeric_gradient([&](const std::vector<double>& p) { return mlr_nll(p, x, y, tmp); }, a);
        worst_mlr = std::max(worst_mlr, oracle::relative_error(g, num));
    }
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 2 + rep % 5, n = 15;
        const auto x = normal_matrix(rng, n, m);
        const auto y = uniform_labels(rng, n);
        std::vector<double> a(8 + m), g(a.size()), tmp(a.size());
        a[0] = -2.0 + nd(rng);
        for (std::size_t k = 1; k < 8; ++k) a[k] = -0.5 + nd(rng);
        for (std::size_t j = 0; j < m; ++j) a[8 + j] = nd(rng);
        polr_nll(a, x, y, g);
        const auto num =
            oracle::numeric_gradient([&](const std::vector<double>& p) { return polr_nll(p, x, y, tmp); }, a);
        worst_polr = std::max(worst_polr, oracle::relative_error(g, num));
    }
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 6 + rep % 3, n = 12;
        const auto z = normal_matrix(rng, n, m);
        const auto y = uniform_labels(rng, n);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const MlpLayout layout(m);
        std::vector<double> p(layout.total), g(layout.total);
        for (double& v : p) v = nd(rng);
        const double l2 = rep % 2 ? 0.1 : 0.0;
        mlp_loss(p, m, z, y, idx, l2, g);
        const auto num = oracle::numeric_gradient(
            [&](const std::vector<double>& q) { return mlp_loss(q, m, z, y, idx, l2, {}); }, p);
        worst_mlp = std::max(worst_mlp, oracle::relative_error(g, num));
    }
    const double t = seconds_since(t0);
    const bool ok = worst_mlr < 1e-5 && worst_polr < 1e-5 && worst_mlp < 1e-5 && t < 30.0;
    return {ok, "max relative error MLR " + fmt(worst_mlr, 3) + ", POLR " + fmt(worst_polr, 3) + ", MLP " +
                    fmt(worst_mlp, 3) + " (50 instances each), " + fmt(t, 3) + " s"};
}

// ------------------------------------------------------------------ 3

LabeledData random_rows(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t classes) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LabeledData d{FeatureMatrix(n, m), {}};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) d.x(i, j) = std::round(u(rng) * 1000.0) / 1000.0;
        d.y.push_back(static_cast<OktaIndex>(rng() % classes));
    }
    return d;
}

Outcome split_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(303);
    oracle::Rows rows(20);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    int bad_gini = 0, bad_newton = 0, splits = 0;

    for (int rep = 0; rep < 100; ++rep) {
        const auto d = random_rows(rng, 20, 4, 3 + rep % 7);
        const SortedColumns cols(d.x);
        const std::vector<double> w(20, 1.0);
        const auto tree = grow_classification_tree(cols, d.y, {}, {3, 0, 1.0}, rng);
        oracle::AuditResult res;
        oracle::audit_tree(
            tree, 0, d.x, rows, 3,
            [&](const oracle::Rows& l, const oracle::Rows& r, const oracle::Rows& p) {
                return oracle::gini_gain(d.y, w, l, r, p);
            },
            [&](const oracle::Rows& s) {
                ClassFrequencies f{};
                for (std::size_t i : s) f[d.y[i]] += 1.0 / static_cast<double>(s.size());
                return f;
            },
            [](const ClassFrequencies& a, const ClassFrequencies& b) {
                for (std::size_t k = 0; k < kNumOktas; ++k)
                    if (std::abs(a[k] - b[k]) > 1e-12) return false;
                return true;
            },
            res);
        bad_gini += !res.ok;
        splits += res.split_nodes;
    }

    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> hess(0.01, 0.25);
    for (int rep = 0; rep < 100; ++rep) {
        const auto d = random_rows(rng, 20, 4, kNumOktas);
        std::vector<double> g(20), h(20);
        for (std::size_t i = 0; i < 20; ++i) {
            g[i] = nd(rng);
            h[i] = hess(rng);
        }
        const SortedColumns cols(d.x);
        const auto tree = grow_gradient_tree(cols, g, h, {3, 0, 1.0}, rng, 1e-6);
        oracle::AuditResult res;
        oracle::audit_tree(
            tree, 0, d.x, rows, 3,
            [&](const oracle::Rows& l, const oracle::Rows& r, const oracle::Rows& p) {
                return oracle::newton_gain(g, h, 1e-6, l, r, p);
            },
            [&](const oracle::Rows& s) {
                double G = 0.0, H = 0.0;
                for (std::size_t i : s) {
                    G += g[i];
                    H += h[i];
                }
                return -G / (H + 1e-6);
            },
            [](double a, double b) { return std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)); }, res);
        bad_newton += !res.ok;
        splits += res.split_nodes;
    }
    const double t = seconds_since(t0);
    return {bad_gini == 0 && bad_newton == 0 && t < 10.0,
            "mismatching trees: Gini " + std::to_string(bad_gini) + "/100, Newton " + std::to_string(bad_newton) +
                "/100 (" + std::to_string(splits) + " splits audited), " + fmt(t, 3) + " s"};
}

// ------------------------------------------------------------------ 4

Outcome flooring() {
    const double T = 1826.0;
    const double p_min = min_probability(T);
    // The subtraction cancels about five digits, so the closed form is
    // evaluated in extended precision.
    const long double closed_ext = 1.0L - std::pow(0.99L, 1.0L / static_cast<long double>(T));
    const double closed = static_cast<double>(closed_ext);
    const double rel = static_cast<double>(std::abs(static_cast<long double>(p_min) - closed_ext) / closed_ext);

    std::mt19937_64 rng(404);
    double worst_sum = 0.0, lowest = 1.0;
    auto check = [&](const Pmf& p) {
        const Pmf f = floor_pmf(p, T);
        double s = 0.0;
        for (OktaIndex k = 0; k < kNumOktas; ++k) {
            s += f[k];
            lowest = std::min(lowest, f[k] / p_min);
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    };
    for (OktaIndex k = 0; k < kNumOktas; ++k) check(Pmf::point_mass(k));
    for (int rep = 0; rep < 1000; ++rep) check(Pmf(oracle::random_pmf(rng)));
    return {rel < 1e-12 && worst_sum <= 1e-12 && lowest >= 1.0 - 1e-12,
            "p_min " + fmt(p_min, 10) + " (closed form " + fmt(closed, 10) + ", relative difference " +
                fmt(rel, 3) + "), max |sum - 1| " + fmt(worst_sum, 3) +
                ", min entry / p_min " + fmt(lowest, 6)};
}

// ------------------------------------------------------------------ 5 and 6

struct Benchmark {
    ExperimentResult result;
    double seconds = 0.0;
};

const Benchmark& benchmark() {
    static const Benchmark b = [] {
        SynthConfig s;
        s.n_stations = 20;
        s.n_days = 3000;
        s.lead_times = {1, 4, 7};
        s.spread_deflation = 0.5;
        s.bias = 0.1;
        s.seed = 2024;
        const StationDataset ds = synth_generate(s);
        const ExperimentConfig cfg = experiment_config_from_json(Json::object());
        const auto t0 = Clock::now();
        Benchmark out{run_experiment(ds, cfg), 0.0};
        out.seconds = seconds_since(t0);
        return out;
    }();
    return b;
}

double mean_crps(const ExperimentResult& r, const std::string& method, int lead) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : r.cases)
        if (c.method == method && c.lead_time == lead) {
            s += c.crps;
            ++n;
        }
    return n ? s / static_cast<double>(n) : std::nan("");
}

Outcome calibration_gain() {
    const auto& b = benchmark();
    const auto& r = b.result;
    bool ok = r.failures.empty() && b.seconds < 600.0;
    std::ostringstream os;
    os << r.methods.size() - 1 << " methods, " << r.failures.size() << " failures, " << fmt(b.seconds, 4) << " s;";
    for (int lead : {1, 4, 7}) {
        const double raw = mean_crps(r, "RAW", lead);
        os << " lead " << lead << ": RAW " << fmt(raw);
        for (const auto& m : r.methods) {
            if (m == "RAW") continue;
            const double v = mean_crps(r, m, lead);
            const auto tests = dm_by_station(r.cases, lead, m, "RAW", ScoreKind::Crps);
            const std::size_t sig = tests.empty() ? 0 : count_significant_better(tests, 0.05);
            const double ratio = v / raw;
            const double share = tests.empty() ? 0.0 : static_cast<double>(sig) / static_cast<double>(tests.size());
            ok = ok && ratio <= 0.95 && tests.size() == 20 && share >= 0.8;
            os << " " << m << " " << fmt(ratio, 3) << "x/" << sig << "of" << tests.size();
        }
        os << ";";
    }
    return {ok, os.str()};
}

Outcome pit_shapes() {
    const auto& r = benchmark().result;
    const auto rows = pit_table(r.cases, 20);
    auto pooled = [&](const std::string& method) {
        std::vector<double> rel;
        for (const auto& row : rows)
            if (row.method == method && row.lead_time == "all") rel.push_back(row.relative);
        return rel;
    };
    const auto raw = pooled("RAW"), polr = pooled("POLR"), mlp = pooled("MLP");
    if (raw.size() != 20 || polr.size() != 20 || mlp.size() != 20) return {false, "missing PIT histograms"};
    auto ratio = [](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *hi / *lo;
    };
    const bool ok = raw.front() > 1.5 && raw.back() > 1.5 && ratio(polr) < 1.5 && ratio(mlp) < 1.5;
    return {ok, "RAW end bins " + fmt(raw.front(), 3) + "x and " + fmt(raw.back(), 3) + "x uniform; max/min POLR " +
                    fmt(ratio(polr), 3) + ", MLP " + fmt(ratio(mlp), 3)};
}

// ------------------------------------------------------------------ 7

Outcome dm_size() {
    std::mt19937_64 rng(707);
    std::normal_distribution<double> nd(0.0, 1.0);
    int rejections = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> d(365);
        for (double& v : d) v = nd(rng);
        rejections += dm_test(d, 0).p_value < 0.05;
    }
    const double rate = rejections / 1000.0;
    return {rate >= 0.03 && rate <= 0.07, "rejection rate " + fmt(100.0 * rate, 3) + "% over 1000 replications"};
}

// ------------------------------------------------------------------ 8

Outcome bh_control() {
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double fdp_sum = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<double> p(200);
        for (double& v : p) v = u(rng);
        // Every hypothesis is null, so any rejection is a false discovery.
        fdp_sum += benjamini_hochberg(p, 0.05).empty() ? 0.0 : 1.0;
    }
    const double fdr = fdp_sum / 500.0;
    return {fdr <= 0.065, "mean false discovery proportion " + fmt(100.0 * fdr, 3) + "% over 500 replications"};
}

// ------------------------------------------------------------------ 9

Outcome bootstrap_coverage() {
    std::mt19937_64 rng(909);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double phi = 0.5;
    int covered = 0;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> x(1000);
        x[0] = nd(rng) / std::sqrt(1.0 - phi * phi);
        for (std::size_t t = 1; t < x.size(); ++t) x[t] = phi * x[t - 1] + nd(rng);
        const auto [lo, hi] = stationary_bootstrap_ci(x, rng, {1000, 25.0, 0.95});
        covered += lo <= 0.0 && 0.0 <= hi;
    }
    const double rate = covered / 200.0;
    return {rate >= 0.92 && rate <= 0.98, "coverage " + fmt(100.0 * rate, 3) + "% over 200 AR(1) series"};
}

// ------------------------------------------------------------------ 10

/// Five years of daily rows with standard normal features and labels drawn
/// independently of them.
std::pair<LabeledData, std::vector<int>> noise_window(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, 8);
    LabeledData d{FeatureMatrix(5 * 365, 7), {}};
    std::vector<int> years;
    for (std::size_t i = 0; i < 5 * 365; ++i) {
        for (std::size_t j = 0; j < 7; ++j) d.x(i, j) = nd(rng);
        d.y.push_back(static_cast<OktaIndex>(label(rng)));
        years.push_back(2000 + static_cast<int>(i / 365));
    }
    return {std::move(d), std::move(years)};
}

Outcome gbm_protocol() {
    std::mt19937_64 rng(1010);
    const auto d = random_rows(rng, 500, 7, kNumOktas);
    GbmParams frozen;
    frozen.learning_rate = 0.0;
    GbmFitReport report;
    const auto model = gbm_fit(d, d, FeatureVariant::Full7, frozen, &report);
    const bool frozen_ok = report.rounds_run == 26 && report.best_round == 1 && model.boosting_rounds() == 1;

    const auto [window, years] = noise_window(2024);
    const int depth = tune_gbm(window, years, FeatureVariant::Full7, GbmTuning{}).params.depth;

    int depth_one = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto [w, y] = noise_window(seed);
        depth_one += tune_gbm(w, y, FeatureVariant::Full7, GbmTuning{}).params.depth == 1;
    }
    const bool ok = frozen_ok && depth == 1 && depth_one >= 16;
    return {ok, "lambda=0: " + std::to_string(report.rounds_run) + " rounds run, M=" +
                    std::to_string(model.boosting_rounds()) + "; noise labels: depth " + std::to_string(depth) +
                    " selected, depth 1 in " + std::to_string(depth_one) + "/20 further replicates"};
}

// ------------------------------------------------------------------ 11

Outcome reproducibility() {
    SynthConfig s;
    s.n_stations = 1;
    s.n_days = 2191;
    s.lead_times = {4};
    s.spread_deflation = 0.5;
    s.bias = 0.1;
    s.seed = 1111;
    const StationDataset ds = synth_generate(s);

    Json j = Json::object();
    j["methods"] = {"RAW",  "MLR",  "POLR",  "MLP",  "RF",    "GBM",    "MLRS",  "POLRS",
                    "MLPS", "RFS",  "GBMS",  "MLR-P", "POLR-P", "MLP-P", "RF-P", "GBM-P"};
    j["seed"] = 11;
    j["rf"] = {{"tuning_trees", 50}, {"final_trees", 200}};
    const ExperimentConfig cfg = experiment_config_from_json(j);

    const auto path = std::filesystem::temp_directory_path() / "oktacal_acceptance_manifest.json";
    write_manifest(manifest_base("run", to_json(cfg)), path.string());

    std::vector<std::string> tables;
    std::size_t cases = 0, failures = 0;
    for (std::size_t threads : {1, 0}) {
        ExperimentConfig c = experiment_config_from_manifest(read_manifest(path.string()));
        c.threads = threads;
        const auto r = run_experiment(ds, c);
        std::ostringstream os;
        write_scores(r.cases, os);
        write_pmfs(r.cases, os);
        write_metric_table(summarize_scores(r.cases), os);
        tables.push_back(os.str());
        cases = r.cases.size();
        failures += r.failures.size();
    }
    std::filesystem::remove(path);
    const bool same = tables[0] == tables[1];
    return {same && cases > 0 && failures == 0,
            std::string(same ? "identical" : "different") + " tables (" + std::to_string(tables[0].size()) +
                " bytes, " + std::to_string(cases) + " cases, 16 methods, " + std::to_string(failures) +
                " failures)"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 discrete CRPS matches enumeration oracle", crps_oracle},
        {"2 analytic gradients match finite differences", gradient_checks},
        {"3 tree growth reproduces exhaustive best splits", split_oracle},
        {"4 probability floor closed form and normalisation", flooring},
        {"5 calibration gain over the raw ensemble", calibration_gain},
        {"6 PIT shapes of raw and calibrated forecasts", pit_shapes},
        {"7 Diebold-Mariano test size", dm_size},
        {"8 Benjamini-Hochberg false discovery control", bh_control},
        {"9 stationary bootstrap coverage", bootstrap_coverage},
        {"10 gradient boosting protocol", gbm_protocol},
        {"11 reproducible runs from a manifest", reproducibility},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
