#pragma once

// Delimited output tables of an experiment run and the post-processing
// summaries derived from them: skill scores with bootstrap intervals,
// pairwise DM significance proportions and PIT histograms.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "oktacal/calendar.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/pipeline.hpp"
#include "oktacal/scores.hpp"
#include "oktacal/significance.hpp"
#include "oktacal/text_io.hpp"

namespace oktacal {

inline constexpr const char* kScoresHeader = "station_id,lead_time,method,date,obs_okta,crps,logs,pit,test_year,n_train";
inline constexpr const char* kMetricTableHeader = "station,lead_time,method,metric,value,ci_lo,ci_hi";

inline void write_scores(const std::vector<CaseRecord>& cases, std::ostream& out) {
    out << kScoresHeader << '\n';
    for (const auto& c : cases) {
        out << c.station_id << ',' << c.lead_time << ',' << c.method << ',' << format_iso_date(c.date) << ',' << c.obs
            << ',' << format_double(c.crps) << ',' << format_double(c.logs) << ',' << format_double(c.pit) << ','
            << c.test_year << ',' << c.n_train << '\n';
    }
}

/// Reads a scores table; the PMF fields of the returned records stay zero.
inline std::vector<CaseRecord> read_scores(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty scores table");
    if (strip_cr(line) != kScoresHeader) throw SchemaError("unexpected scores header", 1);
    std::vector<CaseRecord> cases;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto text = strip_cr(line);
        if (text.empty()) continue;
        const auto f = split_fields(text);
        if (f.size() != 10) throw SchemaError("expected 10 fields", lineno);
        CaseRecord c;
        long long lead = 0, obs = 0, year = 0, n_train = 0;
        c.station_id = std::string(f[0]);
        c.method = std::string(f[2]);
        bool ok = !c.station_id.empty() && !c.method.empty() && parse_int(f[1], lead) && parse_int(f[4], obs) &&
                  parse_double(f[5], c.crps) && parse_double(f[6], c.logs) && parse_double(f[7], c.pit) &&
                  parse_int(f[8], year) && parse_int(f[9], n_train);
        if (!ok || obs < 0 || obs >= static_cast<long long>(kNumOktas) || n_train < 0)
            throw SchemaError("malformed scores row", lineno);
        try {
            c.date = parse_iso_date(f[3]);
        } catch (const DomainError& e) {
            throw SchemaError(e.what(), lineno);
        }
        c.lead_time = static_cast<int>(lead);
        c.obs = static_cast<OktaIndex>(obs);
        c.test_year = static_cast<int>(year);
        c.n_train = static_cast<std::size_t>(n_train);
        cases.push_back(std::move(c));
    }
    return cases;
}

inline std::vector<CaseRecord> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open scores table '" + path + "'");
    return read_scores(in);
}

inline void write_pmfs(const std::vector<CaseRecord>& cases, std::ostream& out) {
    out << "station_id,lead_time,method,date";
    for (std::size_t k = 0; k < kNumOktas; ++k) out << ",p" << k;
    out << '\n';
    for (const auto& c : cases) {
        out << c.station_id << ',' << c.lead_time << ',' << c.method << ',' << format_iso_date(c.date);
        for (double p : c.pmf) out << ',' << format_double(p);
        out << '\n';
    }
}

inline void write_provenance(const std::vector<ProvenanceRecord>& rows, std::ostream& out) {
    out << "station_id,lead_time,method,test_year,season,n_train,details\n";
    for (const auto& r : rows)
        out << r.station_id << ',' << r.lead_time << ',' << r.method << ',' << r.test_year << ',' << r.season << ','
            << r.n_train << ',' << r.details << '\n';
}

inline std::string csv_quote(const std::string& s) {
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += (ch == '\n' || ch == '\r') ? ' ' : ch;
    }
    return q + '"';
}

inline void write_failures(const std::vector<FailureRecord>& rows, std::ostream& out) {
    out << "station_id,lead_time,method,test_year,message\n";
    for (const auto& r : rows)
        out << r.station_id << ',' << r.lead_time << ',' << r.method << ',' << r.test_year << ','
            << csv_quote(r.message) << '\n';
}

/// One row of the documented metric table layout.
struct MetricRow {
    std::string station;  ///< "ALL" for pooled rows
    int lead_time = 0;
    std::string method;
    std::string metric;
    double value = 0.0;
    std::optional<double> ci_lo, ci_hi;
};

inline void write_metric_table(const std::vector<MetricRow>& rows, std::ostream& out) {
    out << kMetricTableHeader << '\n';
    for (const auto& r : rows) {
        out << r.station << ',' << r.lead_time << ',' << r.method << ',' << r.metric << ',' << format_double(r.value)
            << ',' << (r.ci_lo ? format_double(*r.ci_lo) : "") << ',' << (r.ci_hi ? format_double(*r.ci_hi) : "")
            << '\n';
    }
}

namespace detail {

using SeriesKey = std::tuple<std::string, int, std::string>;

/// Case pointers grouped by (station, lead, method), each group in date order.
inline std::map<SeriesKey, std::vector<const CaseRecord*>> group_cases(const std::vector<CaseRecord>& cases) {
    std::map<SeriesKey, std::vector<const CaseRecord*>> g;
    for (const auto& c : cases) g[{c.station_id, c.lead_time, c.method}].push_back(&c);
    for (auto& [key, v] : g) {
        std::stable_sort(v.begin(), v.end(), [](const CaseRecord* a, const CaseRecord* b) { return a->date < b->date; });
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i - 1]->date == v[i]->date)
                throw SchemaError("duplicate date " + format_iso_date(v[i]->date) + " for " + std::get<0>(key) +
                                  " lead " + std::to_string(std::get<1>(key)) + " method " + std::get<2>(key));
    }
    return g;
}

inline double metric_of(const CaseRecord& c, ScoreKind k) { return k == ScoreKind::Crps ? c.crps : c.logs; }

/// Pairs the two groups on their common dates.
inline void align(const std::vector<const CaseRecord*>& a, const std::vector<const CaseRecord*>& b, ScoreKind kind,
                  std::vector<Date>& dates, std::vector<double>& va, std::vector<double>& vb) {
    dates.clear();
    va.clear();
    vb.clear();
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i]->date < b[j]->date) {
            ++i;
        } else if (b[j]->date < a[i]->date) {
            ++j;
        } else {
            dates.push_back(a[i]->date);
            va.push_back(metric_of(*a[i], kind));
            vb.push_back(metric_of(*b[j], kind));
            ++i;
            ++j;
        }
    }
}

/// Skill of paired score series (a against reference b); the interval
/// resamples dates with the stationary bootstrap.
inline MetricRow skill_row(const std::string& station, int lead, const std::string& method, const std::string& metric,
                           const std::vector<double>& a, const std::vector<double>& b, bool is_reference,
                           const BootstrapOptions& boot, std::uint64_t seed) {
    MetricRow r{station, lead, method, metric, 0.0, {}, {}};
    if (is_reference) {
        r.ci_lo = r.ci_hi = 0.0;
        return r;
    }
    auto skill_of = [&](auto&& indices) {
        double x = 0.0, y = 0.0;
        for (std::size_t i : indices) {
            x += a[i];
            y += b[i];
        }
        return skill_score(x, y);
    };
    std::vector<std::size_t> all(a.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    r.value = skill_of(all);
    if (a.size() >= 10) {
        std::mt19937_64 rng(derive_seed(seed, station + "|" + std::to_string(lead) + "|" + method + "|" + metric));
        const auto ci = stationary_bootstrap_interval(
            a.size(), [&](std::span<const std::size_t> idx) { return skill_of(idx); }, boot, rng);
        r.ci_lo = ci.first;
        r.ci_hi = ci.second;
    }
    return r;
}

inline std::vector<std::string> ordered_methods(const std::vector<CaseRecord>& cases) {
    std::vector<std::string> m;
    for (const auto& c : cases)
        if (std::find(m.begin(), m.end(), c.method) == m.end()) m.push_back(c.method);
    return m;
}

}  // namespace detail

/// Mean CRPS and LogS per (station, lead, method) plus pooled "ALL" rows.
inline std::vector<MetricRow> summarize_scores(const std::vector<CaseRecord>& cases) {
    const auto groups = detail::group_cases(cases);
    std::vector<MetricRow> rows;
    std::map<std::pair<int, std::string>, std::array<double, 3>> pooled;  // crps sum, logs sum, count
    for (const auto& [key, v] : groups) {
        const auto& [station, lead, method] = key;
        double crps = 0.0, logs = 0.0;
        for (const auto* c : v) {
            crps += c->crps;
            logs += c->logs;
        }
        const double n = static_cast<double>(v.size());
        rows.push_back({station, lead, method, "CRPS", crps / n, {}, {}});
        rows.push_back({station, lead, method, "LogS", logs / n, {}, {}});
        auto& p = pooled[{lead, method}];
        p[0] += crps;
        p[1] += logs;
        p[2] += n;
    }
    for (const auto& [key, p] : pooled) {
        rows.push_back({"ALL", key.first, key.second, "CRPS", p[0] / p[2], {}, {}});
        rows.push_back({"ALL", key.first, key.second, "LogS", p[1] / p[2], {}, {}});
    }
    return rows;
}

/// Skill of every method against `reference` (CRPSS and LogSS), per station
/// and pooled over stations, with stationary-bootstrap percentile intervals
/// over paired dates.
inline std::vector<MetricRow> skill_table(const std::vector<CaseRecord>& cases, const std::string& reference,
                                          const BootstrapOptions& boot, std::uint64_t seed) {
    const auto groups = detail::group_cases(cases);
    const auto methods = detail::ordered_methods(cases);
    if (std::find(methods.begin(), methods.end(), reference) == methods.end())
        throw IncomparableSeriesError("reference method '" + reference + "' has no scores");

    std::set<std::string> stations;
    std::set<int> leads;
    for (const auto& [key, v] : groups) {
        stations.insert(std::get<0>(key));
        leads.insert(std::get<1>(key));
    }

    std::vector<MetricRow> rows;
    std::vector<Date> dates;
    std::vector<double> va, vb;
    for (const ScoreKind kind : {ScoreKind::Crps, ScoreKind::LogS}) {
        const std::string metric = kind == ScoreKind::Crps ? "CRPSS" : "LogSS";
        for (int lead : leads) {
            for (const auto& method : methods) {
                std::map<Date, std::pair<double, double>> pooled;
                for (const auto& station : stations) {
                    const auto a = groups.find({station, lead, method});
                    const auto b = groups.find({station, lead, reference});
                    if (a == groups.end()) continue;
                    if (b == groups.end())
                        throw IncomparableSeriesError("no reference scores for station " + station + " lead " +
                                                      std::to_string(lead));
                    detail::align(a->second, b->second, kind, dates, va, vb);
                    if (dates.empty())
                        throw IncomparableSeriesError("no common dates between " + method + " and " + reference +
                                                      " at station " + station);
                    for (std::size_t i = 0; i < dates.size(); ++i) {
                        auto& p = pooled[dates[i]];
                        p.first += va[i];
                        p.second += vb[i];
                    }
                    rows.push_back(detail::skill_row(station, lead, method, metric, va, vb, method == reference, boot, seed));
                }
                if (pooled.empty()) continue;
                std::vector<double> pa, pb;
                for (const auto& [d, p] : pooled) {
                    pa.push_back(p.first);
                    pb.push_back(p.second);
                }
                rows.push_back(detail::skill_row("ALL", lead, method, metric, pa, pb, method == reference, boot, seed));
            }
        }
    }
    return rows;
}

struct DmCell {
    int lead_time = 0;
    std::string metric;
    std::string row_method;  ///< the method tested for being better
    std::string col_method;
    std::size_t n_stations = 0;
    std::size_t n_significant = 0;  ///< BH-adjusted rejections in favour of row_method

    double proportion() const {
        return n_stations ? static_cast<double>(n_significant) / static_cast<double>(n_stations) : 0.0;
    }
};

/// DM tests of method `a` against `b` at every station for one lead time;
/// returns the per-station results in station order. Series with zero
/// variance of the differences count as p = 1.
inline std::vector<TestResult> dm_by_station(const std::vector<CaseRecord>& cases, int lead, const std::string& a,
                                             const std::string& b, ScoreKind kind) {
    const auto groups = detail::group_cases(cases);
    std::set<std::string> stations;
    for (const auto& [key, v] : groups) stations.insert(std::get<0>(key));
    std::vector<TestResult> out;
    ScoreSeries sa, sb;
    for (const auto& station : stations) {
        const auto ga = groups.find({station, lead, a});
        const auto gb = groups.find({station, lead, b});
        if (ga == groups.end() || gb == groups.end()) continue;
        sa = {};
        sb = {};
        detail::align(ga->second, gb->second, kind, sa.dates, sa.values, sb.values);
        sb.dates = sa.dates;
        for (ScoreSeries* s : {&sa, &sb}) {
            s->station_id = station;
            s->lead_time = lead;
            s->kind = kind;
        }
        try {
            out.push_back(dm_test(sa, sb));
        } catch (const DegenerateSeriesError&) {
            out.push_back({});
        }
    }
    return out;
}

inline std::size_t count_significant_better(const std::vector<TestResult>& tests, double alpha) {
    std::vector<double> p;
    for (const auto& t : tests) p.push_back(t.p_value);
    std::size_t n = 0;
    for (std::size_t i : benjamini_hochberg(p, alpha))
        if (tests[i].direction < 0) ++n;
    return n;
}

/// Pairwise matrix: for each lead time and ordered method pair, the share of
/// stations where the row method scores significantly lower (better) than
/// the column method after BH adjustment across stations.
inline std::vector<DmCell> dm_matrix(const std::vector<CaseRecord>& cases, double alpha, ScoreKind kind) {
    const auto methods = detail::ordered_methods(cases);
    std::set<int> leads;
    for (const auto& c : cases) leads.insert(c.lead_time);
    std::vector<DmCell> cells;
    for (int lead : leads) {
        for (const auto& a : methods) {
            for (const auto& b : methods) {
                if (a == b) continue;
                const auto tests = dm_by_station(cases, lead, a, b, kind);
                DmCell cell{lead, to_string(kind), a, b, tests.size(), 0};
                cell.n_significant = tests.empty() ? 0 : count_significant_better(tests, alpha);
                cells.push_back(cell);
            }
        }
    }
    return cells;
}

inline void write_dm_matrix(const std::vector<DmCell>& cells, std::ostream& out) {
    out << "lead_time,metric,row_method,col_method,n_stations,n_significant,proportion\n";
    for (const auto& c : cells)
        out << c.lead_time << ',' << c.metric << ',' << c.row_method << ',' << c.col_method << ',' << c.n_stations
            << ',' << c.n_significant << ',' << format_double(c.proportion()) << '\n';
}

struct PitRow {
    std::string method;
    std::string lead_time;  ///< a lead time or "all"
    std::size_t bin = 0;
    double lower = 0.0, upper = 0.0;
    std::size_t count = 0;
    double relative = 0.0;  ///< count divided by the uniform expectation
};

/// PIT histograms per method and lead time, plus pooled over lead times.
inline std::vector<PitRow> pit_table(const std::vector<CaseRecord>& cases, std::size_t bins) {
    if (bins == 0) throw DomainError("histogram needs at least one bin");
    const auto methods = detail::ordered_methods(cases);
    std::set<int> leads;
    for (const auto& c : cases) leads.insert(c.lead_time);
    std::vector<PitRow> rows;
    auto emit = [&](const std::string& method, const std::string& lead_label, const std::vector<double>& pit) {
        if (pit.empty()) return;
        const auto counts = pit_histogram(pit, bins);
        const double expected = static_cast<double>(pit.size()) / static_cast<double>(bins);
        for (std::size_t b = 0; b < bins; ++b)
            rows.push_back({method, lead_label, b, static_cast<double>(b) / static_cast<double>(bins),
                            static_cast<double>(b + 1) / static_cast<double>(bins), counts[b],
                            static_cast<double>(counts[b]) / expected});
    };
    for (const auto& m : methods) {
        std::vector<double> all;
        for (int lead : leads) {
            std::vector<double> pit;
            for (const auto& c : cases)
                if (c.method == m && c.lead_time == lead) pit.push_back(c.pit);
            emit(m, std::to_string(lead), pit);
            all.insert(all.end(), pit.begin(), pit.end());
        }
        emit(m, "all", all);
    }
    return rows;
}

inline void write_pit_table(const std::vector<PitRow>& rows, std::ostream& out) {
    out << "method,lead_time,bin,lower,upper,count,relative_frequency\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.lead_time << ',' << r.bin << ',' << format_double(r.lower) << ','
            << format_double(r.upper) << ',' << r.count << ',' << format_double(r.relative) << '\n';
}

}  // namespace oktacal
