#pragma once

// Station datasets and their delimited file format:
//
//   station_id,date,lead_time,obs_okta,hres,ctrl,ens_01,...,ens_50,precip_mean
//
// one row per (station, date, lead time); dates are ISO-8601, TCC values are
// fractions in [0, 1], obs_okta is the category index 0..8 and precip_mean
// is empty when the precipitation ensemble is not available.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "oktacal/calendar.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/okta.hpp"
#include "oktacal/text_io.hpp"

namespace oktacal {

/// All forecasts of one station at one lead time, ordered by valid date.
struct ForecastSeries {
    std::string station_id;
    int lead_time = 1;
    std::vector<EnsembleForecast> forecasts;
    std::vector<OktaIndex> obs;

    std::size_t size() const noexcept { return obs.size(); }

    std::vector<Date> dates() const {
        std::vector<Date> d;
        d.reserve(forecasts.size());
        for (const auto& f : forecasts) d.push_back(f.valid_date);
        return d;
    }

    bool has_precip() const {
        return !forecasts.empty() &&
               std::all_of(forecasts.begin(), forecasts.end(), [](const auto& f) { return f.precip_mean.has_value(); });
    }
};

struct StationDataset {
    std::vector<ForecastSeries> series;  ///< sorted by (station_id, lead_time)
    std::vector<std::string> warnings;

    bool empty() const noexcept { return series.empty(); }

    std::size_t row_count() const {
        std::size_t n = 0;
        for (const auto& s : series) n += s.size();
        return n;
    }

    std::vector<std::string> station_ids() const {
        std::vector<std::string> ids;
        for (const auto& s : series)
            if (ids.empty() || ids.back() != s.station_id) ids.push_back(s.station_id);
        return ids;
    }

    std::vector<int> lead_times() const {
        std::set<int> leads;
        for (const auto& s : series) leads.insert(s.lead_time);
        return {leads.begin(), leads.end()};
    }

    const ForecastSeries* find(const std::string& station, int lead) const {
        for (const auto& s : series)
            if (s.station_id == station && s.lead_time == lead) return &s;
        return nullptr;
    }

    friend bool operator==(const StationDataset& a, const StationDataset& b) {
        if (a.series.size() != b.series.size()) return false;
        for (std::size_t i = 0; i < a.series.size(); ++i) {
            const auto &x = a.series[i], &y = b.series[i];
            if (x.station_id != y.station_id || x.lead_time != y.lead_time || x.obs != y.obs ||
                x.forecasts.size() != y.forecasts.size())
                return false;
            for (std::size_t j = 0; j < x.forecasts.size(); ++j) {
                const auto &f = x.forecasts[j], &g = y.forecasts[j];
                if (f.hres != g.hres || f.ctrl != g.ctrl || f.members != g.members || f.precip_mean != g.precip_mean ||
                    f.valid_date != g.valid_date || f.station_id != g.station_id || f.lead_time_days != g.lead_time_days)
                    return false;
            }
        }
        return true;
    }
};

inline std::string dataset_header() {
    std::string h = "station_id,date,lead_time,obs_okta,hres,ctrl";
    for (std::size_t i = 1; i <= kNumExchangeable; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, ",ens_%02zu", i);
        h += buf;
    }
    h += ",precip_mean";
    return h;
}

namespace detail {

/// Sorts series and checks the one-observation-per-(station, date) rule.
inline void finalize_dataset(StationDataset& ds) {
    std::sort(ds.series.begin(), ds.series.end(), [](const ForecastSeries& a, const ForecastSeries& b) {
        return std::tie(a.station_id, a.lead_time) < std::tie(b.station_id, b.lead_time);
    });
    std::map<std::pair<std::string, Date>, OktaIndex> obs_by_day;
    for (auto& s : ds.series) {
        std::vector<std::size_t> idx(s.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return s.forecasts[a].valid_date < s.forecasts[b].valid_date;
        });
        ForecastSeries sorted{s.station_id, s.lead_time, {}, {}};
        for (std::size_t i : idx) {
            sorted.forecasts.push_back(std::move(s.forecasts[i]));
            sorted.obs.push_back(s.obs[i]);
        }
        s = std::move(sorted);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i > 0 && s.forecasts[i - 1].valid_date == s.forecasts[i].valid_date)
                throw SchemaError("duplicate (station, date, lead time) key for station " + s.station_id + " on " +
                                  format_iso_date(s.forecasts[i].valid_date));
            const auto key = std::make_pair(s.station_id, s.forecasts[i].valid_date);
            const auto [it, inserted] = obs_by_day.emplace(key, s.obs[i]);
            if (!inserted && it->second != s.obs[i])
                throw SchemaError("conflicting observations for station " + s.station_id + " on " +
                                  format_iso_date(key.second));
        }
    }
}

}  // namespace detail

inline StationDataset read_dataset(std::istream& in) {
    StationDataset ds;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        ds.warnings.push_back("empty dataset file");
        return ds;
    }
    ++line_no;
    if (strip_cr(line) != dataset_header()) throw SchemaError("header does not match the dataset schema", 1);

    std::map<std::pair<std::string, int>, std::size_t> slot;
    const std::size_t n_fields = 4 + kNumMembers + 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = strip_cr(line);
        if (row.empty()) continue;
        const auto f = split_fields(row);
        if (f.size() != n_fields)
            throw SchemaError("expected " + std::to_string(n_fields) + " fields, got " + std::to_string(f.size()),
                              line_no);
        EnsembleForecast fc;
        fc.station_id = std::string(f[0]);
        if (fc.station_id.empty()) throw SchemaError("empty station_id", line_no);
        try {
            fc.valid_date = parse_iso_date(f[1]);
        } catch (const DomainError& e) {
            throw SchemaError(e.what(), line_no);
        }
        long long lead = 0, okta = 0;
        if (!parse_int(f[2], lead) || lead < 1 || lead > 10) throw SchemaError("lead_time must be 1..10", line_no);
        if (!parse_int(f[3], okta) || okta < 0 || okta > 8) throw SchemaError("obs_okta must be 0..8", line_no);
        fc.lead_time_days = static_cast<int>(lead);
        auto tcc = [&](std::size_t col, const char* name) {
            double v = 0.0;
            if (!parse_double(f[col], v)) throw SchemaError(std::string("unparsable ") + name, line_no);
            if (!(v >= 0.0 && v <= 1.0))
                throw SchemaError(std::string(name) + " = " + std::string(f[col]) + " outside [0, 1]", line_no);
            return v;
        };
        fc.hres = tcc(4, "hres");
        fc.ctrl = tcc(5, "ctrl");
        for (std::size_t i = 0; i < kNumExchangeable; ++i) fc.members[i] = tcc(6 + i, "ensemble member");
        if (!f.back().empty()) {
            double p = 0.0;
            if (!parse_double(f.back(), p) || !(p >= 0.0)) throw SchemaError("precip_mean must be >= 0", line_no);
            fc.precip_mean = p;
        }
        const auto key = std::make_pair(fc.station_id, fc.lead_time_days);
        auto it = slot.find(key);
        if (it == slot.end()) {
            it = slot.emplace(key, ds.series.size()).first;
            ds.series.push_back({fc.station_id, fc.lead_time_days, {}, {}});
        }
        auto& s = ds.series[it->second];
        s.forecasts.push_back(std::move(fc));
        s.obs.push_back(static_cast<OktaIndex>(okta));
    }
    if (ds.series.empty()) ds.warnings.push_back("dataset file has no data rows");
    detail::finalize_dataset(ds);
    return ds;
}

inline StationDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file '" + path + "'");
    return read_dataset(in);
}

/// Rows ordered by station, date, lead time.
inline void write_dataset(const StationDataset& ds, std::ostream& out) {
    out << dataset_header() << '\n';
    struct RowRef {
        const ForecastSeries* s;
        std::size_t i;
    };
    std::vector<RowRef> rows;
    rows.reserve(ds.row_count());
    for (const auto& s : ds.series)
        for (std::size_t i = 0; i < s.size(); ++i) rows.push_back({&s, i});
    std::stable_sort(rows.begin(), rows.end(), [](const RowRef& a, const RowRef& b) {
        const auto& fa = a.s->forecasts[a.i];
        const auto& fb = b.s->forecasts[b.i];
        return std::tie(fa.station_id, fa.valid_date, fa.lead_time_days) <
               std::tie(fb.station_id, fb.valid_date, fb.lead_time_days);
    });
    std::string line;
    for (const auto& r : rows) {
        const auto& fc = r.s->forecasts[r.i];
        line.clear();
        line += fc.station_id;
        line += ',';
        line += format_iso_date(fc.valid_date);
        line += ',';
        line += std::to_string(fc.lead_time_days);
        line += ',';
        line += std::to_string(r.s->obs[r.i]);
        fc.for_each_member([&](double v) {
            line += ',';
            line += format_double(v);
        });
        line += ',';
        if (fc.precip_mean) line += format_double(*fc.precip_mean);
        line += '\n';
        out << line;
    }
}

inline void save_dataset(const StationDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset file '" + path + "'");
    write_dataset(ds, out);
}

}  // namespace oktacal
