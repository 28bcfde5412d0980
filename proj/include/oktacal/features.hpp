#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oktacal/errors.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

/// Which predictors are handed to a classifier.
///  - Full7:      (ens_mean, ctrl, hres, s2, p0, p1, I)
///  - Mlr6:       Full7 without the interaction term
///  - Extended8:  Full7 followed by the precipitation ensemble mean
enum class FeatureVariant { Full7, Mlr6, Extended8 };

inline std::size_t feature_dimension(FeatureVariant v) {
    switch (v) {
        case FeatureVariant::Full7: return 7;
        case FeatureVariant::Mlr6: return 6;
        case FeatureVariant::Extended8: return 8;
    }
    return 0;
}

inline std::string_view to_string(FeatureVariant v) {
    switch (v) {
        case FeatureVariant::Full7: return "full7";
        case FeatureVariant::Mlr6: return "mlr6";
        case FeatureVariant::Extended8: return "extended8";
    }
    return "?";
}

inline FeatureVariant parse_feature_variant(std::string_view s) {
    if (s == "full7") return FeatureVariant::Full7;
    if (s == "mlr6") return FeatureVariant::Mlr6;
    if (s == "extended8") return FeatureVariant::Extended8;
    throw ConfigError("unknown feature variant '" + std::string(s) + "'");
}

/// Positions of the three forecast-level covariates inside every variant.
inline constexpr std::size_t kEnsMeanIndex = 0;
inline constexpr std::size_t kCtrlIndex = 1;
inline constexpr std::size_t kHresIndex = 2;

struct FeatureVector {
    double ens_mean = 0.0;
    double ctrl = 0.0;
    double hres = 0.0;
    double variance = 0.0;
    double p_zero = 0.0;
    double p_one = 0.0;
    double interaction = 0.0;
    std::optional<double> precip_mean;
    /// Mean deviation of (hres, ctrl, ens_mean) from 0.5; kept for inspection.
    double mean_deviation = 0.0;
    FeatureVariant variant = FeatureVariant::Full7;

    std::size_t dimension() const { return feature_dimension(variant); }

    /// Dense predictor vector in the variant's coordinate order.
    std::vector<double> values() const {
        std::vector<double> x{ens_mean, ctrl, hres, variance, p_zero, p_one};
        if (variant != FeatureVariant::Mlr6) x.push_back(interaction);
        if (variant == FeatureVariant::Extended8) x.push_back(*precip_mean);
        return x;
    }
};

inline double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

inline FeatureVector extract_features(const EnsembleForecast& fc, FeatureVariant variant) {
    if (variant == FeatureVariant::Extended8 && !fc.precip_mean)
        throw MissingCovariateError("extended feature set requires the precipitation ensemble mean");

    FeatureVector f;
    f.variant = variant;
    f.hres = fc.hres;
    f.ctrl = fc.ctrl;

    // Summing the exchangeable members in sorted order makes every feature
    // bit-identical under any permutation of them.
    auto members = fc.members;
    std::sort(members.begin(), members.end());
    double ens_sum = 0.0;
    for (double m : members) ens_sum += m;
    f.ens_mean = ens_sum / static_cast<double>(kNumExchangeable);

    const double n = static_cast<double>(kNumMembers);
    std::size_t zeros = (fc.hres == 0.0) + (fc.ctrl == 0.0), ones = (fc.hres == 1.0) + (fc.ctrl == 1.0);
    for (double m : members) {
        zeros += (m == 0.0);
        ones += (m == 1.0);
    }
    const double mean = (fc.hres + fc.ctrl + ens_sum) / n;
    double ss = (fc.hres - mean) * (fc.hres - mean) + (fc.ctrl - mean) * (fc.ctrl - mean);
    for (double m : members) ss += (m - mean) * (m - mean);
    f.variance = ss / (n - 1.0);
    f.p_zero = static_cast<double>(zeros) / n;
    f.p_one = static_cast<double>(ones) / n;

    f.mean_deviation = ((f.hres - 0.5) + (f.ctrl - 0.5) + (f.ens_mean - 0.5)) / 3.0;
    f.interaction = f.variance * sign(f.mean_deviation) * f.mean_deviation * f.mean_deviation;
    if (variant == FeatureVariant::Extended8) f.precip_mean = fc.precip_mean;
    return f;
}

/// Row-major design matrix of feature vectors sharing one variant.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    static FeatureMatrix from_features(const std::vector<FeatureVector>& fs) {
        if (fs.empty()) return {};
        FeatureMatrix m(fs.size(), fs.front().dimension());
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const auto v = fs[i].values();
            if (v.size() != m.cols_) throw DimensionMismatch("mixed feature variants in one matrix");
            std::copy(v.begin(), v.end(), m.row(i).begin());
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    /// Subset of rows, in the given order.
    FeatureMatrix select(std::span<const std::size_t> idx) const {
        FeatureMatrix out(idx.size(), cols_);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto src = row(idx[r]);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        return out;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Labelled training data: one feature row and one okta label per case.
struct LabeledData {
    FeatureMatrix x;
    std::vector<OktaIndex> y;

    std::size_t size() const noexcept { return y.size(); }

    LabeledData select(std::span<const std::size_t> idx) const {
        LabeledData out{x.select(idx), {}};
        out.y.reserve(idx.size());
        for (std::size_t i : idx) out.y.push_back(y[i]);
        return out;
    }
};

inline void check_training_data(const LabeledData& d) {
    if (d.size() == 0) throw EmptyDataError("empty training set");
    if (d.x.rows() != d.y.size()) throw DimensionMismatch("feature rows and labels differ in count");
    if (!d.x.all_finite()) throw DomainError("non-finite feature value in training data");
    for (OktaIndex k : d.y)
        if (k >= kNumOktas) throw DomainError("label outside okta range");
}

/// Empirical class frequencies of a label vector.
inline std::array<double, kNumOktas> class_frequencies(std::span<const OktaIndex> y) {
    std::array<double, kNumOktas> f{};
    for (OktaIndex k : y) f[k] += 1.0;
    for (double& v : f) v /= static_cast<double>(y.size());
    return f;
}

}  // namespace oktacal
