#pragma once

// Multiclass logistic regression (reference class: the last okta) and
// proportional odds logistic regression, both fitted by maximum likelihood.
//
// POLR sign convention: P(Y <= y_k | x) = logistic(cut_k - x'slope), so a
// positive slope entry moves mass towards higher oktas. The non-negativity
// constraint on the forecast covariates therefore reads "more forecast cloud
// never predicts less observed cloud".

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/okta.hpp"
#include "oktacal/optimize.hpp"

namespace oktacal {

inline constexpr std::size_t kNumLogits = kNumOktas - 1;

struct FitConfig {
    double l2 = 0.0;  ///< penalty on slope coefficients (intercepts/cutpoints are free)
    MinimizeOptions optimizer{};
};

struct FitReport {
    MinimizeResult optimizer;
    int refits = 1;
};

inline double logistic(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

/// Per-feature shift/scale used to condition the optimization; constant
/// columns get scale 1.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const FeatureMatrix& x) {
        Standardizer s;
        const std::size_t m = x.cols(), n = x.rows();
        s.mean.assign(m, 0.0);
        s.scale.assign(m, 1.0);
        for (std::size_t j = 0; j < m; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
            mu /= static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - mu) * (x(i, j) - mu);
            const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
            s.mean[j] = mu;
            s.scale[j] = sd > 1e-12 ? sd : 1.0;
        }
        return s;
    }

    FeatureMatrix apply(const FeatureMatrix& x) const {
        FeatureMatrix z(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = (x(i, j) - mean[j]) / scale[j];
        return z;
    }
};

// ---------------------------------------------------------------------------
// MLR

struct MlrModel {
    std::array<double, kNumLogits> intercepts{};
    std::vector<double> weights;  ///< kNumLogits x dim, class-major
    FeatureVariant variant = FeatureVariant::Mlr6;
    std::size_t dim = 6;

    static MlrModel zeros(FeatureVariant v) {
        MlrModel m;
        m.variant = v;
        m.dim = feature_dimension(v);
        m.weights.assign(kNumLogits * m.dim, 0.0);
        return m;
    }

    std::size_t parameter_count() const { return kNumLogits * (dim + 1); }
    double weight(std::size_t k, std::size_t j) const { return weights[k * dim + j]; }

    /// L_k(x) for the eight non-reference classes.
    std::array<double, kNumLogits> log_odds(std::span<const double> x) const {
        if (x.size() != dim) throw DimensionMismatch("MLR feature dimension mismatch");
        std::array<double, kNumLogits> l{};
        for (std::size_t k = 0; k < kNumLogits; ++k) {
            double v = intercepts[k];
            for (std::size_t j = 0; j < dim; ++j) v += weights[k * dim + j] * x[j];
            l[k] = v;
        }
        return l;
    }
};

namespace detail {

/// Softmax over (l_1..l_8, 0) with max subtraction.
inline std::array<double, kNumOktas> mlr_probs(const std::array<double, kNumLogits>& l) {
    double mx = 0.0;
    for (double v : l) mx = std::max(mx, v);
    std::array<double, kNumOktas> p{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumLogits; ++k) sum += (p[k] = std::exp(l[k] - mx));
    sum += (p[kNumLogits] = std::exp(-mx));
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace detail

inline Pmf mlr_predict(const MlrModel& model, std::span<const double> x) {
    return Pmf(detail::mlr_probs(model.log_odds(x)));
}

inline Pmf mlr_predict(const MlrModel& model, const FeatureVector& f) {
    if (f.variant != model.variant) throw DimensionMismatch("feature variant differs from MLR model");
    const auto x = f.values();
    return mlr_predict(model, x);
}

/// Mean negative log-likelihood of the MLR parameter vector
/// [b_01, beta_1, b_02, beta_2, ..., b_08, beta_8] and its gradient.
inline double mlr_nll(std::span<const double> params, const FeatureMatrix& x,
                      std::span<const OktaIndex> y, std::span<double> grad) {
    const std::size_t m = x.cols(), stride = m + 1, n = x.rows();
    std::fill(grad.begin(), grad.end(), 0.0);
    double nll = 0.0;
    std::array<double, kNumLogits> l{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        for (std::size_t k = 0; k < kNumLogits; ++k) {
            const double* b = params.data() + k * stride;
            double v = b[0];
            for (std::size_t j = 0; j < m; ++j) v += b[j + 1] * xi[j];
            l[k] = v;
        }
        const auto p = detail::mlr_probs(l);
        nll -= std::log(std::max(p[y[i]], std::numeric_limits<double>::min()));
        for (std::size_t k = 0; k < kNumLogits; ++k) {
            const double r = p[k] - (y[i] == k ? 1.0 : 0.0);
            double* gk = grad.data() + k * stride;
            gk[0] += r;
            for (std::size_t j = 0; j < m; ++j) gk[j + 1] += r * xi[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& g : grad) g *= inv;
    return nll * inv;
}

inline MlrModel mlr_fit(const LabeledData& train, FeatureVariant variant, const FitConfig& cfg = {},
                        FitReport* report = nullptr) {
    check_training_data(train);
    const std::size_t m = train.x.cols();
    if (m != feature_dimension(variant)) throw DimensionMismatch("training matrix does not match variant");
    const auto stdz = Standardizer::fit(train.x);
    const auto z = stdz.apply(train.x);
    const std::size_t stride = m + 1;

    auto objective = [&](std::span<const double> a, std::span<double> g) {
        double f = mlr_nll(a, z, train.y, g);
        if (cfg.l2 > 0.0) {
            for (std::size_t k = 0; k < kNumLogits; ++k)
                for (std::size_t j = 0; j < m; ++j) {
                    const double s = stdz.scale[j];
                    const double alpha = a[k * stride + j + 1];
                    f += cfg.l2 * (alpha / s) * (alpha / s);
                    g[k * stride + j + 1] += 2.0 * cfg.l2 * alpha / (s * s);
                }
        }
        return f;
    };
    auto res = minimize_lbfgs(objective, std::vector<double>(kNumLogits * stride, 0.0), cfg.optimizer);

    MlrModel model = MlrModel::zeros(variant);
    for (std::size_t k = 0; k < kNumLogits; ++k) {
        double b0 = res.x[k * stride];
        for (std::size_t j = 0; j < m; ++j) {
            const double beta = res.x[k * stride + j + 1] / stdz.scale[j];
            model.weights[k * m + j] = beta;
            b0 -= beta * stdz.mean[j];
        }
        model.intercepts[k] = b0;
    }
    if (report) report->optimizer = std::move(res);
    return model;
}

// ---------------------------------------------------------------------------
// POLR

struct PolrModel {
    /// Cut points of the cumulative logits; the ninth is +infinity.
    std::array<double, kNumOktas> cutpoints{};
    std::vector<double> slope;          ///< zero at excluded positions
    std::vector<std::size_t> excluded;  ///< covariates removed by the sign constraint
    FeatureVariant variant = FeatureVariant::Full7;
    std::size_t dim = 7;

    std::size_t parameter_count() const { return kNumOktas + dim; }

    /// P(Y <= y_k | x), k = 1..9.
    std::array<double, kNumOktas> cdf(std::span<const double> x) const {
        if (x.size() != dim) throw DimensionMismatch("POLR feature dimension mismatch");
        double eta = 0.0;
        for (std::size_t j = 0; j < dim; ++j) eta += slope[j] * x[j];
        std::array<double, kNumOktas> c{};
        for (std::size_t k = 0; k < kNumLogits; ++k) c[k] = logistic(cutpoints[k] - eta);
        c[kNumLogits] = 1.0;
        return c;
    }
};

namespace detail {

/// logistic(u) - logistic(l) for l <= u without cancellation in either tail.
inline double logistic_diff(double l, double u) {
    if (u == std::numeric_limits<double>::infinity()) return logistic(-l);
    if (l == -std::numeric_limits<double>::infinity()) return logistic(u);
    if (l >= 0.0) return logistic(-l) - logistic(-u);
    return logistic(u) - logistic(l);
}

}  // namespace detail

inline Pmf polr_predict(const PolrModel& model, std::span<const double> x) {
    if (x.size() != model.dim) throw DimensionMismatch("POLR feature dimension mismatch");
    double eta = 0.0;
    for (std::size_t j = 0; j < model.dim; ++j) eta += model.slope[j] * x[j];
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::array<double, kNumOktas> p{};
    double lower = -inf;
    for (std::size_t k = 0; k < kNumOktas; ++k) {
        const double upper = k < kNumLogits ? model.cutpoints[k] - eta : inf;
        p[k] = std::max(0.0, detail::logistic_diff(lower, upper));
        lower = upper;
    }
    return Pmf::from_weights(p);
}

inline Pmf polr_predict(const PolrModel& model, const FeatureVector& f) {
    if (f.variant != model.variant) throw DimensionMismatch("feature variant differs from POLR model");
    const auto x = f.values();
    return polr_predict(model, x);
}

/// Cut points from the unconstrained parametrization (first cut, log increments).
inline std::array<double, kNumLogits> polr_cutpoints(std::span<const double> params) {
    std::array<double, kNumLogits> c{};
    c[0] = params[0];
    for (std::size_t k = 1; k < kNumLogits; ++k) c[k] = c[k - 1] + std::exp(params[k]);
    return c;
}

/// Mean negative log-likelihood of POLR in the parametrization
/// [cut_1, log(cut_2 - cut_1), ..., log(cut_8 - cut_7), slope_1..slope_m]
/// and its gradient.
inline double polr_nll(std::span<const double> params, const FeatureMatrix& x,
                       std::span<const OktaIndex> y, std::span<double> grad) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t m = x.cols(), n = x.rows();
    const auto cut = polr_cutpoints(params);
    std::fill(grad.begin(), grad.end(), 0.0);
    std::array<double, kNumLogits> dcut{};
    double nll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        double eta = 0.0;
        for (std::size_t j = 0; j < m; ++j) eta += params[kNumLogits + j] * xi[j];
        const std::size_t k = y[i];
        const double u = k < kNumLogits ? cut[k] - eta : inf;
        const double l = k > 0 ? cut[k - 1] - eta : -inf;
        const double p = std::max(detail::logistic_diff(l, u), std::numeric_limits<double>::min());
        nll -= std::log(p);
        const double fu = std::isinf(u) ? 0.0 : logistic(u) * logistic(-u);
        const double fl = std::isinf(l) ? 0.0 : logistic(l) * logistic(-l);
        if (k < kNumLogits) dcut[k] -= fu / p;
        if (k > 0) dcut[k - 1] += fl / p;
        const double deta = (fu - fl) / p;
        for (std::size_t j = 0; j < m; ++j) grad[kNumLogits + j] += deta * xi[j];
    }
    // Chain rule through cut_k = cut_1 + sum_{j<=k} exp(params_j).
    double tail = 0.0;
    for (std::size_t k = kNumLogits; k-- > 1;) {
        tail += dcut[k];
        grad[k] = tail * std::exp(params[k]);
    }
    grad[0] = tail + dcut[0];
    const double inv = 1.0 / static_cast<double>(n);
    for (double& g : grad) g *= inv;
    return nll * inv;
}

namespace detail {

/// Plain ML fit of POLR on the covariate columns listed in `active`.
inline PolrModel polr_fit_active(const LabeledData& train, FeatureVariant variant,
                                 const std::vector<std::size_t>& active, const FitConfig& cfg,
                                 MinimizeResult* result) {
    const std::size_t n = train.size(), m_all = train.x.cols(), m = active.size();
    FeatureMatrix xa(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) xa(i, j) = train.x(i, active[j]);
    const auto stdz = Standardizer::fit(xa);
    const auto z = stdz.apply(xa);

    // Start from the smoothed marginal cumulative logits, zero slope.
    std::array<double, kNumOktas> counts{};
    for (OktaIndex k : train.y) counts[k] += 1.0;
    std::vector<double> a0(kNumLogits + m, 0.0);
    double cum = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < kNumLogits; ++k) {
        cum += counts[k] + 0.5;
        const double q = cum / (static_cast<double>(n) + 0.5 * kNumOktas);
        const double c = std::log(q / (1.0 - q));
        a0[k] = k == 0 ? c : std::log(c - prev);
        prev = c;
    }

    auto objective = [&](std::span<const double> a, std::span<double> g) {
        double f = polr_nll(a, z, train.y, g);
        if (cfg.l2 > 0.0)
            for (std::size_t j = 0; j < m; ++j) {
                const double s = stdz.scale[j], alpha = a[kNumLogits + j];
                f += cfg.l2 * (alpha / s) * (alpha / s);
                g[kNumLogits + j] += 2.0 * cfg.l2 * alpha / (s * s);
            }
        return f;
    };
    auto res = minimize_lbfgs(objective, std::move(a0), cfg.optimizer);

    PolrModel model;
    model.variant = variant;
    model.dim = m_all;
    model.slope.assign(m_all, 0.0);
    double shift = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double gamma = res.x[kNumLogits + j] / stdz.scale[j];
        model.slope[active[j]] = gamma;
        shift += gamma * stdz.mean[j];
    }
    const auto cz = polr_cutpoints(res.x);
    for (std::size_t k = 0; k < kNumLogits; ++k) model.cutpoints[k] = cz[k] + shift;
    model.cutpoints[kNumLogits] = std::numeric_limits<double>::infinity();
    if (result) *result = std::move(res);
    return model;
}

}  // namespace detail

/// Maximum-likelihood POLR. While a covariate listed in `nonneg` has a
/// negative slope, the most negative one is dropped and the model refitted.
inline PolrModel polr_fit(const LabeledData& train, FeatureVariant variant, const FitConfig& cfg,
                          const std::vector<std::size_t>& nonneg, FitReport* report = nullptr) {
    check_training_data(train);
    const std::size_t m = train.x.cols();
    if (m != feature_dimension(variant)) throw DimensionMismatch("training matrix does not match variant");
    for (std::size_t j : nonneg)
        if (j >= m) throw DimensionMismatch("non-negativity index outside feature range");

    std::vector<std::size_t> active(m);
    for (std::size_t j = 0; j < m; ++j) active[j] = j;
    std::vector<std::size_t> excluded;
    MinimizeResult last;
    int refits = 0;
    for (;;) {
        PolrModel model = detail::polr_fit_active(train, variant, active, cfg, &last);
        ++refits;
        std::size_t worst = m;
        double worst_value = 0.0;
        for (std::size_t j : nonneg) {
            if (std::find(active.begin(), active.end(), j) == active.end()) continue;
            if (model.slope[j] < worst_value) {
                worst_value = model.slope[j];
                worst = j;
            }
        }
        if (worst == m) {
            std::sort(excluded.begin(), excluded.end());
            model.excluded = excluded;
            if (report) {
                report->optimizer = std::move(last);
                report->refits = refits;
            }
            return model;
        }
        excluded.push_back(worst);
        active.erase(std::find(active.begin(), active.end(), worst));
    }
}

/// The forecast-level covariates constrained to non-negative POLR slopes.
inline std::vector<std::size_t> default_polr_nonneg() { return {kEnsMeanIndex, kCtrlIndex, kHresIndex}; }

}  // namespace oktacal
