#pragma once

// Two-hidden-layer perceptron (10 and 15 tanh units, softmax over the nine
// oktas) trained on L2-regularized cross-entropy with early stopping on a
// random validation split.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/linear_models.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

inline constexpr std::size_t kHidden1 = 10;
inline constexpr std::size_t kHidden2 = 15;

/// Offsets of each weight/bias block inside the flat parameter vector.
struct MlpLayout {
    std::size_t input = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, total = 0;

    explicit MlpLayout(std::size_t m) : input(m) {
        w1 = 0;
        b1 = w1 + kHidden1 * m;
        w2 = b1 + kHidden1;
        b2 = w2 + kHidden2 * kHidden1;
        w3 = b2 + kHidden2;
        b3 = w3 + kNumOktas * kHidden2;
        total = b3 + kNumOktas;
    }

    std::size_t weight_count() const { return total - kHidden1 - kHidden2 - kNumOktas; }

    bool is_weight(std::size_t i) const {
        return (i >= w1 && i < b1) || (i >= w2 && i < b2) || (i >= w3 && i < b3);
    }
};

struct MlpModel {
    FeatureVariant variant = FeatureVariant::Full7;
    std::size_t input_dim = 7;
    std::vector<double> params;
    Standardizer standardizer;
    double l2_factor = 0.1;
    std::uint64_t seed = 0;

    MlpLayout layout() const { return MlpLayout(input_dim); }

    static MlpModel zeros(FeatureVariant v) {
        MlpModel m;
        m.variant = v;
        m.input_dim = feature_dimension(v);
        m.params.assign(MlpLayout(m.input_dim).total, 0.0);
        m.standardizer.mean.assign(m.input_dim, 0.0);
        m.standardizer.scale.assign(m.input_dim, 1.0);
        return m;
    }
};

namespace detail {

struct MlpActivations {
    std::array<double, kHidden1> h1{};
    std::array<double, kHidden2> h2{};
    std::array<double, kNumOktas> logits{};
    std::array<double, kNumOktas> probs{};
};

/// Forward pass on an already standardized input.
inline void mlp_forward_z(std::span<const double> p, const MlpLayout& L, std::span<const double> z,
                          MlpActivations& a) {
    const std::size_t m = L.input;
    for (std::size_t u = 0; u < kHidden1; ++u) {
        double s = p[L.b1 + u];
        const double* w = p.data() + L.w1 + u * m;
        for (std::size_t j = 0; j < m; ++j) s += w[j] * z[j];
        a.h1[u] = std::tanh(s);
    }
    for (std::size_t u = 0; u < kHidden2; ++u) {
        double s = p[L.b2 + u];
        const double* w = p.data() + L.w2 + u * kHidden1;
        for (std::size_t j = 0; j < kHidden1; ++j) s += w[j] * a.h1[j];
        a.h2[u] = std::tanh(s);
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kNumOktas; ++c) {
        double s = p[L.b3 + c];
        const double* w = p.data() + L.w3 + c * kHidden2;
        for (std::size_t j = 0; j < kHidden2; ++j) s += w[j] * a.h2[j];
        a.logits[c] = s;
        mx = std::max(mx, s);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumOktas; ++c) sum += (a.probs[c] = std::exp(a.logits[c] - mx));
    for (double& v : a.probs) v /= sum;
}

/// Accumulates d(-log p_y)/d(params) into grad.
inline void mlp_backward_z(std::span<const double> p, const MlpLayout& L, std::span<const double> z,
                           const MlpActivations& a, OktaIndex y, std::span<double> grad) {
    const std::size_t m = L.input;
    std::array<double, kNumOktas> d3{};
    for (std::size_t c = 0; c < kNumOktas; ++c) d3[c] = a.probs[c] - (c == y ? 1.0 : 0.0);
    std::array<double, kHidden2> d2{};
    for (std::size_t c = 0; c < kNumOktas; ++c) {
        grad[L.b3 + c] += d3[c];
        double* g = grad.data() + L.w3 + c * kHidden2;
        const double* w = p.data() + L.w3 + c * kHidden2;
        for (std::size_t j = 0; j < kHidden2; ++j) {
            g[j] += d3[c] * a.h2[j];
            d2[j] += d3[c] * w[j];
        }
    }
    std::array<double, kHidden1> d1{};
    for (std::size_t u = 0; u < kHidden2; ++u) {
        const double du = d2[u] * (1.0 - a.h2[u] * a.h2[u]);
        grad[L.b2 + u] += du;
        double* g = grad.data() + L.w2 + u * kHidden1;
        const double* w = p.data() + L.w2 + u * kHidden1;
        for (std::size_t j = 0; j < kHidden1; ++j) {
            g[j] += du * a.h1[j];
            d1[j] += du * w[j];
        }
    }
    for (std::size_t u = 0; u < kHidden1; ++u) {
        const double du = d1[u] * (1.0 - a.h1[u] * a.h1[u]);
        grad[L.b1 + u] += du;
        double* g = grad.data() + L.w1 + u * m;
        for (std::size_t j = 0; j < m; ++j) g[j] += du * z[j];
    }
}

}  // namespace detail

/// Raw output-layer scores for x (before softmax).
inline std::array<double, kNumOktas> mlp_logits(const MlpModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim) throw DimensionMismatch("MLP feature dimension mismatch");
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        z[j] = (x[j] - model.standardizer.mean[j]) / model.standardizer.scale[j];
    detail::MlpActivations a;
    detail::mlp_forward_z(model.params, model.layout(), z, a);
    return a.logits;
}

inline Pmf mlp_forward(const MlpModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim) throw DimensionMismatch("MLP feature dimension mismatch");
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        z[j] = (x[j] - model.standardizer.mean[j]) / model.standardizer.scale[j];
    detail::MlpActivations a;
    detail::mlp_forward_z(model.params, model.layout(), z, a);
    return Pmf::from_weights(a.probs);
}

inline Pmf mlp_forward(const MlpModel& model, const FeatureVector& f) {
    if (f.variant != model.variant) throw DimensionMismatch("feature variant differs from MLP model");
    const auto x = f.values();
    return mlp_forward(model, x);
}

/// Mean cross-entropy over standardized rows `idx` of z, plus
/// l2_factor * mean(squared weights); biases are not penalized. The gradient
/// is written to grad when it is non-empty.
inline double mlp_loss(std::span<const double> params, std::size_t input_dim, const FeatureMatrix& z,
                       std::span<const OktaIndex> y, std::span<const std::size_t> idx, double l2_factor,
                       std::span<double> grad) {
    const MlpLayout L(input_dim);
    const bool want_grad = !grad.empty();
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    detail::MlpActivations a;
    double ce = 0.0;
    for (std::size_t i : idx) {
        detail::mlp_forward_z(params, L, z.row(i), a);
        ce -= std::log(std::max(a.probs[y[i]], std::numeric_limits<double>::min()));
        if (want_grad) detail::mlp_backward_z(params, L, z.row(i), a, y[i], grad);
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    ce *= inv;
    if (want_grad)
        for (double& g : grad) g *= inv;
    if (l2_factor > 0.0) {
        const double per = l2_factor / static_cast<double>(L.weight_count());
        double pen = 0.0;
        for (std::size_t i = 0; i < L.total; ++i) {
            if (!L.is_weight(i)) continue;
            pen += params[i] * params[i];
            if (want_grad) grad[i] += 2.0 * per * params[i];
        }
        ce += per * pen;
    }
    return ce;
}

struct MlpConfig {
    double l2_factor = 0.1;
    double val_fraction = 0.15;
    int patience = 25;
    int max_epochs = 300;
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
};

struct MlpTrainReport {
    int epochs_run = 0;
    int best_epoch = 0;  ///< 0 means the initialization was never beaten
    double init_val_loss = 0.0;
    double best_val_loss = 0.0;
    std::vector<double> val_history;  ///< validation CE per epoch, index 0 = initialization
    int step_halvings = 0;
    std::vector<std::size_t> fit_rows, val_rows;
};

inline MlpModel mlp_init(FeatureVariant variant, std::size_t input_dim, std::mt19937_64& rng) {
    MlpModel model;
    model.variant = variant;
    model.input_dim = input_dim;
    const MlpLayout L(input_dim);
    model.params.assign(L.total, 0.0);
    auto fill = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
        const double lim = std::sqrt(3.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-lim, lim);
        for (std::size_t i = 0; i < count; ++i) model.params[off + i] = u(rng);
    };
    fill(L.w1, kHidden1 * input_dim, input_dim);
    fill(L.w2, kHidden2 * kHidden1, kHidden1);
    fill(L.w3, kNumOktas * kHidden2, kHidden2);
    return model;
}

inline MlpModel mlp_train(const LabeledData& train, FeatureVariant variant, const MlpConfig& cfg = {},
                          MlpTrainReport* report = nullptr) {
    check_training_data(train);
    const std::size_t n = train.size(), m = train.x.cols();
    if (m != feature_dimension(variant)) throw DimensionMismatch("training matrix does not match variant");
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
    if (n_val == 0 || n_val >= n) throw EmptyDataError("training/validation split leaves an empty part");

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> val_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> fit_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(fit_rows.begin(), fit_rows.end());

    // Standardize with statistics of the fitting part only.
    MlpModel model = mlp_init(variant, m, rng);
    model.standardizer = Standardizer::fit(train.x.select(fit_rows));
    model.l2_factor = cfg.l2_factor;
    model.seed = cfg.seed;
    const auto z = model.standardizer.apply(train.x);
    const std::size_t P = model.params.size();

    auto val_loss = [&](std::span<const double> p) {
        return mlp_loss(p, m, z, train.y, val_rows, 0.0, {});
    };

    std::vector<double> best = model.params;
    double best_val = val_loss(model.params);
    MlpTrainReport rep;
    rep.init_val_loss = best_val;
    rep.val_history.push_back(best_val);

    // Adam state.
    std::vector<double> m1(P, 0.0), m2(P, 0.0), grad(P);
    double lr = cfg.learning_rate;
    long step = 0;
    int since_improvement = 0;
    const int stop_after = std::max(cfg.patience, 1);
    std::vector<std::size_t> order = fit_rows;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto saved_params = model.params;
        const auto saved_m1 = m1, saved_m2 = m2;
        const long saved_step = step;
        std::shuffle(order.begin(), order.end(), rng);
        bool finite = true;
        for (std::size_t start = 0; start < order.size() && finite; start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            const double loss = mlp_loss(model.params, m, z, train.y, batch, cfg.l2_factor, grad);
            if (!std::isfinite(loss)) {
                finite = false;
                break;
            }
            ++step;
            const double c1 = 1.0 - std::pow(0.9, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(0.999, static_cast<double>(step));
            for (std::size_t i = 0; i < P; ++i) {
                m1[i] = 0.9 * m1[i] + 0.1 * grad[i];
                m2[i] = 0.999 * m2[i] + 0.001 * grad[i] * grad[i];
                model.params[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + 1e-8);
            }
        }
        double v = finite ? val_loss(model.params) : 0.0;
        if (!finite || !std::isfinite(v)) {
            // Diverged: halve the step and redo the epoch from its start.
            model.params = saved_params;
            m1 = saved_m1;
            m2 = saved_m2;
            step = saved_step;
            lr *= 0.5;
            ++rep.step_halvings;
            --epoch;
            if (rep.step_halvings > 30) throw Error("MLP training diverged");
            continue;
        }
        rep.val_history.push_back(v);
        rep.epochs_run = epoch;
        if (v < best_val) {
            best_val = v;
            best = model.params;
            rep.best_epoch = epoch;
            since_improvement = 0;
        } else if (++since_improvement >= stop_after) {
            break;
        }
    }
    model.params = std::move(best);
    rep.best_val_loss = best_val;
    rep.fit_rows = std::move(fit_rows);
    rep.val_rows = std::move(val_rows);
    if (report) *report = std::move(rep);
    return model;
}

}  // namespace oktacal
