#pragma once

// Multiclass gradient boosting: one regression tree per okta and round,
// fitted on second-order statistics of the softmax cross-entropy, shrunk by
// the learning rate and stopped early on validation LogS.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "oktacal/cart.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

struct GbmParams {
    int depth = 1;
    double learning_rate = 0.1;
    int early_stop_rounds = 25;
    int max_rounds = 1000;
    double ridge = 1e-6;
    double min_leaf = 1.0;
};

struct GbmModel {
    std::array<double, kNumOktas> base_scores{};
    double learning_rate = 0.1;
    int depth = 1;
    std::vector<std::array<RegressionTree, kNumOktas>> rounds;  ///< kept rounds, M = rounds.size()
    FeatureVariant variant = FeatureVariant::Full7;
    std::size_t dim = 7;

    std::size_t boosting_rounds() const { return rounds.size(); }

    std::array<double, kNumOktas> latent(std::span<const double> x) const {
        if (x.size() != dim) throw DimensionMismatch("GBM feature dimension mismatch");
        std::array<double, kNumOktas> z{};
        for (std::size_t c = 0; c < kNumOktas; ++c) {
            double s = 0.0;
            for (const auto& round : rounds) s += round[c].predict(x);
            z[c] = base_scores[c] + learning_rate * s;
        }
        return z;
    }
};

struct GbmFitReport {
    int rounds_run = 0;
    int best_round = 0;  ///< 1-based; equals the kept M
    std::vector<double> val_logs;    ///< validation mean LogS after each round
    std::vector<double> train_logs;  ///< training mean LogS, index 0 = base scores only
};

inline std::array<double, kNumOktas> softmax(const std::array<double, kNumOktas>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::array<double, kNumOktas> p{};
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumOktas; ++c) sum += (p[c] = std::exp(z[c] - mx));
    for (double& v : p) v /= sum;
    return p;
}

inline Pmf gbm_predict(const GbmModel& model, std::span<const double> x) {
    return Pmf::from_weights(softmax(model.latent(x)));
}

inline Pmf gbm_predict(const GbmModel& model, const FeatureVector& f) {
    if (f.variant != model.variant) throw DimensionMismatch("feature variant differs from GBM model");
    const auto x = f.values();
    return gbm_predict(model, x);
}

namespace detail {

inline double mean_cross_entropy(const std::vector<std::array<double, kNumOktas>>& latent,
                                 std::span<const OktaIndex> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto& z = latent[i];
        const double mx = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - mx);
        s += mx + std::log(lse) - z[y[i]];
    }
    return s / static_cast<double>(y.size());
}

/// Core boosting loop. With `val` null the loop runs exactly `fixed_rounds`.
inline GbmModel gbm_boost(const LabeledData& train, const LabeledData* val, FeatureVariant variant,
                          const GbmParams& params, int fixed_rounds, GbmFitReport* report) {
    check_training_data(train);
    if (val) check_training_data(*val);
    if (val && val->x.cols() != train.x.cols()) throw DimensionMismatch("train/validation dimensions differ");
    const std::size_t n = train.size();

    GbmModel model;
    model.learning_rate = params.learning_rate;
    model.depth = params.depth;
    model.variant = variant;
    model.dim = train.x.cols();
    const auto freq = class_frequencies(train.y);
    for (std::size_t c = 0; c < kNumOktas; ++c) model.base_scores[c] = std::log(std::max(freq[c], 1e-9));

    std::vector<std::array<double, kNumOktas>> z_train(n, model.base_scores);
    std::vector<std::array<double, kNumOktas>> z_val(val ? val->size() : 0, model.base_scores);

    const SortedColumns cols(train.x);
    const TreeParams tp{params.depth, 0, params.min_leaf};
    std::mt19937_64 rng(0);  // all features are searched; the stream is unused
    std::vector<double> grad(n), hess(n);
    std::vector<std::array<double, kNumOktas>> probs(n);

    GbmFitReport rep;
    rep.train_logs.push_back(mean_cross_entropy(z_train, train.y));
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const int limit = val ? params.max_rounds : fixed_rounds;

    for (int round = 1; round <= limit; ++round) {
        for (std::size_t i = 0; i < n; ++i) probs[i] = softmax(z_train[i]);
        std::array<RegressionTree, kNumOktas> trees;
        for (std::size_t c = 0; c < kNumOktas; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs[i][c];
                grad[i] = p - (train.y[i] == c ? 1.0 : 0.0);
                hess[i] = p * (1.0 - p);
            }
            trees[c] = grow_gradient_tree(cols, grad, hess, tp, rng, params.ridge);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto x = train.x.row(i);
            for (std::size_t c = 0; c < kNumOktas; ++c) z_train[i][c] += params.learning_rate * trees[c].predict(x);
        }
        rep.train_logs.push_back(mean_cross_entropy(z_train, train.y));
        model.rounds.push_back(std::move(trees));
        rep.rounds_run = round;
        if (!val) continue;

        for (std::size_t i = 0; i < val->size(); ++i) {
            const auto x = val->x.row(i);
            for (std::size_t c = 0; c < kNumOktas; ++c)
                z_val[i][c] += params.learning_rate * model.rounds.back()[c].predict(x);
        }
        const double v = mean_cross_entropy(z_val, val->y);
        rep.val_logs.push_back(v);
        if (v < best_val) {
            best_val = v;
            rep.best_round = round;
            since_best = 0;
        } else if (++since_best >= params.early_stop_rounds) {
            break;
        }
    }
    if (val) model.rounds.resize(static_cast<std::size_t>(rep.best_round));
    else rep.best_round = rep.rounds_run;
    if (report) *report = std::move(rep);
    return model;
}

}  // namespace detail

/// Boosts on `train`, early-stopping on validation LogS; keeps the rounds up
/// to the best validation round.
inline GbmModel gbm_fit(const LabeledData& train, const LabeledData& val, FeatureVariant variant,
                        const GbmParams& params, GbmFitReport* report = nullptr) {
    if (params.max_rounds < 1) throw ConfigError("max_rounds must be positive");
    return detail::gbm_boost(train, &val, variant, params, 0, report);
}

/// Boosts for exactly `rounds` rounds without validation.
inline GbmModel gbm_fit_rounds(const LabeledData& train, FeatureVariant variant, const GbmParams& params,
                               int rounds, GbmFitReport* report = nullptr) {
    if (rounds < 1) throw ConfigError("need at least one boosting round");
    return detail::gbm_boost(train, nullptr, variant, params, rounds, report);
}

}  // namespace oktacal
