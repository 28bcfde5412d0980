#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "oktacal/cart.hpp"
#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

struct RfParams {
    std::size_t n_trees = 500;
    int depth = 3;
    std::size_t mtry = 2;
    std::uint64_t seed = 1;
    double min_leaf = 1.0;
    bool bootstrap = true;  ///< false grows every tree on the full training set
};

struct RfModel {
    std::vector<ClassificationTree> trees;
    RfParams params;
    FeatureVariant variant = FeatureVariant::Full7;
    std::size_t dim = 7;
};

/// Per-tree random stream derived from the forest seed and the tree index.
inline std::mt19937_64 tree_stream(std::uint64_t seed, std::size_t tree) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tree), 0x5eedu};
    return std::mt19937_64(seq);
}

/// Bootstrap multiplicities (same size as the data, drawn with replacement).
inline std::vector<double> bootstrap_weights(std::size_t n, std::mt19937_64& rng) {
    std::vector<double> w(n, 0.0);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) w[pick(rng)] += 1.0;
    return w;
}

/// Grows one tree per entry of `resamples` (row multiplicities).
inline RfModel rf_fit_from_resamples(const LabeledData& train, FeatureVariant variant, const RfParams& params,
                                     const std::vector<std::vector<double>>& resamples) {
    check_training_data(train);
    const SortedColumns cols(train.x);
    RfModel model;
    model.params = params;
    model.variant = variant;
    model.dim = train.x.cols();
    model.trees.reserve(resamples.size());
    const TreeParams tp{params.depth, params.mtry, params.min_leaf};
    for (std::size_t t = 0; t < resamples.size(); ++t) {
        // Separate stream for feature subsampling so the resample draw and
        // the split sampling stay independent of each other.
        auto rng = tree_stream(params.seed ^ 0x9e3779b97f4a7c15ull, t);
        model.trees.push_back(grow_classification_tree(cols, train.y, resamples[t], tp, rng));
    }
    return model;
}

inline RfModel rf_fit(const LabeledData& train, FeatureVariant variant, const RfParams& params) {
    check_training_data(train);
    if (params.n_trees == 0) throw ConfigError("random forest needs at least one tree");
    std::vector<std::vector<double>> resamples;
    resamples.reserve(params.n_trees);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
        if (params.bootstrap) {
            auto rng = tree_stream(params.seed, t);
            resamples.push_back(bootstrap_weights(train.size(), rng));
        } else {
            resamples.emplace_back(train.size(), 1.0);
        }
    }
    return rf_fit_from_resamples(train, variant, params, resamples);
}

/// Unweighted mean of the trees' leaf class frequencies.
inline Pmf rf_predict(const RfModel& model, std::span<const double> x) {
    if (x.size() != model.dim) throw DimensionMismatch("RF feature dimension mismatch");
    std::array<double, kNumOktas> acc{};
    for (const auto& tree : model.trees) {
        const auto& f = tree.predict(x);
        for (std::size_t k = 0; k < kNumOktas; ++k) acc[k] += f[k];
    }
    return Pmf::from_weights(acc);
}

inline Pmf rf_predict(const RfModel& model, const FeatureVector& f) {
    if (f.variant != model.variant) throw DimensionMismatch("feature variant differs from RF model");
    const auto x = f.values();
    return rf_predict(model, x);
}

}  // namespace oktacal
