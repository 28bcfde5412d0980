#pragma once

// Versioned JSON records for trained models. Every record carries
//
//   {"format": "oktacal-model", "version": 1, "family": "<MLR|POLR|MLP|RF|GBM>",
//    "variant": "<full7|mlr6|extended8>", "dim": M, ...family fields}
//
// Doubles are written in shortest round-trip form, so save -> load restores
// every coefficient bit for bit.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/gbm.hpp"
#include "oktacal/linear_models.hpp"
#include "oktacal/mlp.hpp"
#include "oktacal/random_forest.hpp"

namespace oktacal {

using Json = nlohmann::json;

inline constexpr int kModelRecordVersion = 1;

using ClassifierModel = std::variant<MlrModel, PolrModel, MlpModel, RfModel, GbmModel>;

inline const char* family_name(const ClassifierModel& m) {
    static constexpr const char* names[] = {"MLR", "POLR", "MLP", "RF", "GBM"};
    return names[m.index()];
}

inline Pmf predict(const ClassifierModel& model, std::span<const double> x) {
    return std::visit(
        [&](const auto& m) -> Pmf {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, MlrModel>) return mlr_predict(m, x);
            else if constexpr (std::is_same_v<T, PolrModel>) return polr_predict(m, x);
            else if constexpr (std::is_same_v<T, MlpModel>) return mlp_forward(m, x);
            else if constexpr (std::is_same_v<T, RfModel>) return rf_predict(m, x);
            else return gbm_predict(m, x);
        },
        model);
}

inline FeatureVariant model_variant(const ClassifierModel& model) {
    return std::visit([](const auto& m) { return m.variant; }, model);
}

namespace detail {

template <class T>
T get_field(const Json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("model record lacks field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model record field '") + key + "': " + e.what());
    }
}

template <class Leaf>
Json tree_to_json(const CartTree<Leaf>& t) {
    Json feature = Json::array(), threshold = Json::array(), left = Json::array(), right = Json::array(),
         depth = Json::array(), cover = Json::array(), leaf = Json::array();
    for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        depth.push_back(n.depth);
        cover.push_back(n.cover);
        leaf.push_back(n.leaf);
    }
    return {{"max_depth", t.max_depth}, {"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},           {"depth", depth},     {"cover", cover},         {"leaf", leaf}};
}

template <class Leaf>
CartTree<Leaf> tree_from_json(const Json& j, std::size_t dim) {
    CartTree<Leaf> t;
    t.max_depth = get_field<int>(j, "max_depth");
    const auto feature = get_field<std::vector<std::int32_t>>(j, "feature");
    const auto threshold = get_field<std::vector<double>>(j, "threshold");
    const auto left = get_field<std::vector<std::int32_t>>(j, "left");
    const auto right = get_field<std::vector<std::int32_t>>(j, "right");
    const auto depth = get_field<std::vector<std::int32_t>>(j, "depth");
    const auto cover = get_field<std::vector<double>>(j, "cover");
    const auto leaf = get_field<std::vector<Leaf>>(j, "leaf");
    const std::size_t n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || depth.size() != n ||
        cover.size() != n || leaf.size() != n)
        throw SchemaError("tree arrays have inconsistent lengths");
    t.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& node = t.nodes[i];
        node.feature = feature[i];
        node.threshold = threshold[i];
        node.left = left[i];
        node.right = right[i];
        node.depth = depth[i];
        node.cover = cover[i];
        node.leaf = leaf[i];
        if (!node.is_leaf()) {
            const auto ok = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(n); };
            if (static_cast<std::size_t>(node.feature) >= dim || !ok(node.left) || !ok(node.right))
                throw SchemaError("tree node references an invalid feature or child");
        }
    }
    return t;
}

inline Json header(const char* family, FeatureVariant v, std::size_t dim) {
    return {{"format", "oktacal-model"}, {"version", kModelRecordVersion}, {"family", family},
            {"variant", std::string(to_string(v))}, {"dim", dim}};
}

}  // namespace detail

inline Json to_json(const ClassifierModel& model) {
    return std::visit(
        [](const auto& m) -> Json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, MlrModel>) {
                Json j = detail::header("MLR", m.variant, m.dim);
                j["intercepts"] = m.intercepts;
                j["weights"] = m.weights;
                return j;
            } else if constexpr (std::is_same_v<T, PolrModel>) {
                Json j = detail::header("POLR", m.variant, m.dim);
                // The ninth cut point is +infinity and is not stored.
                j["cutpoints"] = std::vector<double>(m.cutpoints.begin(), m.cutpoints.begin() + kNumLogits);
                j["slope"] = m.slope;
                j["excluded"] = m.excluded;
                return j;
            } else if constexpr (std::is_same_v<T, MlpModel>) {
                Json j = detail::header("MLP", m.variant, m.input_dim);
                j["hidden"] = {kHidden1, kHidden2};
                j["params"] = m.params;
                j["standardizer"] = {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}};
                j["l2_factor"] = m.l2_factor;
                j["seed"] = m.seed;
                return j;
            } else if constexpr (std::is_same_v<T, RfModel>) {
                Json j = detail::header("RF", m.variant, m.dim);
                j["params"] = {{"n_trees", m.params.n_trees}, {"depth", m.params.depth},
                               {"mtry", m.params.mtry},       {"seed", m.params.seed},
                               {"min_leaf", m.params.min_leaf}, {"bootstrap", m.params.bootstrap}};
                Json trees = Json::array();
                for (const auto& t : m.trees) trees.push_back(detail::tree_to_json(t));
                j["trees"] = std::move(trees);
                return j;
            } else {
                Json j = detail::header("GBM", m.variant, m.dim);
                j["base_scores"] = m.base_scores;
                j["learning_rate"] = m.learning_rate;
                j["depth"] = m.depth;
                Json rounds = Json::array();
                for (const auto& r : m.rounds) {
                    Json per_class = Json::array();
                    for (const auto& t : r) per_class.push_back(detail::tree_to_json(t));
                    rounds.push_back(std::move(per_class));
                }
                j["rounds"] = std::move(rounds);
                return j;
            }
        },
        model);
}

inline ClassifierModel model_from_json(const Json& j) {
    using detail::get_field;
    if (!j.is_object() || get_field<std::string>(j, "format") != "oktacal-model")
        throw SchemaError("not an oktacal model record");
    const int version = get_field<int>(j, "version");
    if (version != kModelRecordVersion)
        throw SchemaError("unsupported model record version " + std::to_string(version));
    const auto family = get_field<std::string>(j, "family");
    FeatureVariant variant;
    try {
        variant = parse_feature_variant(get_field<std::string>(j, "variant"));
    } catch (const ConfigError& e) {
        throw SchemaError(e.what());
    }
    const auto dim = get_field<std::size_t>(j, "dim");
    if (dim != feature_dimension(variant)) throw SchemaError("dim does not match the feature variant");

    if (family == "MLR") {
        MlrModel m = MlrModel::zeros(variant);
        m.intercepts = get_field<std::array<double, kNumLogits>>(j, "intercepts");
        m.weights = get_field<std::vector<double>>(j, "weights");
        if (m.weights.size() != kNumLogits * dim) throw SchemaError("MLR weight count mismatch");
        return m;
    }
    if (family == "POLR") {
        PolrModel m;
        m.variant = variant;
        m.dim = dim;
        const auto cuts = get_field<std::array<double, kNumLogits>>(j, "cutpoints");
        for (std::size_t k = 0; k < kNumLogits; ++k) {
            if (k > 0 && !(cuts[k] > cuts[k - 1])) throw SchemaError("POLR cut points must increase strictly");
            m.cutpoints[k] = cuts[k];
        }
        m.cutpoints[kNumLogits] = std::numeric_limits<double>::infinity();
        m.slope = get_field<std::vector<double>>(j, "slope");
        m.excluded = get_field<std::vector<std::size_t>>(j, "excluded");
        if (m.slope.size() != dim) throw SchemaError("POLR slope length mismatch");
        return m;
    }
    if (family == "MLP") {
        MlpModel m = MlpModel::zeros(variant);
        const auto hidden = get_field<std::vector<std::size_t>>(j, "hidden");
        if (hidden != std::vector<std::size_t>{kHidden1, kHidden2}) throw SchemaError("unsupported MLP architecture");
        m.params = get_field<std::vector<double>>(j, "params");
        if (m.params.size() != MlpLayout(dim).total) throw SchemaError("MLP parameter count mismatch");
        const auto& st = j.at("standardizer");
        m.standardizer.mean = get_field<std::vector<double>>(st, "mean");
        m.standardizer.scale = get_field<std::vector<double>>(st, "scale");
        if (m.standardizer.mean.size() != dim || m.standardizer.scale.size() != dim)
            throw SchemaError("MLP standardizer length mismatch");
        for (double s : m.standardizer.scale)
            if (!(s > 0.0)) throw SchemaError("MLP standardizer scale must be positive");
        m.l2_factor = get_field<double>(j, "l2_factor");
        m.seed = get_field<std::uint64_t>(j, "seed");
        return m;
    }
    if (family == "RF") {
        RfModel m;
        m.variant = variant;
        m.dim = dim;
        const auto& p = j.at("params");
        m.params.n_trees = get_field<std::size_t>(p, "n_trees");
        m.params.depth = get_field<int>(p, "depth");
        m.params.mtry = get_field<std::size_t>(p, "mtry");
        m.params.seed = get_field<std::uint64_t>(p, "seed");
        m.params.min_leaf = get_field<double>(p, "min_leaf");
        m.params.bootstrap = get_field<bool>(p, "bootstrap");
        for (const auto& t : j.at("trees")) m.trees.push_back(detail::tree_from_json<ClassFrequencies>(t, dim));
        if (m.trees.empty()) throw SchemaError("RF record holds no trees");
        return m;
    }
    if (family == "GBM") {
        GbmModel m;
        m.variant = variant;
        m.dim = dim;
        m.base_scores = get_field<std::array<double, kNumOktas>>(j, "base_scores");
        m.learning_rate = get_field<double>(j, "learning_rate");
        m.depth = get_field<int>(j, "depth");
        for (const auto& r : j.at("rounds")) {
            if (!r.is_array() || r.size() != kNumOktas) throw SchemaError("GBM round must hold nine trees");
            std::array<RegressionTree, kNumOktas> trees;
            for (std::size_t c = 0; c < kNumOktas; ++c) trees[c] = detail::tree_from_json<double>(r[c], dim);
            m.rounds.push_back(std::move(trees));
        }
        return m;
    }
    throw SchemaError("unknown model family '" + family + "'");
}

inline void save_model(const ClassifierModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file '" + path + "'");
    out << to_json(model).dump() << '\n';
}

inline ClassifierModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace oktacal
