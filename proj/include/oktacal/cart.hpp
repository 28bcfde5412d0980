#pragma once

// CART grower shared by the random forest (Gini impurity on class labels)
// and gradient boosting (second-order gain on per-row gradients/hessians).
//
// Candidate thresholds are midpoints between consecutive distinct values of
// a feature within the node; rows with x <= threshold go left. Candidates
// are scanned by ascending feature index then ascending threshold and a
// later candidate only replaces the incumbent on a strictly larger gain.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "oktacal/errors.hpp"
#include "oktacal/features.hpp"
#include "oktacal/okta.hpp"

namespace oktacal {

/// Smallest gain accepted for a split; anything below counts as "no gain".
inline constexpr double kMinSplitGain = 1e-12;

struct TreeParams {
    int max_depth = 3;
    std::size_t mtry = 0;  ///< features tried per split; 0 means all
    double min_leaf = 1.0;  ///< minimum (weighted) sample count per child
};

template <class Leaf>
struct TreeNode {
    std::int32_t feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t depth = 0;
    double cover = 0.0;  ///< weighted number of training rows reaching the node
    Leaf leaf{};

    bool is_leaf() const noexcept { return feature < 0; }
};

template <class Leaf>
struct CartTree {
    std::vector<TreeNode<Leaf>> nodes;
    int max_depth = 0;

    const TreeNode<Leaf>& leaf_node(std::span<const double> x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf())
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                             ? nodes[i].left
                                             : nodes[i].right);
        return nodes[i];
    }

    const Leaf& predict(std::span<const double> x) const { return leaf_node(x).leaf; }

    int depth() const {
        int d = 0;
        for (const auto& n : nodes) d = std::max(d, static_cast<int>(n.depth));
        return d;
    }
};

using ClassFrequencies = std::array<double, kNumOktas>;
using ClassificationTree = CartTree<ClassFrequencies>;
using RegressionTree = CartTree<double>;

/// Column-major copy of a feature matrix with per-feature sort orders,
/// computed once and shared by every tree grown on the same rows.
class SortedColumns {
public:
    explicit SortedColumns(const FeatureMatrix& x) : n_(x.rows()), m_(x.cols()), cols_(m_), order_(m_) {
        for (std::size_t j = 0; j < m_; ++j) {
            cols_[j].resize(n_);
            for (std::size_t i = 0; i < n_; ++i) cols_[j][i] = x(i, j);
            order_[j].resize(n_);
            std::iota(order_[j].begin(), order_[j].end(), std::uint32_t{0});
            const auto& c = cols_[j];
            std::stable_sort(order_[j].begin(), order_[j].end(),
                             [&](std::uint32_t a, std::uint32_t b) { return c[a] < c[b]; });
        }
    }

    std::size_t rows() const noexcept { return n_; }
    std::size_t cols() const noexcept { return m_; }
    double value(std::size_t row, std::size_t feature) const { return cols_[feature][row]; }
    const std::vector<double>& column(std::size_t j) const { return cols_[j]; }
    const std::vector<std::uint32_t>& order(std::size_t j) const { return order_[j]; }

private:
    std::size_t n_, m_;
    std::vector<std::vector<double>> cols_;
    std::vector<std::vector<std::uint32_t>> order_;
};

/// Gini impurity criterion over weighted class counts.
struct GiniCriterion {
    struct Stats {
        ClassFrequencies counts{};
        double weight = 0.0;
        double sum_sq = 0.0;  ///< sum of squared class counts
    };
    using Leaf = ClassFrequencies;

    std::span<const OktaIndex> y;
    std::span<const double> w;

    void add(Stats& s, std::uint32_t row) const {
        double& c = s.counts[y[row]];
        s.sum_sq += w[row] * (2.0 * c + w[row]);
        c += w[row];
        s.weight += w[row];
    }
    /// Moves one row from the right-hand statistics to the left-hand ones.
    /// Weights are integer multiplicities, so the running squares are exact.
    void transfer(Stats& left, Stats& right, const Stats&, std::uint32_t row) const {
        add(left, row);
        double& c = right.counts[y[row]];
        right.sum_sq += w[row] * (w[row] - 2.0 * c);
        c -= w[row];
        right.weight -= w[row];
    }
    static double weight(const Stats& s) { return s.weight; }
    static double score(const Stats& s) { return s.sum_sq / s.weight; }
    /// Decrease of the weighted Gini impurity.
    static double gain(const Stats& l, const Stats& r, const Stats& p) {
        return (score(l) + score(r) - score(p)) / p.weight;
    }
    static Leaf make_leaf(const Stats& s) {
        Leaf f{};
        for (std::size_t k = 0; k < kNumOktas; ++k) f[k] = s.counts[k] / s.weight;
        return f;
    }
};

/// Second-order (Newton) criterion for boosting: gain and leaf value from
/// summed gradients and hessians with ridge on the hessian.
struct SecondOrderCriterion {
    struct Stats {
        double g = 0.0;
        double h = 0.0;
        double count = 0.0;
    };
    using Leaf = double;

    std::span<const double> grad;
    std::span<const double> hess;
    double ridge = 1e-6;

    void add(Stats& s, std::uint32_t row) const {
        s.g += grad[row];
        s.h += hess[row];
        s.count += 1.0;
    }
    void transfer(Stats& left, Stats& right, const Stats& total, std::uint32_t row) const {
        add(left, row);
        right = {total.g - left.g, total.h - left.h, total.count - left.count};
    }
    static double weight(const Stats& s) { return s.count; }
    double score(const Stats& s) const { return s.g * s.g / (s.h + ridge); }
    double gain(const Stats& l, const Stats& r, const Stats& p) const { return score(l) + score(r) - score(p); }
    Leaf make_leaf(const Stats& s) const { return -s.g / (s.h + ridge); }
};

namespace detail {

template <class Criterion>
class TreeGrower {
public:
    using Stats = typename Criterion::Stats;
    using Leaf = typename Criterion::Leaf;

    TreeGrower(const SortedColumns& data, const Criterion& crit, const TreeParams& params,
               std::span<const double> row_weight, std::mt19937_64& rng)
        : data_(data), crit_(crit), params_(params), rng_(rng), goes_left_(data.rows(), 0) {
        const std::size_t m = data.cols();
        work_.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            work_[j].reserve(data.rows());
            for (std::uint32_t r : data.order(j))
                if (row_weight.empty() || row_weight[r] > 0.0) work_[j].push_back(r);
        }
        buffer_.resize(work_.empty() ? 0 : work_[0].size());
        features_.resize(m);
        std::iota(features_.begin(), features_.end(), std::size_t{0});
    }

    CartTree<Leaf> grow() {
        if (work_.empty() || work_[0].empty()) throw EmptyDataError("cannot grow a tree on no rows");
        tree_.max_depth = params_.max_depth;
        build(0, work_[0].size(), 0);
        return std::move(tree_);
    }

private:
    struct Split {
        std::size_t feature = 0;
        double threshold = 0.0;
        double gain = kMinSplitGain;
        bool found = false;
    };

    std::size_t build(std::size_t b, std::size_t e, int depth) {
        Stats total{};
        for (std::size_t i = b; i < e; ++i) crit_.add(total, work_[0][i]);

        const std::size_t id = tree_.nodes.size();
        tree_.nodes.emplace_back();
        tree_.nodes[id].depth = depth;
        tree_.nodes[id].cover = Criterion::weight(total);

        Split best;
        if (depth < params_.max_depth && Criterion::weight(total) >= 2.0 * params_.min_leaf)
            best = find_split(b, e, total);
        if (!best.found) {
            tree_.nodes[id].leaf = crit_.make_leaf(total);
            return id;
        }

        const auto& col = data_.column(best.feature);
        std::size_t n_left = 0;
        for (std::size_t i = b; i < e; ++i) {
            const std::uint32_t r = work_[0][i];
            goes_left_[r] = col[r] <= best.threshold;
            n_left += goes_left_[r];
        }
        for (auto& ord : work_) {
            std::size_t li = b, ri = 0;
            for (std::size_t i = b; i < e; ++i) {
                const std::uint32_t r = ord[i];
                if (goes_left_[r]) ord[li++] = r;
                else buffer_[ri++] = r;
            }
            std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(ri),
                      ord.begin() + static_cast<std::ptrdiff_t>(li));
        }

        tree_.nodes[id].feature = static_cast<std::int32_t>(best.feature);
        tree_.nodes[id].threshold = best.threshold;
        const std::size_t l = build(b, b + n_left, depth + 1);
        const std::size_t r = build(b + n_left, e, depth + 1);
        tree_.nodes[id].left = static_cast<std::int32_t>(l);
        tree_.nodes[id].right = static_cast<std::int32_t>(r);
        return id;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t m = features_.size();
        const std::size_t k = (params_.mtry == 0 || params_.mtry >= m) ? m : params_.mtry;
        std::vector<std::size_t> pool(features_);
        if (k < m) {
            // Partial Fisher-Yates: the first k entries are a uniform sample.
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, m - 1);
                std::swap(pool[i], pool[pick(rng_)]);
            }
            pool.resize(k);
            std::sort(pool.begin(), pool.end());
        }
        return pool;
    }

    Split find_split(std::size_t b, std::size_t e, const Stats& total) {
        Split best;
        for (std::size_t f : candidate_features()) {
            const auto& ord = work_[f];
            const auto& col = data_.column(f);
            Stats left{};
            Stats right = total;
            for (std::size_t i = b; i + 1 < e; ++i) {
                crit_.transfer(left, right, total, ord[i]);
                const double a = col[ord[i]], c = col[ord[i + 1]];
                if (!(a < c)) continue;
                if (Criterion::weight(left) < params_.min_leaf || Criterion::weight(right) < params_.min_leaf)
                    continue;
                const double g = crit_.gain(left, right, total);
                if (g > best.gain) {
                    double t = a + (c - a) / 2.0;
                    if (!(t < c)) t = a;
                    best = {f, t, g, true};
                }
            }
        }
        return best;
    }

    const SortedColumns& data_;
    const Criterion& crit_;
    TreeParams params_;
    std::mt19937_64& rng_;
    std::vector<std::vector<std::uint32_t>> work_;
    std::vector<std::uint32_t> buffer_;
    std::vector<char> goes_left_;
    std::vector<std::size_t> features_;
    CartTree<Leaf> tree_;
};

}  // namespace detail

/// Classification tree on labels `y` with per-row weights (bootstrap
/// multiplicities; rows of weight 0 are ignored, empty span = all ones).
inline ClassificationTree grow_classification_tree(const SortedColumns& data, std::span<const OktaIndex> y,
                                                   std::span<const double> weights, const TreeParams& params,
                                                   std::mt19937_64& rng) {
    if (data.rows() == 0) throw EmptyDataError("cannot grow a tree on no rows");
    std::vector<double> ones;
    if (weights.empty()) {
        ones.assign(data.rows(), 1.0);
        weights = ones;
    }
    const GiniCriterion crit{y, weights};
    return detail::TreeGrower<GiniCriterion>(data, crit, params, weights, rng).grow();
}

/// Regression tree on gradients/hessians; leaf value -G / (H + ridge).
inline RegressionTree grow_gradient_tree(const SortedColumns& data, std::span<const double> grad,
                                         std::span<const double> hess, const TreeParams& params,
                                         std::mt19937_64& rng, double ridge = 1e-6) {
    if (data.rows() == 0) throw EmptyDataError("cannot grow a tree on no rows");
    const SecondOrderCriterion crit{grad, hess, ridge};
    return detail::TreeGrower<SecondOrderCriterion>(data, crit, params, {}, rng).grow();
}

}  // namespace oktacal
