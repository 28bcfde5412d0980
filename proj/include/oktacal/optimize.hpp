#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <span>
#include <vector>

namespace oktacal {

struct MinimizeOptions {
    double f_tolerance = 1e-8;  ///< stop when an accepted step improves f by less
    double g_tolerance = 1e-6;  ///< stop when max |grad| falls below
    int max_iterations = 5000;
    std::size_t history = 10;
};

struct MinimizeResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective after every accepted iterate, starting with f(x0).
    std::vector<double> trace;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace detail

/// Limited-memory BFGS with Armijo backtracking. `fg(x, grad)` returns the
/// objective at x and writes its gradient; accepted steps never increase f.
template <class Objective>
MinimizeResult minimize_lbfgs(Objective&& fg, std::vector<double> x0,
                              const MinimizeOptions& opt = {}) {
    const std::size_t n = x0.size();
    MinimizeResult res;
    res.x = std::move(x0);
    std::vector<double> g(n), g_new(n), x_new(n), dir(n);
    double f = fg(std::span<const double>(res.x), std::span<double>(g));
    res.trace.push_back(f);

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha(opt.history);

    for (int it = 0; it < opt.max_iterations; ++it) {
        if (detail::max_abs(g) < opt.g_tolerance) {
            res.converged = true;
            break;
        }

        // Two-loop recursion for dir = -H g.
        for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
        const std::size_t m = s_hist.size();
        for (std::size_t j = m; j-- > 0;) {
            alpha[j] = rho_hist[j] * detail::dot(s_hist[j], dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[j] * y_hist[j][i];
        }
        if (m > 0) {
            const double gamma = detail::dot(s_hist.back(), y_hist.back()) /
                                 detail::dot(y_hist.back(), y_hist.back());
            for (double& d : dir) d *= gamma;
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double beta = rho_hist[j] * detail::dot(y_hist[j], dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha[j] - beta) * s_hist[j][i];
        }

        double slope = detail::dot(g, dir);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
            slope = detail::dot(g, dir);
        }

        double step = (m == 0) ? std::min(1.0, 1.0 / std::max(detail::max_abs(g), 1e-12)) : 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * dir[i];
            f_new = fg(std::span<const double>(x_new), std::span<double>(g_new));
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No descent possible at working precision.
            res.converged = true;
            break;
        }

        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - res.x[i];
            y[i] = g_new[i] - g[i];
        }
        const double sy = detail::dot(s, y);
        if (sy > 1e-12) {
            if (s_hist.size() == opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }

        const double improvement = f - f_new;
        res.x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        res.trace.push_back(f);
        res.iterations = it + 1;
        if (improvement < opt.f_tolerance) {
            res.converged = true;
            break;
        }
    }
    res.value = f;
    return res;
}

}  // namespace oktacal
