#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "esbo/types.hpp"

namespace esbo::metrics {

/// r_k = J*_k - J*. Infinite incumbents (nothing completed yet) stay infinite.
inline std::vector<double> simple_regret(const std::vector<double>& incumbents, double j_star) {
    std::vector<double> out;
    out.reserve(incumbents.size());
    for (double v : incumbents) out.push_back(std::isinf(v) ? v : std::max(0.0, v - j_star));
    return out;
}

/// Lower median: the floor((n-1)/2)-th order statistic. Always one of the inputs, so the run
/// at the median divided by the median is exactly 1.
inline double lower_median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

/// Linear-interpolation quantile (Hyndman-Fan type 7); equal neighbours need no interpolation,
/// which keeps infinities well-defined.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("quantile of empty set");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double w = h - static_cast<double>(lo);
    if (v[lo] == v[hi] || w == 0.0) return v[lo];
    if (std::isinf(v[hi])) return v[hi];
    return v[lo] + w * (v[hi] - v[lo]);
}

/// Ranks 1..n, lowest value first; ties share the average of their ranks.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Step function through (x_i, y_i) evaluated on `grid` by last observation carried forward.
/// `x` must be non-decreasing; grid points before x_0 get +inf.
inline std::vector<double> align_locf(const std::vector<double>& x, const std::vector<double>& y,
                                      const std::vector<double>& grid) {
    if (x.size() != y.size()) throw std::invalid_argument("align: size mismatch");
    std::vector<double> out;
    out.reserve(grid.size());
    std::size_t i = 0;
    double cur = kInf;
    for (double g : grid) {
        while (i < x.size() && x[i] <= g) cur = y[i++];
        out.push_back(cur);
    }
    return out;
}

/// Equally spaced fractions 1/n, 2/n, ..., 1.
inline std::vector<double> fraction_grid(int n) {
    std::vector<double> g;
    for (int i = 1; i <= n; ++i) g.push_back(static_cast<double>(i) / n);
    return g;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean of empty set");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace esbo::metrics
