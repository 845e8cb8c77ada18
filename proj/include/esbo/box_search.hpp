#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Dense>

namespace esbo {

struct BoxSearchOptions {
    int max_iters = 60;
    /// Stop once the projected gradient step is below this (infinity norm).
    double tolerance = 1e-6;
    int max_backtracks = 30;
    int memory = 8;  // non-monotone line-search window
};

struct BoxSearchResult {
    Eigen::VectorXd x;
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
};

/// Spectral projected gradient ascent on a box.
///
/// `objective(x, grad)` returns f(x) and writes df/dx into `grad`; a non-finite return marks x
/// as infeasible and the line search backs away from it. The start point is projected into the
/// box first. The returned point is the best feasible point seen, so the result never gets worse
/// than the (projected) start.
template <class Objective>
BoxSearchResult maximize_in_box(Objective&& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi, const BoxSearchOptions& opts = {}) {
    constexpr double kLambdaMin = 1e-10;
    constexpr double kLambdaMax = 1e10;
    constexpr double kArmijo = 1e-4;

    auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v.cwiseMax(lo).cwiseMin(hi); };

    BoxSearchResult out;
    Eigen::VectorXd x = project(x0);
    Eigen::VectorXd g(x.size());
    double fx = objective(x, g);
    ++out.evaluations;
    out.x = x;
    out.value = fx;
    if (!std::isfinite(fx)) {
        return out;
    }

    std::deque<double> history{fx};
    double lambda = 1.0;
    {
        const double pg = (project(x + g) - x).cwiseAbs().maxCoeff();
        if (pg > 0.0) lambda = std::clamp(1.0 / pg, kLambdaMin, kLambdaMax);
    }

    Eigen::VectorXd g_new(x.size());
    for (int it = 0; it < opts.max_iters; ++it) {
        out.iterations = it + 1;
        if ((project(x + g) - x).cwiseAbs().maxCoeff() < opts.tolerance) break;

        const Eigen::VectorXd d = project(x + lambda * g) - x;
        const double slope = g.dot(d);  // > 0 for an ascent direction
        if (slope <= 0.0) break;
        const double floor = *std::min_element(history.begin(), history.end());

        double alpha = 1.0;
        Eigen::VectorXd x_new;
        double f_new = -std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            x_new = x + alpha * d;
            f_new = objective(x_new, g_new);
            ++out.evaluations;
            if (std::isfinite(f_new) && f_new >= floor + kArmijo * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g - g_new;  // gradient of -f changes by -(g_new - g)
        const double sy = s.dot(y);
        lambda = sy <= 0.0 ? kLambdaMax : std::clamp(s.squaredNorm() / sy, kLambdaMin, kLambdaMax);

        x = x_new;
        g = g_new;
        fx = f_new;
        if (fx > out.value) {
            out.value = fx;
            out.x = x;
        }
        history.push_back(fx);
        if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
        if (s.cwiseAbs().maxCoeff() < opts.tolerance * 1e-3) break;
    }
    return out;
}

}  // namespace esbo
