#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "esbo/gp.hpp"
#include "esbo/rng.hpp"
#include "esbo/types.hpp"

namespace esbo::acq {

/// Max-value entropy search settings. Budgets are per input dimension.
struct MesOptions {
    int n_samples = 10;
    int grid_per_dim = 1000;
    int candidates_per_dim = 2000;
    int refine_steps = 50;
    int refine_starts = 5;
    double fd_step = 1e-4;  // central-difference step, unit-cube units
};

constexpr double kSigmaFloor = 1e-12;

/// log Phi(x), accurate in both tails.
inline double log_norm_cdf(double x) {
    if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
    if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    // asymptotic expansion of the Mills ratio
    const double x2 = x * x;
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
           std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
}

/// gamma * phi(gamma) / (2 Phi(gamma)) - log Phi(gamma): the entropy reduction for one sampled
/// maximum. Non-negative analytically; clamped at 0 against rounding.
inline double mes_term(double gamma) {
    const double log_cdf = log_norm_cdf(gamma);
    const double log_pdf = -0.5 * gamma * gamma - 0.5 * std::log(2.0 * std::numbers::pi);
    const double v = 0.5 * gamma * std::exp(log_pdf - log_cdf) - log_cdf;
    return std::max(0.0, v);
}

/// MES over a fitted surrogate of a cost to be minimized. Internally the standardized posterior is
/// negated so that MES maximizes; all stored values are in negated standardized units.
struct AcquisitionState {
    const gp::TrainedGP* gp = nullptr;
    std::vector<double> max_samples;
    double best_observed = 0.0;  // max of negated standardized targets
};

/// Negated standardized posterior (mean, std) at unit-cube columns `q`.
inline void negated_posterior(const gp::TrainedGP& gp, const Eigen::MatrixXd& q, Eigen::VectorXd& mean,
                              Eigen::VectorXd& sd) {
    Eigen::VectorXd var;
    gp.posterior_unit(q, mean, var);
    mean = -mean;
    sd = var.array().sqrt().matrix();
}

/// Approximate samples of max(-f) via a Gumbel fit to the product of posterior marginals on
/// `grid_size` random points plus the training inputs. Samples are clamped to the best observed
/// value.
inline std::vector<double> sample_max_values(const gp::TrainedGP& gp, int n_samples, int grid_size, Rng& rng) {
    const Eigen::Index d = gp.dim();
    Eigen::MatrixXd grid(d, grid_size + gp.size());
    for (int j = 0; j < grid_size; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) grid(i, j) = uniform01(rng);
    }
    grid.rightCols(gp.size()) = gp.unit_inputs();
    Eigen::VectorXd mu, sd;
    negated_posterior(gp, grid, mu, sd);
    sd = sd.cwiseMax(kSigmaFloor);

    const double left = (-gp.standardized_targets()).maxCoeff();
    auto log_prob_below = [&](double y) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < mu.size(); ++j) s += log_norm_cdf((y - mu[j]) / sd[j]);
        return s;
    };
    auto quantile = [&](double p) {
        const double lp = std::log(p);
        if (log_prob_below(left) >= lp) return left;
        double lo = left;
        double hi = std::max(left, (mu + 5.0 * sd).maxCoeff());
        double width = std::max(hi - lo, 1e-9);
        while (log_prob_below(hi) < lp) {
            hi += width;
            width *= 2.0;
        }
        for (int it = 0; it < 100 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (log_prob_below(mid) < lp ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double q25 = quantile(0.25);
    const double q50 = quantile(0.5);
    const double q75 = quantile(0.75);
    const double scale = (q75 - q25) / (std::log(std::log(4.0)) - std::log(std::log(4.0 / 3.0)));

    std::vector<double> out(static_cast<std::size_t>(n_samples), left);
    if (!(scale > 0.0)) return out;
    const double loc = q50 + scale * std::log(std::log(2.0));
    for (auto& v : out) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        v = std::max(left, loc - scale * std::log(-std::log(u)));
    }
    return out;
}

inline AcquisitionState make_state(const gp::TrainedGP& gp, const MesOptions& opts, Rng& rng) {
    AcquisitionState st;
    st.gp = &gp;
    st.best_observed = (-gp.standardized_targets()).maxCoeff();
    st.max_samples = sample_max_values(gp, opts.n_samples, opts.grid_per_dim * static_cast<int>(gp.dim()), rng);
    return st;
}

/// MES from a negated standardized posterior mean/std.
inline double mes_from_moments(double mean, double sd, const std::vector<double>& max_samples) {
    const double lowest = *std::min_element(max_samples.begin(), max_samples.end());
    if (sd < kSigmaFloor) {
        if (mean < lowest) return 0.0;
        sd = kSigmaFloor;
    }
    double acc = 0.0;
    for (double y : max_samples) acc += mes_term((y - mean) / sd);
    return acc / static_cast<double>(max_samples.size());
}

/// MES at unit-cube columns `q`.
inline Eigen::VectorXd mes_values_unit(const Eigen::MatrixXd& q, const AcquisitionState& st) {
    Eigen::VectorXd mu, sd;
    negated_posterior(*st.gp, q, mu, sd);
    Eigen::VectorXd out(q.cols());
    for (Eigen::Index j = 0; j < q.cols(); ++j) out[j] = mes_from_moments(mu[j], sd[j], st.max_samples);
    return out;
}

inline double mes_value(const ParamVector& theta, const AcquisitionState& st) {
    return mes_values_unit(st.gp->box().to_unit(theta), st)[0];
}

struct Proposal {
    ParamVector theta;
    double value = 0.0;
    double best_candidate_value = 0.0;  // best raw random candidate, before refinement
};

namespace detail {

/// Bounded ascent from `x` using central-difference gradients and step halving/doubling.
inline double refine(Eigen::VectorXd& x, double fx, const AcquisitionState& st, const MesOptions& opts) {
    const Eigen::Index d = x.size();
    double step = 0.05;
    Eigen::MatrixXd probes(d, 2 * d);
    for (int it = 0; it < opts.refine_steps && step > 1e-8; ++it) {
        for (Eigen::Index i = 0; i < d; ++i) {
            probes.col(2 * i) = x;
            probes.col(2 * i + 1) = x;
            probes(i, 2 * i) = std::min(1.0, x[i] + opts.fd_step);
            probes(i, 2 * i + 1) = std::max(0.0, x[i] - opts.fd_step);
        }
        const Eigen::VectorXd f = mes_values_unit(probes, st);
        Eigen::VectorXd g(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            const double h = probes(i, 2 * i) - probes(i, 2 * i + 1);
            g[i] = h > 0.0 ? (f[2 * i] - f[2 * i + 1]) / h : 0.0;
        }
        const double gn = g.norm();
        if (!(gn > 0.0)) break;
        bool moved = false;
        while (step > 1e-8) {
            const Eigen::VectorXd cand = (x + step * g / gn).cwiseMax(0.0).cwiseMin(1.0);
            const double fc = mes_values_unit(cand, st)[0];
            if (fc > fx) {
                x = cand;
                fx = fc;
                step = std::min(0.5, 2.0 * step);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return fx;
}

}  // namespace detail

/// Random candidates in the box, the best `refine_starts` refined by local ascent. The returned
/// point is inside `box`; ties go to the lowest candidate index.
inline Proposal maximize_acquisition(const AcquisitionState& st, const Box& box, const MesOptions& opts, Rng& rng) {
    const Eigen::Index d = box.dim();
    const int n = std::max(1, opts.candidates_per_dim * static_cast<int>(d));
    Eigen::MatrixXd cand(d, n);
    for (int j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) cand(i, j) = uniform01(rng);
    }
    const Eigen::VectorXd values = mes_values_unit(cand, st);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const int top = std::min(opts.refine_starts, n);
    std::partial_sort(order.begin(), order.begin() + top, order.end(),
                      [&](int a, int b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });

    Proposal out;
    out.best_candidate_value = values[order[0]];
    Eigen::VectorXd best_x = cand.col(order[0]);
    double best_f = values[order[0]];
    for (int s = 0; s < top; ++s) {
        Eigen::VectorXd x = cand.col(order[static_cast<std::size_t>(s)]);
        const double f = detail::refine(x, values[order[static_cast<std::size_t>(s)]], st, opts);
        if (f > best_f) {
            best_f = f;
            best_x = x;
        }
    }
    out.theta = box.from_unit(best_x);
    out.value = best_f;
    return out;
}

}  // namespace esbo::acq
