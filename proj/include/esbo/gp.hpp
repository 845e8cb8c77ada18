#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "esbo/box_search.hpp"
#include "esbo/rng.hpp"
#include "esbo/types.hpp"

namespace esbo::gp {

/// Hyperparameters of the anisotropic squared-exponential kernel, in standardized output units
/// and unit-cube input units.
struct KernelParams {
    double signal_variance = 1.0;
    Eigen::VectorXd length_scales;
    double noise_variance = 0.0;
};

enum class NoiseMode { FixedZero, Optimized };

/// Length scale at which the SE correlation decays to `correlation` over `distance`:
/// exp(-distance^2 / (2 l^2)) = correlation.
inline double length_scale_for_correlation(double distance, double correlation) {
    return distance / std::sqrt(-2.0 * std::log(correlation));
}

/// Box constraints on the hyperparameters.
struct HyperBounds {
    /// A correlation of 0.1 must be reachable within [1%, 50%] of the unit-cube edge.
    double length_scale_lo = length_scale_for_correlation(0.01, 0.1);
    double length_scale_hi = length_scale_for_correlation(0.5, 0.1);
    double signal_variance_lo = 1e-4;
    double signal_variance_hi = 1e4;
    double noise_variance_lo = 1e-6;
    double noise_variance_hi = 1.0;
};

/// Diagonal jitter relative to the signal variance, and how often it may be doubled.
constexpr double kJitter = 1e-10;
constexpr int kJitterDoublings = 4;
/// Floor on the output standard deviation so the standardizing map stays invertible.
constexpr double kOutputStdFloor = 1e-12;

/// Correlations below exp(-230) ~ 1e-100 are set to exactly 0. Left in, they turn into denormals
/// inside the triangular solves, which run an order of magnitude slower on x86.
constexpr double kMaxScaledDistance2 = 460.0;

inline double kernel_eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const KernelParams& kp) {
    const double r2 = ((a - b).array() / kp.length_scales.array()).square().sum();
    return r2 > kMaxScaledDistance2 ? 0.0 : kp.signal_variance * std::exp(-0.5 * r2);
}

/// Affine standardization y -> (y - mean) / scale.
struct OutputTransform {
    double mean = 0.0;
    double scale = 1.0;

    [[nodiscard]] double forward(double y) const { return (y - mean) / scale; }
    [[nodiscard]] double inverse(double z) const { return mean + scale * z; }

    /// Population mean and standard deviation, std floored at kOutputStdFloor.
    static OutputTransform fit(const Eigen::VectorXd& y) {
        OutputTransform t;
        const auto n = static_cast<double>(y.size());
        t.mean = y.sum() / n;
        const double var = (y.array() - t.mean).square().sum() / n;
        t.scale = std::max(std::sqrt(var), kOutputStdFloor);
        return t;
    }
};

struct TrainingData {
    std::vector<ParamVector> inputs;
    std::vector<double> targets;

    [[nodiscard]] std::size_t size() const { return inputs.size(); }

    void add(ParamVector theta, double target) {
        inputs.push_back(std::move(theta));
        targets.push_back(target);
    }
};

struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
};

namespace detail {

/// Columns of `inputs` mapped into the unit cube.
inline Eigen::MatrixXd to_unit_matrix(const std::vector<ParamVector>& inputs, const Box& box) {
    Eigen::MatrixXd u(box.dim(), static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != box.dim()) throw std::invalid_argument("gp: input dimension mismatch");
        u.col(static_cast<Eigen::Index>(i)) = box.to_unit(inputs[i]);
    }
    return u;
}

/// Per-dimension squared differences, one k x k matrix per input dimension.
inline std::vector<Eigen::MatrixXd> squared_differences(const Eigen::MatrixXd& u) {
    const Eigen::Index k = u.cols();
    std::vector<Eigen::MatrixXd> d2(static_cast<std::size_t>(u.rows()));
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        auto& m = d2[static_cast<std::size_t>(i)];
        m.resize(k, k);
        for (Eigen::Index b = 0; b < k; ++b) {
            for (Eigen::Index a = 0; a < k; ++a) {
                const double diff = u(i, a) - u(i, b);
                m(a, b) = diff * diff;
            }
        }
    }
    return d2;
}

inline Eigen::MatrixXd correlation(const Eigen::MatrixXd& r2) {
    return (r2.array() > kMaxScaledDistance2).select(0.0, (-0.5 * r2.array()).exp()).matrix();
}

/// Signal part of the gram matrix from precomputed squared differences.
inline Eigen::MatrixXd signal_gram(const std::vector<Eigen::MatrixXd>& d2, const KernelParams& kp) {
    Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(d2.front().rows(), d2.front().cols());
    for (std::size_t i = 0; i < d2.size(); ++i) {
        const double l = kp.length_scales[static_cast<Eigen::Index>(i)];
        r2 += d2[i] / (l * l);
    }
    return kp.signal_variance * correlation(r2);
}

/// Cross-covariance between training columns `u` (d x k) and query columns `q` (d x m): k x m.
inline Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& u, const Eigen::MatrixXd& q, const KernelParams& kp) {
    const Eigen::ArrayXd inv_l = kp.length_scales.array().inverse();
    const Eigen::MatrixXd us = (u.array().colwise() * inv_l).matrix();
    const Eigen::MatrixXd qs = (q.array().colwise() * inv_l).matrix();
    Eigen::MatrixXd r2 = -2.0 * us.transpose() * qs;
    r2.colwise() += us.colwise().squaredNorm().transpose();
    r2.rowwise() += qs.colwise().squaredNorm();
    return kp.signal_variance * correlation(r2.cwiseMax(0.0));
}

struct Factor {
    Eigen::MatrixXd lower;  // L with L L^T = K_signal + (noise + jitter) I
    double jitter = 0.0;
};

/// Cholesky of signal_gram + (noise + jitter) I with jitter escalation. nullopt on failure.
inline std::optional<Factor> factorize(const Eigen::MatrixXd& signal, const KernelParams& kp) {
    double jitter = kJitter * kp.signal_variance;
    for (int attempt = 0; attempt <= kJitterDoublings; ++attempt, jitter *= 2.0) {
        Eigen::MatrixXd k = signal;
        k.diagonal().array() += kp.noise_variance + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
            return Factor{llt.matrixL(), jitter};
        }
    }
    return std::nullopt;
}

/// Packs kernel params as [log sf2, log l_1..l_d, (log sn2)].
inline Eigen::VectorXd pack(const KernelParams& kp, NoiseMode mode) {
    const Eigen::Index d = kp.length_scales.size();
    Eigen::VectorXd z(d + 1 + (mode == NoiseMode::Optimized ? 1 : 0));
    z[0] = std::log(kp.signal_variance);
    z.segment(1, d) = kp.length_scales.array().log().matrix();
    if (mode == NoiseMode::Optimized) z[d + 1] = std::log(kp.noise_variance);
    return z;
}

inline KernelParams unpack(const Eigen::VectorXd& z, Eigen::Index d, NoiseMode mode) {
    KernelParams kp;
    kp.signal_variance = std::exp(z[0]);
    kp.length_scales = z.segment(1, d).array().exp().matrix();
    kp.noise_variance = mode == NoiseMode::Optimized ? std::exp(z[d + 1]) : 0.0;
    return kp;
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> log_bounds(const HyperBounds& hb, Eigen::Index d, NoiseMode mode) {
    KernelParams lo{hb.signal_variance_lo, Eigen::VectorXd::Constant(d, hb.length_scale_lo), hb.noise_variance_lo};
    KernelParams hi{hb.signal_variance_hi, Eigen::VectorXd::Constant(d, hb.length_scale_hi), hb.noise_variance_hi};
    return {pack(lo, mode), pack(hi, mode)};
}

/// Geometric midpoint of the bounds; the default first start when nothing better is known.
inline KernelParams default_params(const HyperBounds& hb, Eigen::Index d, NoiseMode mode) {
    KernelParams kp;
    kp.signal_variance = 1.0;
    kp.length_scales = Eigen::VectorXd::Constant(d, std::sqrt(hb.length_scale_lo * hb.length_scale_hi));
    kp.noise_variance = mode == NoiseMode::Optimized ? std::sqrt(hb.noise_variance_lo * hb.noise_variance_hi) : 0.0;
    return kp;
}

/// Log marginal likelihood of standardized targets `y`, with optional gradient w.r.t. the packed
/// log-hyperparameters. Returns -inf when the gram matrix cannot be factorized.
inline double log_marginal_likelihood(const std::vector<Eigen::MatrixXd>& d2, const Eigen::VectorXd& y,
                                      const KernelParams& kp, NoiseMode mode, Eigen::VectorXd* grad) {
    const Eigen::Index k = y.size();
    const Eigen::MatrixXd signal = signal_gram(d2, kp);
    const auto factor = factorize(signal, kp);
    if (!factor) return -std::numeric_limits<double>::infinity();
    const auto& l = factor->lower;
    const auto tri = l.triangularView<Eigen::Lower>();

    Eigen::VectorXd alpha = tri.solve(y);
    const double quad = alpha.squaredNorm();
    tri.transpose().solveInPlace(alpha);
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const double value = -0.5 * quad - 0.5 * log_det - 0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);

    if (grad != nullptr) {
        Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(k, k);
        tri.solveInPlace(linv);
        // w = alpha alpha^T - linv^T linv, built on the lower triangle then mirrored
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, k);
        w.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose(), -1.0);
        w.selfadjointView<Eigen::Lower>().rankUpdate(alpha, 1.0);
        w = w.selfadjointView<Eigen::Lower>();
        const Eigen::Index d = kp.length_scales.size();
        grad->resize(d + 1 + (mode == NoiseMode::Optimized ? 1 : 0));
        const Eigen::MatrixXd ws = w.cwiseProduct(signal);
        (*grad)[0] = 0.5 * (ws.sum() + factor->jitter * w.trace());
        for (Eigen::Index i = 0; i < d; ++i) {
            const double li = kp.length_scales[i];
            (*grad)[i + 1] = 0.5 * ws.cwiseProduct(d2[static_cast<std::size_t>(i)]).sum() / (li * li);
        }
        if (mode == NoiseMode::Optimized) (*grad)[d + 1] = 0.5 * kp.noise_variance * w.trace();
    }
    return value;
}

}  // namespace detail

/// GP posterior conditioned on a training set with fixed hyperparameters. Immutable after
/// construction; const queries are safe from multiple threads.
class TrainedGP {
public:
    TrainedGP(const TrainingData& data, Box box, KernelParams kp) : box_(std::move(box)), kernel_(std::move(kp)) {
        if (data.size() == 0) throw std::invalid_argument("gp: need at least one training point");
        if (data.targets.size() != data.inputs.size()) throw std::invalid_argument("gp: inputs/targets size mismatch");
        if (kernel_.length_scales.size() != box_.dim()) throw std::invalid_argument("gp: length-scale dimension mismatch");
        unit_inputs_ = detail::to_unit_matrix(data.inputs, box_);
        const Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(data.targets.data(), static_cast<Eigen::Index>(data.targets.size()));
        output_ = OutputTransform::fit(raw);
        targets_ = (raw.array() - output_.mean) / output_.scale;
        const Eigen::MatrixXd signal = detail::signal_gram(detail::squared_differences(unit_inputs_), kernel_);
        auto factor = detail::factorize(signal, kernel_);
        if (!factor) throw NumericalError("gp: gram matrix not positive definite after jitter escalation");
        lower_ = std::move(factor->lower);
        jitter_ = factor->jitter;
        alpha_ = lower_.triangularView<Eigen::Lower>().solve(targets_);
        lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
    }

    [[nodiscard]] Posterior posterior(const ParamVector& theta) const {
        const Eigen::VectorXd u = box_.to_unit(theta);
        Eigen::VectorXd mean;
        Eigen::VectorXd var;
        posterior_unit(u, mean, var);
        return {output_.inverse(mean[0]), output_.scale * output_.scale * var[0]};
    }

    /// Standardized posterior (mean, latent variance) at unit-cube query columns `q`.
    void posterior_unit(const Eigen::MatrixXd& q, Eigen::VectorXd& mean, Eigen::VectorXd& var) const {
        const Eigen::MatrixXd ks = detail::cross_covariance(unit_inputs_, q, kernel_);
        mean = ks.transpose() * alpha_;
        const Eigen::MatrixXd v = lower_.triangularView<Eigen::Lower>().solve(ks);
        var = (kernel_.signal_variance - v.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
    }

    [[nodiscard]] const KernelParams& kernel() const { return kernel_; }
    [[nodiscard]] const OutputTransform& output_transform() const { return output_; }
    [[nodiscard]] const Box& box() const { return box_; }
    [[nodiscard]] const Eigen::MatrixXd& unit_inputs() const { return unit_inputs_; }
    [[nodiscard]] const Eigen::VectorXd& standardized_targets() const { return targets_; }
    [[nodiscard]] double jitter() const { return jitter_; }
    [[nodiscard]] Eigen::Index size() const { return unit_inputs_.cols(); }
    [[nodiscard]] Eigen::Index dim() const { return unit_inputs_.rows(); }

private:
    Box box_;
    KernelParams kernel_;
    OutputTransform output_;
    Eigen::MatrixXd unit_inputs_;
    Eigen::VectorXd targets_;
    Eigen::MatrixXd lower_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

/// Log marginal likelihood of `data` (targets standardized first) under fixed hyperparameters.
/// Throws NumericalError if the gram matrix cannot be factorized.
inline double log_marginal_likelihood(const TrainingData& data, const Box& box, const KernelParams& kp,
                                      Eigen::VectorXd* grad_log_params = nullptr,
                                      NoiseMode mode = NoiseMode::FixedZero) {
    if (data.size() == 0) throw std::invalid_argument("gp: need at least one training point");
    const Eigen::MatrixXd u = detail::to_unit_matrix(data.inputs, box);
    const Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(data.targets.data(), static_cast<Eigen::Index>(data.targets.size()));
    const OutputTransform t = OutputTransform::fit(raw);
    const Eigen::VectorXd y = (raw.array() - t.mean) / t.scale;
    KernelParams eff = kp;
    if (mode == NoiseMode::FixedZero) eff.noise_variance = 0.0;
    const double v = detail::log_marginal_likelihood(detail::squared_differences(u), y, eff, mode, grad_log_params);
    if (!std::isfinite(v)) throw NumericalError("gp: log marginal likelihood not computable");
    return v;
}

struct FitOptions {
    NoiseMode noise_mode = NoiseMode::FixedZero;
    int restarts = 8;  // total starts, the warm start included
    HyperBounds bounds;
    BoxSearchOptions search;
    std::optional<KernelParams> warm_start;
};

struct FitReport {
    double log_likelihood = -std::numeric_limits<double>::infinity();
    int best_start = -1;
    int evaluations = 0;
};

namespace detail {

/// Runs `maximize_in_box` from `first` (projected) and `restarts - 1` uniform starts in [lo, hi].
/// All random starts are drawn before any search. Ties go to the lowest start index.
template <class Objective>
Eigen::VectorXd multi_start(Objective&& objective, const Eigen::VectorXd& first, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, int restarts, const BoxSearchOptions& search, Rng& rng,
                            FitReport& rep) {
    std::vector<Eigen::VectorXd> starts;
    starts.push_back(first.cwiseMax(lo).cwiseMin(hi));
    for (int s = 1; s < std::max(1, restarts); ++s) {
        Eigen::VectorXd z(lo.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = uniform(rng, lo[i], hi[i]);
        starts.push_back(std::move(z));
    }
    Eigen::VectorXd best_z;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        const auto res = maximize_in_box(objective, starts[s], lo, hi, search);
        rep.evaluations += res.evaluations;
        if (std::isfinite(res.value) && res.value > rep.log_likelihood) {
            rep.log_likelihood = res.value;
            rep.best_start = static_cast<int>(s);
            best_z = res.x;
        }
    }
    if (rep.best_start < 0) throw NumericalError("gp: no hyperparameter start produced a factorizable gram matrix");
    return best_z;
}

/// Unpacks and clamps into the bounds; exp(log(x)) can land one ulp outside.
inline KernelParams unpack_clamped(const Eigen::VectorXd& z, Eigen::Index d, NoiseMode mode, const HyperBounds& hb) {
    KernelParams kp = unpack(z, d, mode);
    kp.signal_variance = std::clamp(kp.signal_variance, hb.signal_variance_lo, hb.signal_variance_hi);
    kp.length_scales = kp.length_scales.cwiseMax(hb.length_scale_lo).cwiseMin(hb.length_scale_hi);
    if (mode == NoiseMode::Optimized) kp.noise_variance = std::clamp(kp.noise_variance, hb.noise_variance_lo, hb.noise_variance_hi);
    return kp;
}

/// First start: the warm start if it fits the dimension, else the bounds' midpoint.
inline KernelParams first_start(const FitOptions& opts, Eigen::Index d) {
    KernelParams first = opts.warm_start.value_or(default_params(opts.bounds, d, opts.noise_mode));
    if (first.length_scales.size() != d) first = default_params(opts.bounds, d, opts.noise_mode);
    if (opts.noise_mode == NoiseMode::Optimized && first.noise_variance <= 0.0) {
        first.noise_variance = default_params(opts.bounds, d, opts.noise_mode).noise_variance;
    }
    return first;
}

}  // namespace detail

/// Multi-start maximum-likelihood fit over log-hyperparameters within `opts.bounds`.
///
/// Start 0 is the warm start (projected into the bounds) or the bounds' geometric midpoint; the
/// remaining starts are log-uniform. Ties in likelihood go to the lowest start index.
inline TrainedGP fit(const TrainingData& data, const Box& box, const FitOptions& opts, Rng& rng,
                     FitReport* report = nullptr) {
    if (data.size() == 0) throw std::invalid_argument("gp: need at least one training point");
    const Eigen::Index d = box.dim();
    const Eigen::MatrixXd u = detail::to_unit_matrix(data.inputs, box);
    const auto d2 = detail::squared_differences(u);
    const Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(data.targets.data(), static_cast<Eigen::Index>(data.targets.size()));
    const OutputTransform t = OutputTransform::fit(raw);
    const Eigen::VectorXd y = (raw.array() - t.mean) / t.scale;
    const auto [lo, hi] = detail::log_bounds(opts.bounds, d, opts.noise_mode);

    auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
        return detail::log_marginal_likelihood(d2, y, detail::unpack(z, d, opts.noise_mode), opts.noise_mode, &g);
    };
    FitReport rep;
    const Eigen::VectorXd best_z = detail::multi_start(objective, detail::pack(detail::first_start(opts, d), opts.noise_mode),
                                                       lo, hi, opts.restarts, opts.search, rng, rep);
    if (report != nullptr) *report = rep;
    return TrainedGP(data, box, detail::unpack_clamped(best_z, d, opts.noise_mode, opts.bounds));
}

}  // namespace esbo::gp
