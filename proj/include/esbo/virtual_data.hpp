#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "esbo/gp.hpp"
#include "esbo/rng.hpp"
#include "esbo/types.hpp"

namespace esbo::vd {

enum class Provenance { Observed, Pessimistic, TimeToReach, SectionSample, Crash };

/// Evaluated episodes of one optimization run, in evaluation order.
struct Dataset {
    std::vector<EpisodeOutcome> records;

    [[nodiscard]] bool has_complete() const {
        return std::any_of(records.begin(), records.end(), [](const auto& r) { return r.complete(); });
    }

    /// Lowest-index Complete record with the minimum total cost.
    [[nodiscard]] std::optional<std::size_t> incumbent_index() const {
        std::optional<std::size_t> best;
        double v = kInf;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!records[i].complete()) continue;
            const double c = records[i].cost();
            if (!best || c < v) {
                best = i;
                v = c;
            }
        }
        return best;
    }

    /// J*: best Complete total cost, +inf without any Complete record.
    [[nodiscard]] double incumbent_value() const {
        const auto i = incumbent_index();
        return i ? records[*i].cost() : kInf;
    }

    /// J_max: worst Complete total cost, -inf without any Complete record.
    [[nodiscard]] double worst_complete() const {
        double v = -kInf;
        for (const auto& r : records) {
            if (r.complete()) v = std::max(v, r.cost());
        }
        return v;
    }
};

/// One training point per record, same order as the records.
struct VirtualDataset {
    gp::TrainingData data;
    std::vector<Provenance> provenance;

    void add(const ParamVector& theta, double value, Provenance p) {
        data.add(theta, value);
        provenance.push_back(p);
    }
};

inline VirtualDataset observed_only(const Dataset& ds) {
    VirtualDataset out;
    for (const auto& r : ds.records) out.add(r.params, r.cost(), Provenance::Observed);
    return out;
}

/// min(max(mean, J*) + 3 sd, J_max)
inline double pessimistic_value(double mean, double sd, double j_star, double j_max) {
    return std::min(std::max(mean, j_star) + 3.0 * sd, j_max);
}

/// Where a fitted hyperparameter set goes after a fit (for warm starts on the next iteration).
using WarmStart = std::optional<gp::KernelParams>;

namespace detail {

/// GP on the Complete records only, used to score unfinished ones pessimistically.
inline gp::TrainedGP complete_only_gp(const Dataset& ds, const Box& box, gp::FitOptions opts, WarmStart& warm,
                                      Rng& rng) {
    gp::TrainingData data;
    for (const auto& r : ds.records) {
        if (r.complete()) data.add(r.params, r.cost());
    }
    opts.warm_start = warm;
    gp::TrainedGP g = gp::fit(data, box, opts, rng);
    warm = g.kernel();
    return g;
}

inline void check_has_complete(const Dataset& ds) {
    if (!ds.has_complete()) throw std::invalid_argument("virtual data: need at least one complete episode");
}

}  // namespace detail

/// Pessimistic virtual points for every non-Complete record (`include_stopped`) or only for
/// Crashed ones. Complete records pass through.
inline VirtualDataset build_pessimistic(const Dataset& ds, const Box& box, const gp::FitOptions& opts,
                                        WarmStart& warm, Rng& rng, bool include_stopped) {
    detail::check_has_complete(ds);
    const bool any = std::any_of(ds.records.begin(), ds.records.end(), [&](const auto& r) {
        return r.status == EpisodeStatus::Crashed || (include_stopped && r.status == EpisodeStatus::StoppedEarly);
    });
    if (!any) return observed_only(ds);
    const gp::TrainedGP g = detail::complete_only_gp(ds, box, opts, warm, rng);
    const double j_star = ds.incumbent_value();
    const double j_max = ds.worst_complete();
    VirtualDataset out;
    for (const auto& r : ds.records) {
        const bool crashed = r.status == EpisodeStatus::Crashed;
        if (r.complete() || (!crashed && !include_stopped)) {
            out.add(r.params, r.cost(), Provenance::Observed);
            continue;
        }
        const auto post = g.posterior(r.params);
        out.add(r.params, pessimistic_value(post.mean, std::sqrt(std::max(0.0, post.variance)), j_star, j_max),
                crashed ? Provenance::Crash : Provenance::Pessimistic);
    }
    return out;
}

inline VirtualDataset build_virtual_dataset_c(const Dataset& ds, const Box& box, const gp::FitOptions& opts,
                                              WarmStart& warm, Rng& rng) {
    return build_pessimistic(ds, box, opts, warm, rng, true);
}

inline VirtualDataset build_virtual_dataset_crash_only(const Dataset& ds, const Box& box,
                                                       const gp::FitOptions& opts, WarmStart& warm, Rng& rng) {
    return build_pessimistic(ds, box, opts, warm, rng, false);
}

/// First 1-based step whose running cost reaches `threshold`.
inline std::optional<int> first_crossing(const std::vector<double>& stage_costs, double threshold) {
    double cum = 0.0;
    for (std::size_t t = 0; t < stage_costs.size(); ++t) {
        cum += stage_costs[t];
        if (cum >= threshold) return static_cast<int>(t) + 1;
    }
    return std::nullopt;
}

/// Negated time-to-reach-J*. The incumbent gets -T_max, crashes their crash step; a record
/// that never reaches J* within its observed horizon gets one step past it.
inline VirtualDataset build_virtual_dataset_tr(const Dataset& ds, int t_max) {
    detail::check_has_complete(ds);
    const std::size_t inc = *ds.incumbent_index();
    const double j_star = ds.records[inc].cost();
    VirtualDataset out;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        int t = 0;
        if (i == inc) {
            t = t_max;
        } else if (r.status == EpisodeStatus::Crashed) {
            t = r.stop_time;
        } else if (const auto c = first_crossing(r.stage_costs, j_star)) {
            t = *c;
        } else {
            t = std::min(r.stop_time + 1, t_max);
        }
        out.add(r.params, -static_cast<double>(t), i == inc ? Provenance::Observed : Provenance::TimeToReach);
    }
    return out;
}

/// Sorted unique lengths of the non-crashed records.
inline std::vector<int> section_boundaries(const Dataset& ds) {
    std::vector<int> b;
    for (const auto& r : ds.records) {
        if (r.status != EpisodeStatus::Crashed) b.push_back(r.stop_time);
    }
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
}

/// Section cost models for the unobserved tails of stopped episodes. Section q covers steps
/// (b_q, b_{q+1}] and is trained on every non-crashed episode that ran at least to b_{q+1}.
///
/// All sections share one kernel; its hyperparameters maximize the summed log marginal
/// likelihood of the separately standardized section targets. Training rows are ordered by
/// length, longest first, so each section's training set is a leading block and one Cholesky
/// factor serves all of them.
class SectionModel {
public:
    SectionModel(const Dataset& ds, const Box& box, gp::FitOptions opts, WarmStart& warm, Rng& rng)
        : box_(box), boundaries_(section_boundaries(ds)) {
        const int n_sec = sections();
        if (n_sec == 0) return;
        std::vector<const EpisodeOutcome*> rows;
        for (const auto& r : ds.records) {
            if (r.status != EpisodeStatus::Crashed && r.stop_time >= boundaries_[1]) rows.push_back(&r);
        }
        std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->stop_time > b->stop_time; });
        const auto n = static_cast<Eigen::Index>(rows.size());
        std::vector<ParamVector> inputs;
        for (auto* r : rows) inputs.push_back(r->params);
        unit_inputs_ = gp::detail::to_unit_matrix(inputs, box);

        counts_.resize(static_cast<std::size_t>(n_sec));
        targets_ = Eigen::MatrixXd::Zero(n, n_sec);
        for (int q = 0; q < n_sec; ++q) {
            const int lo = boundaries_[static_cast<std::size_t>(q)];
            const int hi = boundaries_[static_cast<std::size_t>(q) + 1];
            Eigen::Index k = 0;
            while (k < n && rows[static_cast<std::size_t>(k)]->stop_time >= hi) ++k;
            counts_[static_cast<std::size_t>(q)] = k;
            Eigen::VectorXd y(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                const auto& c = rows[static_cast<std::size_t>(i)]->stage_costs;
                y[i] = std::accumulate(c.begin() + lo, c.begin() + hi, 0.0);
            }
            transforms_.push_back(gp::OutputTransform::fit(y));
            targets_.col(q).head(k) = (y.array() - transforms_.back().mean) / transforms_.back().scale;
        }
        weights_ = Eigen::VectorXd::Zero(n);
        for (auto k : counts_) weights_.head(k).array() += 1.0;

        const Eigen::Index d = box.dim();
        const auto d2 = gp::detail::squared_differences(unit_inputs_);
        const auto [lo, hi] = gp::detail::log_bounds(opts.bounds, d, opts.noise_mode);
        auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
            return log_likelihood(d2, gp::detail::unpack(z, d, opts.noise_mode), opts.noise_mode, &g);
        };
        opts.warm_start = warm;
        gp::FitReport rep;
        const Eigen::VectorXd best = gp::detail::multi_start(
            objective, gp::detail::pack(gp::detail::first_start(opts, d), opts.noise_mode), lo, hi, opts.restarts,
            opts.search, rng, rep);
        kernel_ = gp::detail::unpack_clamped(best, d, opts.noise_mode, opts.bounds);
        warm = kernel_;
        log_likelihood_ = rep.log_likelihood;

        const auto factor = gp::detail::factorize(gp::detail::signal_gram(d2, kernel_), kernel_);
        if (!factor) throw NumericalError("section model: gram matrix not positive definite");
        lower_ = factor->lower;
        alpha_ = solve_alpha(lower_);
    }

    [[nodiscard]] int sections() const { return std::max(0, static_cast<int>(boundaries_.size()) - 1); }
    [[nodiscard]] const std::vector<int>& boundaries() const { return boundaries_; }
    [[nodiscard]] const std::vector<Eigen::Index>& training_counts() const { return counts_; }
    [[nodiscard]] const gp::KernelParams& kernel() const { return kernel_; }
    [[nodiscard]] double fitted_log_likelihood() const { return log_likelihood_; }

    /// Sum over sections starting at length `from` (must be a boundary) of the section means,
    /// each floored at 0, and of the section variances, in cost units.
    void predict_remainder(const ParamVector& theta, int from, double& mean, double& var) const {
        mean = 0.0;
        var = 0.0;
        const auto it = std::find(boundaries_.begin(), boundaries_.end(), from);
        if (it == boundaries_.end()) throw std::invalid_argument("section model: length is not a boundary");
        const auto first = static_cast<int>(it - boundaries_.begin());
        if (first >= sections()) return;
        const Eigen::MatrixXd ks = gp::detail::cross_covariance(unit_inputs_, box_.to_unit(theta), kernel_);
        const Eigen::VectorXd v = lower_.triangularView<Eigen::Lower>().solve(ks).col(0);
        for (int q = first; q < sections(); ++q) {
            const Eigen::Index k = counts_[static_cast<std::size_t>(q)];
            const auto& t = transforms_[static_cast<std::size_t>(q)];
            const double m = ks.col(0).head(k).dot(alpha_.col(q).head(k));
            const double s2 = std::max(0.0, kernel_.signal_variance - v.head(k).squaredNorm());
            mean += std::max(0.0, t.inverse(m));
            var += t.scale * t.scale * s2;
        }
    }

    /// Summed section log marginal likelihood with gradient w.r.t. packed log-hyperparameters.
    double log_likelihood(const std::vector<Eigen::MatrixXd>& d2, const gp::KernelParams& kp, gp::NoiseMode mode,
                          Eigen::VectorXd* grad) const {
        const Eigen::MatrixXd signal = gp::detail::signal_gram(d2, kp);
        const auto factor = gp::detail::factorize(signal, kp);
        if (!factor) return -std::numeric_limits<double>::infinity();
        const auto& l = factor->lower;
        const auto tri = l.triangularView<Eigen::Lower>();
        Eigen::MatrixXd z = tri.solve(targets_);
        mask(z);
        const double quad = z.squaredNorm();
        double points = 0.0;
        for (auto k : counts_) points += static_cast<double>(k);
        const double log_det = 2.0 * weights_.dot(l.diagonal().array().log().matrix());
        const double value = -0.5 * quad - 0.5 * log_det - 0.5 * points * std::log(2.0 * std::numbers::pi);
        if (grad != nullptr) {
            tri.transpose().solveInPlace(z);  // z now holds the zero-padded alphas
            const Eigen::Index n = l.rows();
            Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(n, n);
            tri.solveInPlace(linv);
            linv = weights_.cwiseSqrt().asDiagonal() * linv;
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
            w.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose(), -1.0);
            w.selfadjointView<Eigen::Lower>().rankUpdate(z, 1.0);
            w = w.selfadjointView<Eigen::Lower>();
            const Eigen::Index d = kp.length_scales.size();
            grad->resize(d + 1 + (mode == gp::NoiseMode::Optimized ? 1 : 0));
            const Eigen::MatrixXd ws = w.cwiseProduct(signal);
            (*grad)[0] = 0.5 * (ws.sum() + factor->jitter * w.trace());
            for (Eigen::Index i = 0; i < d; ++i) {
                const double li = kp.length_scales[i];
                (*grad)[i + 1] = 0.5 * ws.cwiseProduct(d2[static_cast<std::size_t>(i)]).sum() / (li * li);
            }
            if (mode == gp::NoiseMode::Optimized) (*grad)[d + 1] = 0.5 * kp.noise_variance * w.trace();
        }
        return value;
    }

private:
    void mask(Eigen::MatrixXd& z) const {
        for (std::size_t q = 0; q < counts_.size(); ++q) {
            const Eigen::Index k = counts_[q];
            z.col(static_cast<Eigen::Index>(q)).tail(z.rows() - k).setZero();
        }
    }

    Eigen::MatrixXd solve_alpha(const Eigen::MatrixXd& l) const {
        const auto tri = l.triangularView<Eigen::Lower>();
        Eigen::MatrixXd z = tri.solve(targets_);
        mask(z);
        tri.transpose().solveInPlace(z);
        return z;
    }

    Box box_;
    std::vector<int> boundaries_;
    Eigen::MatrixXd unit_inputs_;
    std::vector<Eigen::Index> counts_;
    std::vector<gp::OutputTransform> transforms_;
    Eigen::MatrixXd targets_;   // standardized, zero-padded below each section's count
    Eigen::VectorXd weights_;   // number of sections each row trains
    gp::KernelParams kernel_;
    Eigen::MatrixXd lower_;
    Eigen::MatrixXd alpha_;
    double log_likelihood_ = 0.0;
};

/// Warm starts for the fits inside the ESBO-GP construction.
struct SectionWarmStarts {
    WarmStart sections;
    WarmStart complete_only;
};

/// Stopped records get a draw from the section-model estimate of their full cost, clamped to at
/// least their observed partial cost; crashed records get pessimistic points.
inline VirtualDataset build_virtual_dataset_gp(const Dataset& ds, const Box& box, const gp::FitOptions& section_opts,
                                               const gp::FitOptions& complete_opts, SectionWarmStarts& warm,
                                               Rng& rng) {
    detail::check_has_complete(ds);
    const bool stopped = std::any_of(ds.records.begin(), ds.records.end(),
                                     [](const auto& r) { return r.status == EpisodeStatus::StoppedEarly; });
    const bool crashed = std::any_of(ds.records.begin(), ds.records.end(),
                                     [](const auto& r) { return r.status == EpisodeStatus::Crashed; });
    if (!stopped && !crashed) return observed_only(ds);

    std::optional<SectionModel> sections;
    if (stopped) sections.emplace(ds, box, section_opts, warm.sections, rng);
    std::optional<gp::TrainedGP> complete;
    if (crashed) complete.emplace(detail::complete_only_gp(ds, box, complete_opts, warm.complete_only, rng));
    const double j_star = ds.incumbent_value();
    const double j_max = ds.worst_complete();

    VirtualDataset out;
    for (const auto& r : ds.records) {
        if (r.status == EpisodeStatus::Complete) {
            out.add(r.params, r.cost(), Provenance::Observed);
        } else if (r.status == EpisodeStatus::Crashed) {
            const auto post = complete->posterior(r.params);
            out.add(r.params, pessimistic_value(post.mean, std::sqrt(std::max(0.0, post.variance)), j_star, j_max),
                    Provenance::Crash);
        } else {
            const double partial = r.cost();
            double mean = 0.0, var = 0.0;
            sections->predict_remainder(r.params, r.stop_time, mean, var);
            const double draw = partial + mean + std::sqrt(var) * standard_normal(rng);
            out.add(r.params, std::max(partial, draw), Provenance::SectionSample);
        }
    }
    return out;
}

}  // namespace esbo::vd
