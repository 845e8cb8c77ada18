#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esbo/acquisition.hpp"
#include "esbo/episode.hpp"
#include "esbo/gp.hpp"
#include "esbo/rng.hpp"
#include "esbo/tasks/task.hpp"
#include "esbo/virtual_data.hpp"

namespace esbo {

enum class Variant { RS, ESRS, BO, ESBO_C, ESBO_TR, ESBO_GP };

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::RS: return "RS";
        case Variant::ESRS: return "ESRS";
        case Variant::BO: return "BO";
        case Variant::ESBO_C: return "ESBO-C";
        case Variant::ESBO_TR: return "ESBO-TR";
        case Variant::ESBO_GP: return "ESBO-GP";
    }
    return "?";
}

inline std::vector<Variant> all_variants() {
    return {Variant::RS, Variant::ESRS, Variant::BO, Variant::ESBO_C, Variant::ESBO_TR, Variant::ESBO_GP};
}

/// Accepts the display names and their underscore spellings ("ESBO_GP").
inline std::optional<Variant> parse_variant(std::string_view s) {
    for (Variant v : all_variants()) {
        std::string name(to_string(v));
        if (s == name) return v;
        std::replace(name.begin(), name.end(), '-', '_');
        if (s == name) return v;
    }
    return std::nullopt;
}

inline bool uses_early_stopping(Variant v) { return v != Variant::RS && v != Variant::BO; }
inline bool uses_model(Variant v) { return v != Variant::RS && v != Variant::ESRS; }

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Seeds of the independent random streams of one run.
enum class Stream : std::uint64_t { Design = 1, Noise = 2, Model = 3, Fallback = 4 };

struct OptimizerConfig {
    Variant variant = Variant::BO;
    int k_init = 2;
    int max_evals = 0;             // K
    long long step_budget = 0;     // T_budget
    std::uint64_t seed = 0;
    gp::NoiseMode noise_mode = gp::NoiseMode::FixedZero;
    acq::MesOptions mes;
    gp::FitOptions fit;            // bounds, restarts and local-search settings for every GP fit
    // Between full multi-start fits (every `full_fit_every` iterations) the hyperparameters are
    // refined from the previous optimum only, with `light_restarts` starts and `light_max_iters`.
    int full_fit_every = 10;
    int light_restarts = 1;
    int light_max_iters = 30;

    /// Default budgets: k_init = max(d, 2), K = 45 d, T_budget = 15 d T_max.
    static OptimizerConfig defaults_for(const ClosedLoopTask& task, Variant v, std::uint64_t seed) {
        OptimizerConfig c;
        const int d = task.dim();
        c.variant = v;
        c.seed = seed;
        c.k_init = std::max(d, 2);
        c.max_evals = 45 * d;
        c.step_budget = 15LL * d * task.max_steps();
        return c;
    }

    /// K = k_init is accepted (a run of initial samples only).
    void validate(const ClosedLoopTask& task) const {
        if (k_init < 2) throw ConfigError("k_init must be >= 2");
        if (max_evals < k_init) throw ConfigError("K must be >= k_init");
        if (step_budget < static_cast<long long>(k_init) * task.max_steps()) {
            throw ConfigError("T_budget must be >= k_init * T_max");
        }
        if (mes.n_samples < 1 || mes.grid_per_dim < 1 || mes.candidates_per_dim < 1 || mes.refine_steps < 0) {
            throw ConfigError("acquisition settings must be positive");
        }
        if (fit.restarts < 1) throw ConfigError("fit restarts must be >= 1");
        const auto& b = fit.bounds;
        auto range = [](double lo, double hi) { return lo > 0.0 && lo <= hi && std::isfinite(hi); };
        if (!range(b.length_scale_lo, b.length_scale_hi) || !range(b.signal_variance_lo, b.signal_variance_hi) ||
            !range(b.noise_variance_lo, b.noise_variance_hi)) {
            throw ConfigError("hyperparameter bounds must satisfy 0 < lo <= hi < inf");
        }
        if (full_fit_every < 1 || light_restarts < 1 || light_max_iters < 1) {
            throw ConfigError("refit schedule values must be >= 1");
        }
    }
};

/// One evaluation of a run.
struct RunRecord {
    int k = 0;  // 1-based evaluation index
    ParamVector params;
    EpisodeStatus status = EpisodeStatus::Complete;
    int stop_time = 0;
    double cost = 0.0;       // observed (possibly partial) total
    double incumbent = kInf; // J* after this evaluation
    long long cum_steps = 0;
    double wall_ms = 0.0;    // not part of the deterministic output
};

/// In-run checks of the virtual-data contracts.
struct InvariantCounts {
    long long checked = 0;
    long long pessimistic_bounds = 0;  // virtual point outside [J*, J_max]
    long long below_partial = 0;       // section sample below its partial cost
    long long tr_not_minimum = 0;      // incumbent not the minimum time-to-reach value
    long long incumbent_increase = 0;

    [[nodiscard]] long long violations() const {
        return pessimistic_bounds + below_partial + tr_not_minimum + incumbent_increase;
    }
};

struct RunResult {
    std::vector<RunRecord> records;
    InvariantCounts invariants;
    int fallback_proposals = 0;
    bool aborted = false;
    std::string diagnostic;
};

namespace detail {

inline void check_virtual(const vd::Dataset& ds, const vd::VirtualDataset& v, Variant variant, InvariantCounts& c) {
    const double js = ds.incumbent_value();
    const double jm = ds.worst_complete();
    ++c.checked;
    for (std::size_t i = 0; i < v.provenance.size(); ++i) {
        const double t = v.data.targets[i];
        switch (v.provenance[i]) {
            case vd::Provenance::Pessimistic:
            case vd::Provenance::Crash:
                if (!(t >= js && t <= jm)) ++c.pessimistic_bounds;
                break;
            case vd::Provenance::SectionSample:
                if (!(t >= ds.records[i].cost())) ++c.below_partial;
                break;
            default: break;
        }
    }
    if (variant == Variant::ESBO_TR) {
        const double inc = v.data.targets[*ds.incumbent_index()];
        if (inc != *std::min_element(v.data.targets.begin(), v.data.targets.end())) ++c.tr_not_minimum;
    }
}

}  // namespace detail

/// Proposal state that survives between iterations: warm starts for every fit.
struct ProposalContext {
    vd::WarmStart main;
    vd::WarmStart complete_only;
    vd::SectionWarmStarts sections;
    InvariantCounts invariants;
};

/// Builds the variant's virtual dataset, fits the surrogate and maximizes MES. `iteration`
/// selects the random substream. Throws NumericalError if a fit fails.
inline ParamVector propose_model(const OptimizerConfig& cfg, const ClosedLoopTask& task, const vd::Dataset& ds,
                                 ProposalContext& ctx, std::uint64_t iteration) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(Stream::Model), iteration));
    const Box& box = task.domain();
    gp::FitOptions fo = cfg.fit;
    fo.noise_mode = cfg.noise_mode;
    if (iteration % static_cast<std::uint64_t>(cfg.full_fit_every) != 0) {
        fo.restarts = std::min(fo.restarts, cfg.light_restarts);
        fo.search.max_iters = std::min(fo.search.max_iters, cfg.light_max_iters);
    }
    vd::VirtualDataset v;
    switch (cfg.variant) {
        case Variant::BO: v = vd::build_virtual_dataset_crash_only(ds, box, fo, ctx.complete_only, rng); break;
        case Variant::ESBO_C: v = vd::build_virtual_dataset_c(ds, box, fo, ctx.complete_only, rng); break;
        case Variant::ESBO_TR: v = vd::build_virtual_dataset_tr(ds, task.max_steps()); break;
        case Variant::ESBO_GP: v = vd::build_virtual_dataset_gp(ds, box, fo, fo, ctx.sections, rng); break;
        default: throw std::logic_error("propose_model: variant has no model");
    }
    detail::check_virtual(ds, v, cfg.variant, ctx.invariants);
    fo.warm_start = ctx.main;
    const gp::TrainedGP model = gp::fit(v.data, box, fo, rng);
    ctx.main = model.kernel();
    const auto st = acq::make_state(model, cfg.mes, rng);
    return acq::maximize_acquisition(st, box, cfg.mes, rng).theta;
}

/// Uniform draw number `index` of a stream; RS and ESRS see the same sequence for the same seed.
inline ParamVector stream_sample(const Box& box, std::uint64_t seed, Stream s, std::uint64_t index) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s), index));
    return box.sample(rng);
}

/// Replaces `propose_model` for model-based variants; used to plug in other acquisition schemes.
using Proposer = std::function<ParamVector(const vd::Dataset&, ProposalContext&, std::uint64_t iteration)>;

/// Runs one optimization: random initial design (complete episodes), then propose/evaluate until
/// K evaluations or T_budget simulated steps are reached. Termination is checked after each
/// episode, so the step budget may be overshot by at most one episode. A proposer throwing
/// NumericalError is replaced by a uniform draw from the fallback stream.
inline RunResult run_optimization(const OptimizerConfig& cfg, const ClosedLoopTask& task,
                                  const std::function<void(const RunRecord&)>& on_record = {},
                                  const Proposer& proposer = {}) {
    cfg.validate(task);
    RunResult out;
    vd::Dataset ds;
    ProposalContext ctx;
    long long steps = 0;
    double last_incumbent = kInf;
    const Box& box = task.domain();

    auto evaluate = [&](const ParamVector& theta, bool early) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto index = static_cast<std::uint64_t>(ds.records.size());
        const double incumbent = ds.incumbent_value();
        EpisodeOutcome o = run_episode(task, theta, incumbent, early,
                                       derive_seed(cfg.seed, static_cast<std::uint64_t>(Stream::Noise), index));
        steps += o.stop_time;
        RunRecord r;
        r.k = static_cast<int>(index) + 1;
        r.params = o.params;
        r.status = o.status;
        r.stop_time = o.stop_time;
        r.cost = o.cost();
        ds.records.push_back(std::move(o));
        r.incumbent = ds.incumbent_value();
        r.cum_steps = steps;
        if (r.incumbent > last_incumbent) ++ctx.invariants.incumbent_increase;
        last_incumbent = r.incumbent;
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (on_record) on_record(r);
        out.records.push_back(std::move(r));
    };
    auto finish = [&] {
        out.invariants = ctx.invariants;
        return out;
    };
    auto exhausted = [&] {
        return static_cast<int>(ds.records.size()) >= cfg.max_evals || steps >= cfg.step_budget;
    };

    // initial design; extra draws (up to 3 k_init in total) only while no episode has completed
    const int max_attempts = 3 * cfg.k_init;
    std::uint64_t draw = 0;
    while (static_cast<int>(draw) < cfg.k_init ||
           (!ds.has_complete() && static_cast<int>(draw) < max_attempts)) {
        evaluate(stream_sample(box, cfg.seed, Stream::Design, draw), false);
        ++draw;
    }
    if (!ds.has_complete()) {
        out.aborted = true;
        out.diagnostic = "no complete episode in " + std::to_string(max_attempts) + " initial samples";
        return finish();
    }

    std::uint64_t iteration = 0;
    while (!exhausted()) {
        ParamVector theta;
        if (!uses_model(cfg.variant)) {
            theta = stream_sample(box, cfg.seed, Stream::Design, draw++);
        } else {
            try {
                theta = proposer ? proposer(ds, ctx, iteration) : propose_model(cfg, task, ds, ctx, iteration);
            } catch (const NumericalError&) {
                ++out.fallback_proposals;
                theta = stream_sample(box, cfg.seed, Stream::Fallback, iteration);
            }
        }
        ++iteration;
        evaluate(theta, uses_early_stopping(cfg.variant));
    }
    return finish();
}

}  // namespace esbo
