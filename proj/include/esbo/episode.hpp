#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "esbo/tasks/task.hpp"
#include "esbo/types.hpp"

namespace esbo {

/// Stop once the running cost reaches the incumbent; +inf (no incumbent yet) never stops.
inline bool stopping_rule(double cumulative_cost, double incumbent) { return cumulative_cost >= incumbent; }

/// Runs one closed-loop episode. With `early_stop` the episode is aborted at the first step whose
/// cumulative cost reaches `incumbent`. A step that both reaches the incumbent and crashes counts
/// as stopped: the rule decides on cost alone and has already fired. Non-finite stage costs are
/// recorded as 0 and end the episode as a crash.
inline EpisodeOutcome run_episode(const ClosedLoopTask& task, const ParamVector& theta, double incumbent,
                                  bool early_stop, std::uint64_t noise_seed) {
    EpisodeOutcome out;
    out.params = theta;
    const int t_max = task.max_steps();
    out.stage_costs.reserve(static_cast<std::size_t>(t_max));
    auto sim = task.start(theta, noise_seed);
    double cum = 0.0;
    for (int t = 1; t <= t_max; ++t) {
        StepResult r = sim->step();
        bool crashed = r.crashed;
        if (!std::isfinite(r.cost)) {
            r.cost = 0.0;
            crashed = true;
        }
        const double j = std::max(0.0, r.cost);
        out.stage_costs.push_back(j);
        cum += j;
        out.stop_time = t;
        if (early_stop && stopping_rule(cum, incumbent)) {
            out.status = EpisodeStatus::StoppedEarly;
            return out;
        }
        if (crashed) {
            out.status = EpisodeStatus::Crashed;
            return out;
        }
    }
    out.status = EpisodeStatus::Complete;
    return out;
}

}  // namespace esbo
