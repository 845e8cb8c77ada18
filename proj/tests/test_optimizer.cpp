#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>

#include "esbo/optimizer.hpp"
#include "esbo/tasks/registry.hpp"

using namespace esbo;

namespace {

// Bowl-shaped toy task: constant stage cost |theta - c|^2 + 0.01; crashes at step 3 when
// theta[0] > crash_above. Cheap enough to run whole optimizations in a unit test.
class Bowl final : public ClosedLoopTask {
public:
    explicit Bowl(double crash_above = 2.0, int steps = 20)
        : ClosedLoopTask(TaskSpec{"bowl", "toy", "toy", Box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)),
                                  {false, false}, steps, 1.0, Objective::MSE, crash_above < 1.0}),
          crash_above_(crash_above) {}

    std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta, std::uint64_t) const override {
        struct Sim final : EpisodeSimulator {
            double stage = 0.0;
            bool crashes = false;
            int t = 0;
            StepResult step() override {
                ++t;
                return {0.0, 0.0, stage, crashes && t == 3};
            }
        };
        auto s = std::make_unique<Sim>();
        s->stage = (theta - Eigen::Vector2d(0.3, 0.6)).squaredNorm() + 0.01;
        s->crashes = theta[0] > crash_above_;
        return s;
    }

private:
    double crash_above_;
};

OptimizerConfig small(Variant v, const ClosedLoopTask& task, std::uint64_t seed, int k) {
    OptimizerConfig c = OptimizerConfig::defaults_for(task, v, seed);
    c.max_evals = k;
    c.step_budget = 1000LL * task.max_steps();
    c.mes.grid_per_dim = 100;
    c.mes.candidates_per_dim = 200;
    c.fit.restarts = 3;
    return c;
}

void expect_same(const RunResult& a, const RunResult& b) {
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].params, b.records[i].params) << i;
        EXPECT_EQ(a.records[i].status, b.records[i].status) << i;
        EXPECT_EQ(a.records[i].stop_time, b.records[i].stop_time) << i;
        EXPECT_EQ(a.records[i].cost, b.records[i].cost) << i;
        EXPECT_EQ(a.records[i].incumbent, b.records[i].incumbent) << i;
        EXPECT_EQ(a.records[i].cum_steps, b.records[i].cum_steps) << i;
    }
}

}  // namespace

TEST(Variants, NamesRoundTrip) {
    for (Variant v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_EQ(parse_variant("ESBO_GP"), Variant::ESBO_GP);
    EXPECT_FALSE(parse_variant("esbo-gp").has_value());
    EXPECT_TRUE(uses_early_stopping(Variant::ESRS));
    EXPECT_FALSE(uses_early_stopping(Variant::BO));
    EXPECT_FALSE(uses_model(Variant::ESRS));
}

TEST(Config, DefaultBudgets) {
    const auto task = make_task("pt2_pid");
    const auto c = OptimizerConfig::defaults_for(*task, Variant::BO, 4);
    EXPECT_EQ(c.k_init, 3);
    EXPECT_EQ(c.max_evals, 135);
    EXPECT_EQ(c.step_budget, 15LL * 3 * 600);
    EXPECT_EQ(OptimizerConfig::defaults_for(*make_task("boiler_bangbang"), Variant::BO, 0).k_init, 2);
}

TEST(Config, ValidationErrors) {
    Bowl task;
    auto c = small(Variant::BO, task, 0, 10);
    EXPECT_NO_THROW(c.validate(task));
    auto bad = c;
    bad.k_init = 1;
    EXPECT_THROW(bad.validate(task), ConfigError);
    bad = c;
    bad.max_evals = 1;
    EXPECT_THROW(bad.validate(task), ConfigError);
    bad = c;
    bad.step_budget = 2LL * task.max_steps() - 1;
    EXPECT_THROW(bad.validate(task), ConfigError);
    bad = c;
    bad.mes.n_samples = 0;
    EXPECT_THROW(bad.validate(task), ConfigError);
    bad = c;
    bad.full_fit_every = 0;
    EXPECT_THROW(run_optimization(bad, task), ConfigError);
}

TEST(Optimizer, KEqualsInitialDesign) {
    Bowl task;
    for (Variant v : {Variant::RS, Variant::BO, Variant::ESBO_GP}) {
        auto c = small(v, task, 1, 2);
        const auto r = run_optimization(c, task);
        EXPECT_EQ(r.records.size(), 2u) << to_string(v);
        EXPECT_FALSE(r.aborted);
    }
}

TEST(Optimizer, EsrsMatchesRsIncumbentsWithFewerSteps) {
    const auto task = make_task("pt2_pid");
    for (std::uint64_t seed : {0u, 5u}) {
        auto c = OptimizerConfig::defaults_for(*task, Variant::RS, seed);
        c.max_evals = 40;
        c.step_budget = 1000000;
        const auto rs = run_optimization(c, *task);
        c.variant = Variant::ESRS;
        const auto es = run_optimization(c, *task);
        ASSERT_EQ(rs.records.size(), es.records.size());
        for (std::size_t i = 0; i < rs.records.size(); ++i) {
            EXPECT_EQ(rs.records[i].params, es.records[i].params);
            EXPECT_EQ(rs.records[i].incumbent, es.records[i].incumbent) << i;
            EXPECT_LE(es.records[i].cum_steps, rs.records[i].cum_steps);
        }
        EXPECT_LT(es.records.back().cum_steps, rs.records.back().cum_steps);
    }
}

TEST(Optimizer, RecordInvariantsAndBudget) {
    const auto task = make_task("pt2_pid");
    for (Variant v : all_variants()) {
        auto c = OptimizerConfig::defaults_for(*task, v, 3);
        c.max_evals = 30;
        c.step_budget = 8LL * task->max_steps();
        c.mes.grid_per_dim = 100;
        c.mes.candidates_per_dim = 200;
        const auto r = run_optimization(c, *task);
        ASSERT_FALSE(r.records.empty());
        const auto& last = r.records.back();
        EXPECT_LE(last.cum_steps, c.step_budget + task->max_steps()) << to_string(v);
        EXPECT_TRUE(static_cast<int>(r.records.size()) == c.max_evals || last.cum_steps >= c.step_budget);
        // the run stops as soon as a budget is hit
        const auto& prev = r.records[r.records.size() - 2];
        EXPECT_LT(prev.cum_steps, c.step_budget);
        for (std::size_t i = 0; i < r.records.size(); ++i) {
            const auto& rec = r.records[i];
            EXPECT_EQ(rec.k, static_cast<int>(i) + 1);
            EXPECT_TRUE(task->domain().contains(rec.params));
            if (i > 0) {
                EXPECT_LE(rec.incumbent, r.records[i - 1].incumbent);
                EXPECT_GT(rec.cum_steps, r.records[i - 1].cum_steps);
            }
            if (!uses_early_stopping(v)) {
                EXPECT_NE(rec.status, EpisodeStatus::StoppedEarly);
            }
        }
        EXPECT_EQ(r.invariants.violations(), 0) << to_string(v);
    }
}

TEST(Optimizer, DeterministicPerSeed) {
    Bowl task(0.7);
    for (Variant v : {Variant::ESRS, Variant::ESBO_C, Variant::ESBO_TR, Variant::ESBO_GP}) {
        const auto c = small(v, task, 11, 14);
        expect_same(run_optimization(c, task), run_optimization(c, task));
    }
    auto c = small(Variant::BO, task, 11, 14);
    const auto a = run_optimization(c, task);
    c.seed = 12;
    const auto b = run_optimization(c, task);
    EXPECT_NE(a.records.front().params, b.records.front().params);
}

TEST(Optimizer, ModelVariantsFindTheBowl) {
    Bowl task(0.7);
    for (Variant v : {Variant::BO, Variant::ESBO_C, Variant::ESBO_TR, Variant::ESBO_GP}) {
        const auto r = run_optimization(small(v, task, 2, 25), task);
        // optimum 0.01 per step, 20 steps
        EXPECT_LT(r.records.back().incumbent, 0.2 + 20 * 0.01) << to_string(v);
        EXPECT_EQ(r.invariants.violations(), 0);
        EXPECT_GT(r.invariants.checked, 0);
    }
}

TEST(Optimizer, CrashOnlyInitialDesignAborts) {
    Bowl task(-1.0);  // every episode crashes
    const auto r = run_optimization(small(Variant::BO, task, 0, 10), task);
    EXPECT_TRUE(r.aborted);
    EXPECT_EQ(r.records.size(), 6u);  // 3 k_init attempts
    EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Optimizer, InitialDesignExtendsUntilComplete) {
    Bowl task(0.5);
    // a seed whose first k_init = 2 design draws crash but a later one (of 6) completes
    std::uint64_t seed = 0;
    auto crashes = [&](std::uint64_t s, std::uint64_t i) {
        return stream_sample(task.domain(), s, Stream::Design, i)[0] > 0.5;
    };
    while (!(crashes(seed, 0) && crashes(seed, 1) && (!crashes(seed, 2) || !crashes(seed, 3)))) ++seed;
    const auto r = run_optimization(small(Variant::BO, task, seed, 12), task);
    ASSERT_FALSE(r.aborted);
    EXPECT_EQ(r.records[0].status, EpisodeStatus::Crashed);
    EXPECT_EQ(r.records[1].status, EpisodeStatus::Crashed);
    EXPECT_EQ(r.records.size(), 12u);
}

TEST(Optimizer, FailedProposalFallsBackToRandomDraw) {
    Bowl task;
    const auto c = small(Variant::BO, task, 0, 6);
    int calls = 0;
    auto failing = [&](const vd::Dataset&, ProposalContext&, std::uint64_t it) -> ParamVector {
        ++calls;
        if (it % 2 == 0) throw NumericalError("synthetic");
        return Eigen::Vector2d(0.3, 0.6);
    };
    const auto r = run_optimization(c, task, {}, failing);
    ASSERT_EQ(r.records.size(), 6u);
    EXPECT_EQ(calls, 4);
    EXPECT_EQ(r.fallback_proposals, 2);
    EXPECT_EQ(r.records[2].params, stream_sample(task.domain(), 0, Stream::Fallback, 0));
    EXPECT_EQ(r.records[3].params, Eigen::Vector2d(0.3, 0.6));
    EXPECT_EQ(r.records[4].params, stream_sample(task.domain(), 0, Stream::Fallback, 2));
}

TEST(Config, RejectsBadHyperBounds) {
    Bowl task;
    auto c = small(Variant::BO, task, 0, 6);
    c.fit.bounds.signal_variance_lo = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(run_optimization(c, task), ConfigError);
    c = small(Variant::BO, task, 0, 6);
    c.fit.bounds.length_scale_lo = 2 * c.fit.bounds.length_scale_hi;
    EXPECT_THROW(c.validate(task), ConfigError);
}
