#include <gtest/gtest.h>

#include <cmath>

#include "esbo/episode.hpp"
#include "esbo/tasks/registry.hpp"

using namespace esbo;

TEST(Registry, DimensionsAndObjectives) {
    struct Row {
        const char* id;
        int d;
        Objective obj;
        bool crashes;
    };
    const Row rows[] = {{"boiler_bangbang", 1, Objective::EnergyComfort, false},
                        {"threetank_pi", 2, Objective::MSE, false},
                        {"pt2_pid", 3, Objective::ITAE, true},
                        {"cartpole_sf", 4, Objective::LQR, true},
                        {"threetank_mpc", 5, Objective::MAE, true}};
    for (const auto& r : rows) {
        const auto task = make_task(r.id);
        EXPECT_EQ(task->dim(), r.d) << r.id;
        EXPECT_EQ(task->spec().objective, r.obj) << r.id;
        EXPECT_EQ(task->spec().can_crash, r.crashes) << r.id;
        EXPECT_EQ(task->spec().log_scaled.size(), static_cast<std::size_t>(r.d));
    }
    EXPECT_EQ(task_ids().size(), 5u);
    EXPECT_THROW(make_task("nope"), UnknownTask);
}

TEST(Registry, TableValues) {
    const auto pt2 = make_task("pt2_pid");
    EXPECT_EQ(pt2->max_steps(), 600);
    EXPECT_DOUBLE_EQ(pt2->spec().dt, 0.1);
    EXPECT_EQ(make_task("threetank_pi")->max_steps(), 900);
    EXPECT_EQ(make_task("cartpole_sf")->max_steps(), 500);
    EXPECT_EQ(make_task("boiler_bangbang")->max_steps(), 1800);
    const Eigen::VectorXd g = pt2->physical(Eigen::Vector3d(-2.0, 0.0, 2.0));
    EXPECT_NEAR(g[0], 0.01, 1e-15);
    EXPECT_NEAR(g[1], 1.0, 1e-15);
    EXPECT_NEAR(g[2], 100.0, 1e-12);
}

TEST(Pt2, ZeroGainMatchesClosedFormDecay) {
    tasks::Pt2Plant p;
    const double y0 = 0.7;
    tasks::Pt2PidSimulator sim(p, 0.0, 0.0, 0.0, MeasurementNoise(0.0, 0), y0);
    double total = 0.0, oracle = 0.0;
    for (int t = 1; t <= p.max_steps; ++t) {
        const StepResult r = sim.step();
        const double time = t * p.dt;
        const double y = y0 * (p.t1 * std::exp(-time / p.t1) - p.t2 * std::exp(-time / p.t2)) / (p.t1 - p.t2);
        EXPECT_NEAR(r.y, y, 1e-12);
        EXPECT_EQ(r.u, 0.0);
        total += r.cost;
        oracle += time * std::abs(p.reference - y) * p.dt;  // rectangle rule on t|e|
    }
    EXPECT_NEAR(total, oracle, 1e-6);
}

TEST(Pt2, DeadTimeDelaysResponse) {
    tasks::Pt2Plant p;
    tasks::Pt2PidSimulator sim(p, 1.0, 0.0, 0.0, MeasurementNoise(0.0, 0));
    for (int t = 1; t <= 10; ++t) EXPECT_EQ(sim.step().y, 0.0) << t;
    EXPECT_GT(sim.step().y, 0.0);
}

namespace {

Eigen::Matrix4d fd_jacobian(const tasks::CartPole& p, Eigen::Vector4d& b) {
    Eigen::Matrix4d a;
    const double h = 1e-6;
    const Eigen::Vector4d z = Eigen::Vector4d::Zero();
    for (int i = 0; i < 4; ++i) {
        Eigen::Vector4d e = Eigen::Vector4d::Zero();
        e[i] = h;
        a.col(i) = (p.deriv(z + e, 0.0) - p.deriv(z - e, 0.0)) / (2 * h);
    }
    b = (p.deriv(z, h) - p.deriv(z, -h)) / (2 * h);
    return a;
}

}  // namespace

TEST(CartPole, LinearizationMatchesFiniteDifferences) {
    tasks::CartPole p;
    Eigen::Matrix4d a;
    Eigen::Vector4d b, b_fd;
    p.linearize(a, b);
    const Eigen::Matrix4d a_fd = fd_jacobian(p, b_fd);
    EXPECT_LT((a - a_fd).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((b - b_fd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CartPole, RiccatiGainsStabilize) {
    tasks::CartPole p;
    Eigen::Vector4d b;
    const Eigen::Matrix4d a = fd_jacobian(p, b);
    auto [ad, bd] = zoh(a, b, p.dt);
    const Eigen::Matrix4d q = p.q_diag.asDiagonal();
    Eigen::Matrix4d P = q;
    Eigen::RowVector4d k;
    for (int it = 0; it < 20000; ++it) {
        const double s = p.r + (bd.transpose() * P * bd)(0, 0);
        k = (bd.transpose() * P * ad) / s;
        const Eigen::Matrix4d next = q + ad.transpose() * P * (ad - bd * k);
        if ((next - P).cwiseAbs().maxCoeff() < 1e-12) break;
        P = next;
    }
    const auto task = make_task("cartpole_sf");
    const ParamVector theta = k.transpose();
    ASSERT_TRUE(task->domain().contains(theta)) << theta.transpose();
    const auto out = run_episode(*task, theta, kInf, false, 0);
    EXPECT_EQ(out.status, EpisodeStatus::Complete);
    EXPECT_TRUE(std::isfinite(out.cost()));
}

TEST(Boiler, ZeroErrorNoHeatingIsFree) {
    tasks::Boiler p;
    p.initial = p.setpoint;
    tasks::BoilerSimulator sim(p, 0.5, MeasurementNoise(0.0, 0));
    const StepResult r = sim.step();
    EXPECT_EQ(r.u, 0.0);
    EXPECT_EQ(r.cost, 0.0);
}

TEST(Boiler, SetpointReachableAndExactStep) {
    tasks::Boiler p;
    EXPECT_GT(p.ambient + p.heat_rate * p.rc, p.setpoint);
    const double t1 = p.advance(30.0, 1.0);
    const double eq = p.ambient + p.heat_rate * p.rc;
    EXPECT_NEAR(t1, eq + (30.0 - eq) * std::exp(-1.0 / 600.0), 1e-12);
}

TEST(ThreeTank, SteadyStateHoldsAtOperatingPoint) {
    tasks::ThreeTankPlant p;
    const double c = 0.1;
    const Eigen::Vector3d h(3 * c, c, 2 * c);
    const double u = p.orifice * std::sqrt(2 * p.g * c) / p.pump_max;
    EXPECT_LT((p.advance(h, u, 10.0, true) - h).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::Vector3d d = p.deriv(Eigen::Vector3d(0.3, 0.1, 0.2), 0.0);
    // mass balance: total volume changes only by the outflow
    EXPECT_NEAR(d.sum() * p.area, -p.orifice * std::sqrt(2 * p.g * 0.1), 1e-15);
}

TEST(ThreeTankMpc, HorizonRoundsIntoRange) {
    using tasks::ThreeTankMpcTask;
    EXPECT_EQ(ThreeTankMpcTask::horizon(5.4), 5);
    EXPECT_EQ(ThreeTankMpcTask::horizon(5.5), 6);
    EXPECT_EQ(ThreeTankMpcTask::horizon(40.0), 40);
    EXPECT_EQ(ThreeTankMpcTask::horizon(99.0), 40);
}

TEST(ThreeTankMpc, SomeDrawsCrashSomeComplete) {
    const auto task = make_task("threetank_mpc");
    Rng rng(2);
    int crashed = 0, complete = 0;
    for (int i = 0; i < 60; ++i) {
        const auto out = run_episode(*task, task->domain().sample(rng), kInf, false, 0);
        (out.status == EpisodeStatus::Crashed ? crashed : complete) += 1;
    }
    EXPECT_GT(crashed, 0);
    EXPECT_GT(complete, 0);
}

TEST(Tasks, NoCrashTasksNeverCrash) {
    for (const char* id : {"boiler_bangbang", "threetank_pi"}) {
        const auto task = make_task(id);
        Rng rng(42);
        for (int i = 0; i < 10000; ++i) {
            const auto out = run_episode(*task, task->domain().sample(rng), kInf, false, 0);
            ASSERT_EQ(out.status, EpisodeStatus::Complete) << id << " draw " << i;
        }
    }
}

TEST(Tasks, DeterministicStageCosts) {
    for (const auto& id : task_ids()) {
        auto task = make_task(id);
        Rng rng(8);
        const ParamVector theta = task->domain().sample(rng);
        EXPECT_EQ(run_episode(*task, theta, kInf, false, 1).stage_costs,
                  run_episode(*task, theta, kInf, false, 2).stage_costs)
            << id;
        task->set_measurement_noise(0.01);
        const auto a = run_episode(*task, theta, kInf, false, 7);
        EXPECT_EQ(a.stage_costs, run_episode(*task, theta, kInf, false, 7).stage_costs) << id;
        EXPECT_NE(a.stage_costs, run_episode(*task, theta, kInf, false, 8).stage_costs) << id;
    }
}

TEST(Tasks, StageCostsSumToNamedMetric) {
    // MSE: sum of per-step e^2 / T equals the mean squared error of the recorded outputs.
    tasks::ThreeTankPiSimulator sim(tasks::ThreeTankPlant{}, 20.0, 0.05, 0.2, 1.0, 900, MeasurementNoise(0.0, 0));
    double cost = 0.0, sq = 0.0;
    for (int t = 0; t < 900; ++t) {
        const StepResult r = sim.step();
        cost += r.cost;
        sq += (0.2 - r.y) * (0.2 - r.y);
    }
    EXPECT_NEAR(cost, sq / 900.0, 1e-15);
    EXPECT_DOUBLE_EQ(itae_stage(7, 0.1, -2.0), 7 * 0.1 * 2.0 * 0.1);
    EXPECT_DOUBLE_EQ(mae_stage(-0.3, 10), 0.03);
}
