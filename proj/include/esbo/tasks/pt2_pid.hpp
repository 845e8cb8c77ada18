#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>

#include "esbo/tasks/task.hpp"

namespace esbo::tasks {

/// PT2 plant with input dead time, K / ((T1 s + 1)(T2 s + 1)) e^{-L s}.
struct Pt2Plant {
    double gain = 1.0;
    double t1 = 5.0;
    double t2 = 2.0;
    double dead_time = 1.0;
    double dt = 0.1;
    double u_max = 50.0;
    double crash_level = 10.0;
    double reference = 1.0;
    int max_steps = 600;
};

class Pt2PidSimulator final : public EpisodeSimulator {
public:
    /// `y0` starts the plant off equilibrium with zero output rate; used by the open-loop oracle test.
    Pt2PidSimulator(const Pt2Plant& p, double kp, double ki, double kd, MeasurementNoise noise, double y0 = 0.0)
        : p_(p), kp_(kp), ki_(ki), kd_(kd), noise_(std::move(noise)) {
        Eigen::Matrix2d a;
        a << 0.0, 1.0, -1.0 / (p.t1 * p.t2), -(p.t1 + p.t2) / (p.t1 * p.t2);
        Eigen::Vector2d b(0.0, p.gain / (p.t1 * p.t2));
        auto [ad, bd] = zoh(a, b, p.dt);
        ad_ = ad;
        bd_ = bd.col(0);
        x_ = Eigen::Vector2d(y0, 0.0);
        delay_.assign(static_cast<std::size_t>(std::lround(p.dead_time / p.dt)), 0.0);
        y_meas_ = noise_(x_[0]);
        y_prev_ = y_meas_;
    }

    StepResult step() override {
        ++t_;
        const double e = p_.reference - y_meas_;
        integral_ += e * p_.dt;
        // derivative on measurement avoids the setpoint kick
        double u = kp_ * e + ki_ * integral_ - kd_ * (y_meas_ - y_prev_) / p_.dt;
        y_prev_ = y_meas_;
        u = std::clamp(u, -p_.u_max, p_.u_max);
        double applied = u;
        if (!delay_.empty()) {
            delay_.push_back(u);
            applied = delay_.front();
            delay_.pop_front();
        }
        x_ = ad_ * x_ + bd_ * applied;
        y_meas_ = noise_(x_[0]);

        StepResult r;
        r.u = u;
        r.y = y_meas_;
        r.cost = itae_stage(t_, p_.dt, p_.reference - y_meas_);
        r.crashed = !std::isfinite(x_[0]) || std::abs(x_[0]) > p_.crash_level;
        return r;
    }

private:
    Pt2Plant p_;
    double kp_, ki_, kd_;
    MeasurementNoise noise_;
    Eigen::Matrix2d ad_;
    Eigen::Vector2d bd_;
    Eigen::Vector2d x_;
    std::deque<double> delay_;
    double integral_ = 0.0;
    double y_meas_ = 0.0;
    double y_prev_ = 0.0;
    int t_ = 0;
};

class Pt2PidTask final : public ClosedLoopTask {
public:
    explicit Pt2PidTask(Pt2Plant plant = {})
        : ClosedLoopTask(TaskSpec{"pt2_pid", "pid", "PT2 with dead time",
                                  Box(Eigen::Vector3d::Constant(-2.0), Eigen::Vector3d::Constant(2.0)),
                                  {true, true, true}, plant.max_steps, plant.dt, Objective::ITAE, true}),
          plant_(plant) {}

    [[nodiscard]] const Pt2Plant& plant() const { return plant_; }

    [[nodiscard]] std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta,
                                                          std::uint64_t noise_seed) const override {
        const Eigen::VectorXd g = physical(theta);
        return std::make_unique<Pt2PidSimulator>(plant_, g[0], g[1], g[2],
                                                 MeasurementNoise(measurement_noise(), noise_seed));
    }

private:
    Pt2Plant plant_;
};

}  // namespace esbo::tasks
