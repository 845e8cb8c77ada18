#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "esbo/tasks/task.hpp"

namespace esbo::tasks {

/// Triple-tank plant. The pump feeds tank 1; water flows 1 -> 3 -> 2 -> outlet through equal
/// orifices (Torricelli). State order is (h1, h2, h3); tank 3 sits in the middle.
struct ThreeTankPlant {
    double area = 0.0154;
    double orifice = 5e-5;
    double g = 9.81;
    double h_max = 0.6;
    double pump_max = 1e-4;  // m^3/s at u = 1
    int substeps = 10;

    [[nodiscard]] double flow(double dh) const {
        return orifice * std::copysign(std::sqrt(2.0 * g * std::abs(dh)), dh);
    }

    [[nodiscard]] Eigen::Vector3d deriv(const Eigen::Vector3d& h, double q_in) const {
        const double q13 = flow(h[0] - h[2]);
        const double q32 = flow(h[2] - h[1]);
        const double q20 = orifice * std::sqrt(2.0 * g * std::max(h[1], 0.0));
        return Eigen::Vector3d(q_in - q13, q32 - q20, q13 - q32) / area;
    }

    /// Advances `dt` seconds with constant pump input u in [0, 1]. With `clamp_top` the levels are
    /// held at h_max (overflow spills); otherwise they may exceed it.
    [[nodiscard]] Eigen::Vector3d advance(Eigen::Vector3d h, double u, double dt, bool clamp_top) const {
        const double q = u * pump_max;
        const double hs = dt / substeps;
        const double top = clamp_top ? h_max : kInf;
        for (int s = 0; s < substeps; ++s) {
            h = rk4(h, hs, [&](const Eigen::Vector3d& x) { return deriv(x, q); });
            h = h.cwiseMax(0.0).cwiseMin(top);
        }
        return h;
    }
};

class ThreeTankPiSimulator final : public EpisodeSimulator {
public:
    ThreeTankPiSimulator(const ThreeTankPlant& p, double kp, double ki, double reference, double dt, int max_steps,
                         MeasurementNoise noise)
        : p_(p), kp_(kp), ki_(ki), ref_(reference), dt_(dt), max_steps_(max_steps), noise_(std::move(noise)) {
        y_meas_ = noise_(h_[2]);
    }

    StepResult step() override {
        const double e = ref_ - y_meas_;
        integral_ += e * dt_;
        const double u = std::clamp(kp_ * e + ki_ * integral_, 0.0, 1.0);
        h_ = p_.advance(h_, u, dt_, true);
        y_meas_ = noise_(h_[2]);

        StepResult r;
        r.u = u;
        r.y = y_meas_;
        r.cost = mse_stage(ref_ - y_meas_, max_steps_);
        r.crashed = false;
        return r;
    }

private:
    ThreeTankPlant p_;
    double kp_, ki_, ref_, dt_;
    int max_steps_;
    MeasurementNoise noise_;
    Eigen::Vector3d h_ = Eigen::Vector3d::Zero();
    double integral_ = 0.0;
    double y_meas_ = 0.0;
};

class ThreeTankPiTask final : public ClosedLoopTask {
public:
    explicit ThreeTankPiTask(ThreeTankPlant plant = {}, double reference = 0.2)
        : ClosedLoopTask(TaskSpec{"threetank_pi", "pi", "three tank",
                                  Box(Eigen::Vector2d::Constant(-2.0), Eigen::Vector2d::Constant(2.0)),
                                  {true, true}, 900, 1.0, Objective::MSE, false}),
          plant_(plant),
          reference_(reference) {}

    [[nodiscard]] std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta,
                                                          std::uint64_t noise_seed) const override {
        const Eigen::VectorXd g = physical(theta);
        return std::make_unique<ThreeTankPiSimulator>(plant_, g[0], g[1], reference_, spec().dt, max_steps(),
                                                      MeasurementNoise(measurement_noise(), noise_seed));
    }

private:
    ThreeTankPlant plant_;
    double reference_;
};

}  // namespace esbo::tasks
