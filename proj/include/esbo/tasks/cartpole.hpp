#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "esbo/tasks/task.hpp"

namespace esbo::tasks {

/// Cart-pole with a uniform pole of half-length `half_length`. State (x, x', angle, angle').
struct CartPole {
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5;
    double g = 9.81;
    double dt = 0.02;
    double force_max = 30.0;
    double angle_limit = 0.8;
    double position_limit = 2.4;
    double initial_angle = 0.1;
    int max_steps = 500;
    Eigen::Vector4d q_diag{1.0, 0.1, 10.0, 0.1};
    double r = 0.01;

    [[nodiscard]] Eigen::Vector4d deriv(const Eigen::Vector4d& s, double force) const {
        const double total = cart_mass + pole_mass;
        const double st = std::sin(s[2]), ct = std::cos(s[2]);
        const double tmp = (force + pole_mass * half_length * s[3] * s[3] * st) / total;
        const double acc_angle =
            (g * st - ct * tmp) / (half_length * (4.0 / 3.0 - pole_mass * ct * ct / total));
        const double acc_x = tmp - pole_mass * half_length * acc_angle * ct / total;
        return {s[1], acc_x, s[3], acc_angle};
    }

    /// Linearization about the upright equilibrium (used by tests and by the Riccati oracle).
    void linearize(Eigen::Matrix4d& a, Eigen::Vector4d& b) const {
        const double total = cart_mass + pole_mass;
        const double den = half_length * (4.0 / 3.0 - pole_mass / total);
        a.setZero();
        b.setZero();
        a(0, 1) = 1.0;
        a(2, 3) = 1.0;
        a(3, 2) = g / den;
        b[3] = -1.0 / total / den;
        a(1, 2) = -pole_mass * half_length * (g / den) / total;
        b[1] = 1.0 / total + pole_mass * half_length / (total * total * den);
    }
};

class CartPoleSimulator final : public EpisodeSimulator {
public:
    CartPoleSimulator(const CartPole& p, const Eigen::Vector4d& gains, MeasurementNoise noise)
        : p_(p), k_(gains), noise_(std::move(noise)) {
        s_ << 0.0, 0.0, p.initial_angle, 0.0;
        measure();
    }

    StepResult step() override {
        const double force = std::clamp(-k_.dot(meas_), -p_.force_max, p_.force_max);
        s_ = rk4(s_, p_.dt, [&](const Eigen::Vector4d& x) { return p_.deriv(x, force); });
        measure();

        StepResult r;
        r.u = force;
        r.y = meas_[2];
        r.cost = meas_.dot(p_.q_diag.cwiseProduct(meas_)) + p_.r * force * force;
        r.crashed = !s_.allFinite() || std::abs(s_[2]) > p_.angle_limit || std::abs(s_[0]) > p_.position_limit;
        return r;
    }

private:
    void measure() {
        for (int i = 0; i < 4; ++i) meas_[i] = noise_(s_[i]);
    }

    CartPole p_;
    Eigen::Vector4d k_;
    MeasurementNoise noise_;
    Eigen::Vector4d s_;
    Eigen::Vector4d meas_;
};

/// State feedback u = -K x. The gain box is narrowed to the stabilizing sign pattern, see README.
class CartPoleTask final : public ClosedLoopTask {
public:
    explicit CartPoleTask(CartPole plant = {})
        : ClosedLoopTask(TaskSpec{"cartpole_sf", "state_feedback", "cart pole",
                                  Box(Eigen::Vector4d(-20.0, -30.0, -100.0, -30.0), Eigen::Vector4d::Zero()),
                                  {false, false, false, false}, plant.max_steps, plant.dt, Objective::LQR, true}),
          plant_(plant) {}

    [[nodiscard]] const CartPole& plant() const { return plant_; }

    [[nodiscard]] std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta,
                                                          std::uint64_t noise_seed) const override {
        return std::make_unique<CartPoleSimulator>(plant_, Eigen::Vector4d(theta),
                                                   MeasurementNoise(measurement_noise(), noise_seed));
    }

private:
    CartPole plant_;
};

}  // namespace esbo::tasks
