#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "esbo/tasks/task.hpp"

namespace esbo::tasks {

/// First-order thermal plant C dT/dt = -(T - T_amb)/R + P u, integrated exactly over each step.
struct Boiler {
    double rc = 600.0;            // s
    double heat_rate = 0.1;       // P/C, K/s at full power
    double ambient = 20.0;        // degC
    double setpoint = 60.0;       // degC
    double initial = 55.0;        // degC
    double dt = 1.0;
    int max_steps = 1800;
    double energy_weight = 0.01;
    double comfort_weight = 1.0;
    double comfort_band = 1.0;    // K

    [[nodiscard]] double advance(double temp, double u) const {
        const double eq = ambient + heat_rate * rc * u;
        return eq + (temp - eq) * std::exp(-dt / rc);
    }
};

class BoilerSimulator final : public EpisodeSimulator {
public:
    BoilerSimulator(const Boiler& p, double hysteresis, MeasurementNoise noise)
        : p_(p), band_(hysteresis), noise_(std::move(noise)), temp_(p.initial) {
        meas_ = noise_(temp_);
    }

    StepResult step() override {
        if (meas_ < p_.setpoint - band_) heating_ = true;
        else if (meas_ > p_.setpoint + band_) heating_ = false;
        const double u = heating_ ? 1.0 : 0.0;
        temp_ = p_.advance(temp_, u);
        meas_ = noise_(temp_);

        StepResult r;
        r.u = u;
        r.y = meas_;
        r.cost = u * p_.energy_weight +
                 std::max(0.0, std::abs(p_.setpoint - meas_) - p_.comfort_band) * p_.comfort_weight;
        r.crashed = false;
        return r;
    }

private:
    Boiler p_;
    double band_;
    MeasurementNoise noise_;
    double temp_;
    double meas_ = 0.0;
    bool heating_ = false;
};

class BoilerTask final : public ClosedLoopTask {
public:
    explicit BoilerTask(Boiler plant = {})
        : ClosedLoopTask(TaskSpec{"boiler_bangbang", "bang_bang", "boiler",
                                  Box(Eigen::VectorXd::Constant(1, 0.1), Eigen::VectorXd::Constant(1, 10.0)),
                                  {false}, plant.max_steps, plant.dt, Objective::EnergyComfort, false}),
          plant_(plant) {}

    [[nodiscard]] const Boiler& plant() const { return plant_; }

    [[nodiscard]] std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta,
                                                          std::uint64_t noise_seed) const override {
        return std::make_unique<BoilerSimulator>(plant_, theta[0], MeasurementNoise(measurement_noise(), noise_seed));
    }

private:
    Boiler plant_;
};

}  // namespace esbo::tasks
