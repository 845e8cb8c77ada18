#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "esbo/rng.hpp"
#include "esbo/types.hpp"

namespace esbo {

enum class Objective { EnergyComfort, MSE, ITAE, LQR, MAE };

inline std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::EnergyComfort: return "energy+comfort";
        case Objective::MSE: return "MSE";
        case Objective::ITAE: return "ITAE";
        case Objective::LQR: return "LQR";
        case Objective::MAE: return "MAE";
    }
    return "?";
}

/// One time step of a closed loop: actuation, measured output, stage cost, crash flag.
struct StepResult {
    double u = 0.0;
    double y = 0.0;
    double cost = 0.0;
    bool crashed = false;
};

/// A running episode. Owns plant, controller and measurement-noise state.
class EpisodeSimulator {
public:
    virtual ~EpisodeSimulator() = default;
    virtual StepResult step() = 0;
};

/// Static description of a tuning task plus a factory for episodes.
struct TaskSpec {
    std::string id;
    std::string controller;
    std::string plant;
    Box domain;
    std::vector<bool> log_scaled;  // parameter is log10 of the physical value
    int max_steps = 0;
    double dt = 0.0;
    Objective objective = Objective::MSE;
    bool can_crash = false;
};

class ClosedLoopTask {
public:
    explicit ClosedLoopTask(TaskSpec spec) : spec_(std::move(spec)) {}
    virtual ~ClosedLoopTask() = default;

    [[nodiscard]] const TaskSpec& spec() const { return spec_; }
    [[nodiscard]] const std::string& id() const { return spec_.id; }
    [[nodiscard]] int dim() const { return static_cast<int>(spec_.domain.dim()); }
    [[nodiscard]] const Box& domain() const { return spec_.domain; }
    [[nodiscard]] int max_steps() const { return spec_.max_steps; }

    /// Standard deviation of additive Gaussian noise on every measured output (0 = deterministic).
    [[nodiscard]] double measurement_noise() const { return noise_std_; }
    void set_measurement_noise(double sd) { noise_std_ = sd; }

    /// Physical parameter values (10^x for log-scaled entries).
    [[nodiscard]] Eigen::VectorXd physical(const ParamVector& theta) const {
        Eigen::VectorXd p = theta;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (spec_.log_scaled[static_cast<std::size_t>(i)]) p[i] = std::pow(10.0, theta[i]);
        }
        return p;
    }

    /// Starts an episode at the nominal initial state. `noise_seed` drives measurement noise only.
    [[nodiscard]] virtual std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta,
                                                                  std::uint64_t noise_seed) const = 0;

private:
    TaskSpec spec_;
    double noise_std_ = 0.0;
};

/// Additive measurement noise; a no-op (and no RNG draws) when sd == 0.
class MeasurementNoise {
public:
    MeasurementNoise(double sd, std::uint64_t seed) : sd_(sd), rng_(seed) {}
    double operator()(double y) { return sd_ > 0.0 ? y + sd_ * standard_normal(rng_) : y; }

private:
    double sd_;
    Rng rng_;
};

/// Zero-order-hold discretization of x' = A x + B u via the augmented matrix exponential.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> zoh(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double dt) {
    const Eigen::Index n = a.rows(), m = b.cols();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = a * dt;
    aug.topRightCorner(n, m) = b * dt;
    const Eigen::MatrixXd e = aug.exp();
    return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

/// Classic fixed-step RK4.
template <class State, class Deriv>
State rk4(const State& x, double h, Deriv&& f) {
    const State k1 = f(x);
    const State k2 = f(x + 0.5 * h * k1);
    const State k3 = f(x + 0.5 * h * k2);
    const State k4 = f(x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Per-step costs whose sum over an episode equals the named integral metric.
inline double itae_stage(int t, double dt, double error) { return static_cast<double>(t) * dt * std::abs(error) * dt; }
inline double mse_stage(double error, int max_steps) { return error * error / max_steps; }
inline double mae_stage(double error, int max_steps) { return std::abs(error) / max_steps; }

}  // namespace esbo
