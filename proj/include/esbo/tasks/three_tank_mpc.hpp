#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "esbo/tasks/three_tank.hpp"

namespace esbo::tasks {

struct ThreeTankMpcSetup {
    ThreeTankPlant plant{0.0154, 5e-5, 9.81, 0.6, 3e-4, 10};
    double reference = 0.3;  // tank 3 level
    double dt = 1.0;
    int control_every = 5;  // plant steps per MPC update (input held in between)
    int max_steps = 900;
};

/// Unconstrained finite-horizon MPC on the plant linearized at the reference operating point.
/// Input is clamped to [0, 1] after the analytic solve.
class ThreeTankMpcSimulator final : public EpisodeSimulator {
public:
    ThreeTankMpcSimulator(const ThreeTankMpcSetup& s, double q1, double q3, double r, int horizon, double du_weight,
                          MeasurementNoise noise)
        : s_(s), noise_(std::move(noise)) {
        const auto& p = s.plant;
        // steady state: equal flows and equal level drops, so h2 = c, h3 = 2c, h1 = 3c
        const double c = s.reference / 2.0;
        op_ = Eigen::Vector3d(3.0 * c, c, 2.0 * c);
        const double q0 = p.orifice * std::sqrt(2.0 * p.g * c);
        u_ss_ = q0 / p.pump_max;
        const double k = q0 / (2.0 * c) / p.area;
        Eigen::Matrix3d a;
        a << -k, 0.0, k,
             0.0, -2.0 * k, k,
             k, k, -2.0 * k;
        const Eigen::Vector3d b(p.pump_max / p.area, 0.0, 0.0);
        const auto [ad, bd] = zoh(a, b, s.dt * s.control_every);

        const int n = horizon;
        phi_.resize(3 * n, 3);
        Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(3 * n, n);
        Eigen::MatrixXd power = Eigen::MatrixXd::Identity(3, 3);
        std::vector<Eigen::Vector3d> impulse;  // A^i B
        for (int i = 0; i < n; ++i) {
            impulse.push_back(power * bd.col(0));
            power = ad * power;
            phi_.middleRows(3 * i, 3) = power;
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) gamma.block(3 * i, j, 3, 1) = impulse[static_cast<std::size_t>(i - j)];
        }
        Eigen::VectorXd qdiag(3 * n);
        for (int i = 0; i < n; ++i) qdiag.segment(3 * i, 3) = Eigen::Vector3d(q1, 0.0, q3);
        gt_q_ = gamma.transpose() * qdiag.asDiagonal();
        Eigen::MatrixXd h = gt_q_ * gamma;
        h.diagonal().array() += r;
        // first-difference penalty on the input sequence, v_{-1} enters through the gradient
        for (int j = 0; j < n; ++j) {
            h(j, j) += j + 1 < n ? 2.0 * du_weight : du_weight;
            if (j + 1 < n) {
                h(j, j + 1) -= du_weight;
                h(j + 1, j) -= du_weight;
            }
        }
        du_weight_ = du_weight;
        solver_.compute(h);
        measure();
    }

    StepResult step() override {
        if (t_ % s_.control_every == 0) {
            const Eigen::Vector3d dx = y_meas_ - op_;
            Eigen::VectorXd g = gt_q_ * (phi_ * dx);
            g[0] -= du_weight_ * v_prev_;
            const Eigen::VectorXd v = solver_.solve(-g);
            u_ = std::clamp(u_ss_ + v[0], 0.0, 1.0);
            v_prev_ = u_ - u_ss_;
        }
        ++t_;
        h_ = s_.plant.advance(h_, u_, s_.dt, false);
        measure();

        StepResult r;
        r.u = u_;
        r.y = y_meas_[2];
        r.cost = mae_stage(s_.reference - y_meas_[2], s_.max_steps);
        r.crashed = !h_.allFinite() || h_.maxCoeff() > s_.plant.h_max;
        return r;
    }

private:
    void measure() {
        for (int i = 0; i < 3; ++i) y_meas_[i] = noise_(h_[i]);
    }

    ThreeTankMpcSetup s_;
    MeasurementNoise noise_;
    Eigen::Vector3d op_;
    double u_ss_ = 0.0;
    double du_weight_ = 0.0;
    Eigen::MatrixXd phi_;
    Eigen::MatrixXd gt_q_;
    Eigen::LDLT<Eigen::MatrixXd> solver_;
    Eigen::Vector3d h_ = Eigen::Vector3d::Zero();
    Eigen::Vector3d y_meas_ = Eigen::Vector3d::Zero();
    double u_ = 0.0;
    double v_prev_ = 0.0;
    int t_ = 0;
};

class ThreeTankMpcTask final : public ClosedLoopTask {
public:
    static constexpr int kMinHorizon = 5;
    static constexpr int kMaxHorizon = 40;

    explicit ThreeTankMpcTask(ThreeTankMpcSetup setup = {})
        : ClosedLoopTask(TaskSpec{"threetank_mpc", "linear_mpc", "three tank",
                                  Box((Eigen::VectorXd(5) << -1.0, -1.0, -3.0, kMinHorizon, -3.0).finished(),
                                      (Eigen::VectorXd(5) << 3.0, 3.0, 1.0, kMaxHorizon, 1.0).finished()),
                                  {true, true, true, false, true}, setup.max_steps, setup.dt, Objective::MAE, true}),
          setup_(setup) {}

    static int horizon(double raw) {
        return std::clamp(static_cast<int>(std::lround(raw)), kMinHorizon, kMaxHorizon);
    }

    [[nodiscard]] std::unique_ptr<EpisodeSimulator> start(const ParamVector& theta,
                                                          std::uint64_t noise_seed) const override {
        const Eigen::VectorXd p = physical(theta);
        return std::make_unique<ThreeTankMpcSimulator>(setup_, p[0], p[1], p[2], horizon(p[3]), p[4],
                                                       MeasurementNoise(measurement_noise(), noise_seed));
    }

private:
    ThreeTankMpcSetup setup_;
};

}  // namespace esbo::tasks
