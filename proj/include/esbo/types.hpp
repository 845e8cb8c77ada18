#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "esbo/rng.hpp"

namespace esbo {

/// Controller parameters in optimizer coordinates (log10 units for log-scaled gains).
using ParamVector = Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned box domain and its affine map onto the unit cube.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Box() = default;
    Box(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size() || lower.size() == 0) {
            throw std::invalid_argument("Box: bounds must be non-empty and of equal size");
        }
        if ((upper.array() <= lower.array()).any()) {
            throw std::invalid_argument("Box: every upper bound must exceed its lower bound");
        }
    }

    [[nodiscard]] Eigen::Index dim() const { return lower.size(); }

    [[nodiscard]] bool contains(const ParamVector& x) const {
        return x.size() == dim() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }

    [[nodiscard]] ParamVector clamp(const ParamVector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    [[nodiscard]] Eigen::VectorXd to_unit(const ParamVector& x) const {
        return ((x - lower).array() / (upper - lower).array()).matrix();
    }

    /// Inverse of to_unit; the result is clamped so rounding never leaves the box.
    [[nodiscard]] ParamVector from_unit(const Eigen::VectorXd& u) const {
        return clamp((lower.array() + u.array() * (upper - lower).array()).matrix());
    }

    [[nodiscard]] ParamVector sample(Rng& rng) const {
        ParamVector x(dim());
        for (Eigen::Index i = 0; i < dim(); ++i) {
            x[i] = uniform(rng, lower[i], upper[i]);
        }
        return x;
    }

    [[nodiscard]] static Box unit(Eigen::Index d) {
        return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
    }
};

enum class EpisodeStatus { Complete, StoppedEarly, Crashed };

inline std::string_view to_string(EpisodeStatus s) {
    switch (s) {
        case EpisodeStatus::Complete: return "complete";
        case EpisodeStatus::StoppedEarly: return "stopped";
        case EpisodeStatus::Crashed: return "crashed";
    }
    return "?";
}

inline EpisodeStatus parse_status(std::string_view s) {
    if (s == "complete") return EpisodeStatus::Complete;
    if (s == "stopped") return EpisodeStatus::StoppedEarly;
    if (s == "crashed") return EpisodeStatus::Crashed;
    throw std::invalid_argument("unknown episode status '" + std::string(s) + "'");
}

/// Result of one closed-loop episode: the stage-cost prefix j_1..j_T and how it ended.
struct EpisodeOutcome {
    ParamVector params;
    int stop_time = 0;
    std::vector<double> stage_costs;
    EpisodeStatus status = EpisodeStatus::Complete;

    /// Sum of observed stage costs (the total for complete episodes, the partial cost otherwise).
    [[nodiscard]] double cost() const { return std::accumulate(stage_costs.begin(), stage_costs.end(), 0.0); }

    [[nodiscard]] bool complete() const { return status == EpisodeStatus::Complete; }
};

}  // namespace esbo
