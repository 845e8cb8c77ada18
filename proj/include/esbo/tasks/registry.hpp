#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esbo/tasks/boiler.hpp"
#include "esbo/tasks/cartpole.hpp"
#include "esbo/tasks/pt2_pid.hpp"
#include "esbo/tasks/three_tank.hpp"
#include "esbo/tasks/three_tank_mpc.hpp"

namespace esbo {

struct UnknownTask : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Registered ids in ascending dimension order.
inline std::vector<std::string> task_ids() {
    return {"boiler_bangbang", "threetank_pi", "pt2_pid", "cartpole_sf", "threetank_mpc"};
}

inline std::shared_ptr<ClosedLoopTask> make_task(std::string_view id) {
    if (id == "boiler_bangbang") return std::make_shared<tasks::BoilerTask>();
    if (id == "threetank_pi") return std::make_shared<tasks::ThreeTankPiTask>();
    if (id == "pt2_pid") return std::make_shared<tasks::Pt2PidTask>();
    if (id == "cartpole_sf") return std::make_shared<tasks::CartPoleTask>();
    if (id == "threetank_mpc") return std::make_shared<tasks::ThreeTankMpcTask>();
    throw UnknownTask("unknown task '" + std::string(id) + "'");
}

}  // namespace esbo
