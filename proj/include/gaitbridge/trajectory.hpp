#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gaitbridge/reward.hpp"
#include "gaitbridge/sim.hpp"

namespace gaitbridge {

/// One control step of a deterministic rollout, recorded after the step.
struct TrajectoryStep {
  double time = 0.0;
  sim::RobotDynState state;
  std::array<bool, sim::kLegCount> contact{};
  reward::RewardBreakdown reward;
  Eigen::VectorXd r2h;    // mu_r2h(p^r), human units
  Eigen::VectorXd cycle;  // mu_h2r(mu_r2h(p^r)), robot units
};

/// Column names, comma separated. The reconstruction block adds mu_r2h (8) and cycle (10) columns.
std::vector<std::string> trajectory_columns(bool with_reconstruction);

std::string trajectory_row(const TrajectoryStep& s, bool with_reconstruction);

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryStep>& steps,
                          bool with_reconstruction);

}  // namespace gaitbridge
