#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <Eigen/Core>

namespace gaitbridge::reward {

/// Default weights [w_cpd, w_root, w_tor, w_lim] = [1.0, 1.0, 0.0001, 5.0].
struct RewardWeights {
  double cpd = 1.0;
  double root = 1.0;
  double tor = 0.0001;
  double lim = 5.0;
};

enum class RewardMode : std::uint8_t { full, task_only, r2h_only };

std::string to_string(RewardMode m);
/// Throws ConfigError for unknown names.
RewardMode mode_from_string(const std::string& name);

/// What r_tor penalizes: the executed action vector (default) or the applied joint torques.
enum class TorqueMode : std::uint8_t { action, torque };

std::string to_string(TorqueMode m);
TorqueMode torque_mode_from_string(const std::string& name);

/// Robot leg length over human leg length: 0.42 m nominal robot height over 0.9 m.
inline constexpr double kDefaultRootScale = 0.42 / 0.9;

/// exp(-|(x, dx) - (x_des, dx_des)|_2).
double root_reward(double x, double dx, double desired_x, double desired_dx);

/// -|v|_2; applied to the action vector (or the joint torques when configured so).
double torque_penalty(std::span<const double> values);

/// -(number of joints at or beyond either bound).
double limit_penalty(std::span<const double> joint_angles, std::span<const double> lower,
                     std::span<const double> upper);

/// Raw per-step terms, computed for every mode.
struct RewardInputs {
  double cpd = 0.0;      // full cycle-consistent correspondence reward
  double cpd_r2h = 0.0;  // correspondence reward without the cycle term
  double root = 0.0;
  double tor = 0.0;
  double lim = 0.0;
};

struct RewardBreakdown {
  double r_cpd = 0.0;      // full correspondence reward, logged in every mode
  double r_cpd_r2h = 0.0;  // r2h-only variant, logged in every mode
  double r_corr = 0.0;     // the correspondence variant that enters r_total under the active mode
  double r_root = 0.0;
  double r_tor = 0.0;
  double r_lim = 0.0;
  double r_total = 0.0;
  RewardWeights effective;  // weights actually applied (w_cpd = 0 in task_only)
};

RewardWeights effective_weights(const RewardWeights& w, RewardMode mode);

/// r_total = w_cpd * r_corr + w_root * r_root + w_tor * r_tor + w_lim * r_lim, evaluated left to right.
RewardBreakdown total_reward(const RewardInputs& in, const RewardWeights& weights, RewardMode mode);

/// Recombines logged terms exactly as total_reward does.
double recombine(const RewardBreakdown& b);

}  // namespace gaitbridge::reward
