#include "gaitbridge/reward.hpp"

#include <cmath>

#include "gaitbridge/error.hpp"

namespace gaitbridge::reward {

std::string to_string(RewardMode m) {
  switch (m) {
    case RewardMode::full: return "full";
    case RewardMode::task_only: return "task_only";
    case RewardMode::r2h_only: return "r2h_only";
  }
  return "?";
}

RewardMode mode_from_string(const std::string& name) {
  if (name == "full") return RewardMode::full;
  if (name == "task_only") return RewardMode::task_only;
  if (name == "r2h_only") return RewardMode::r2h_only;
  throw ConfigError("mode: unknown value '" + name + "' (expected full, task_only or r2h_only)");
}

std::string to_string(TorqueMode m) { return m == TorqueMode::action ? "action" : "torque"; }

TorqueMode torque_mode_from_string(const std::string& name) {
  if (name == "action") return TorqueMode::action;
  if (name == "torque") return TorqueMode::torque;
  throw ConfigError("reward.torque_mode: unknown value '" + name + "' (expected action or torque)");
}

double root_reward(double x, double dx, double desired_x, double desired_dx) {
  return std::exp(-std::hypot(x - desired_x, dx - desired_dx));
}

double torque_penalty(std::span<const double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return -std::sqrt(sq);
}

double limit_penalty(std::span<const double> q, std::span<const double> lower, std::span<const double> upper) {
  if (q.size() != lower.size() || q.size() != upper.size())
    throw InvalidArgument("limit_penalty: angle and limit arrays differ in length");
  int count = 0;
  for (std::size_t j = 0; j < q.size(); ++j)
    if (q[j] <= lower[j] || q[j] >= upper[j]) ++count;
  return -static_cast<double>(count);
}

RewardWeights effective_weights(const RewardWeights& w, RewardMode mode) {
  RewardWeights e = w;
  if (mode == RewardMode::task_only) e.cpd = 0.0;
  return e;
}

double recombine(const RewardBreakdown& b) {
  return b.effective.cpd * b.r_corr + b.effective.root * b.r_root + b.effective.tor * b.r_tor +
         b.effective.lim * b.r_lim;
}

RewardBreakdown total_reward(const RewardInputs& in, const RewardWeights& weights, RewardMode mode) {
  RewardBreakdown b;
  b.r_cpd = in.cpd;
  b.r_cpd_r2h = in.cpd_r2h;
  b.r_corr = mode == RewardMode::r2h_only ? in.cpd_r2h : in.cpd;
  b.r_root = in.root;
  b.r_tor = in.tor;
  b.r_lim = in.lim;
  b.effective = effective_weights(weights, mode);
  b.r_total = recombine(b);
  return b;
}

}  // namespace gaitbridge::reward
