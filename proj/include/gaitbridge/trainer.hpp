#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gaitbridge/config.hpp"
#include "gaitbridge/correspond.hpp"
#include "gaitbridge/motion.hpp"
#include "gaitbridge/reward.hpp"
#include "gaitbridge/rl.hpp"
#include "gaitbridge/rng.hpp"
#include "gaitbridge/running_stats.hpp"
#include "gaitbridge/sim.hpp"

namespace gaitbridge {

/// One simulated environment between control steps.
struct EnvSlot {
  sim::RobotDynState state;
  int clip = 0;
  std::size_t frame = 0;
  std::int64_t episode = -1;
  bool needs_reset = true;
  Rng rng{0};

  friend bool operator==(const EnvSlot&, const EnvSlot&) = default;
};

struct RunState {
  std::string config_json;  // snapshot of the config the run was started with
  rl::PolicyNet policy;
  rl::ValueNet value;
  rl::PPOOptimizer ppo_optimizer;
  correspond::MapperPair mappers;
  correspond::MapperOptimizer mapper_optimizer;
  RunningMeanStd obs_stats;
  RunningMeanStd human_stats;
  RunningMeanStd robot_stats;
  std::int64_t iteration = 0;
  std::int64_t next_episode = 0;
  Rng rng{0};
  std::vector<EnvSlot> envs;
  rl::RolloutBuffer buffer;  // transient; empty between iterations and never checkpointed
};

/// Fresh networks and optimizers; one slot per environment with stream seed + env_index.
RunState init_run_state(const TrainConfig& cfg);

/// Policy input: robot state s^r (29) followed by the clip feature x^h (68) at `frame`, raw units.
Eigen::VectorXd policy_input(const sim::RobotDynState& state, const motion::MotionClip& clip, std::size_t frame);

/// Frozen per-dimension standardizer for policy inputs.
Standardizer observation_standardizer(const RunningMeanStd& stats, const ObservationConfig& cfg);
/// Standardizes rows then clips each entry to +/- cfg.clip.
Eigen::MatrixXd standardize_observations(const Standardizer& s, const Eigen::MatrixXd& raw, const ObservationConfig& cfg);

/// Rebuilds the mapper standardizers from the current pose statistics.
void refreeze_mapper_standardizers(RunState& rs, const TrainConfig& cfg);

/// Reward terms that do not involve the mappers, for a robot that has just reached clip frame `frame`.
struct TaskTerms {
  double root = 0.0;
  double tor = 0.0;
  double lim = 0.0;
};

TaskTerms task_terms(const sim::RobotModel& model, const RewardConfig& cfg, const motion::RootTrack& track,
                     std::size_t frame, const sim::RobotDynState& state, const sim::StepInfo& info);

/// Called for every recorded transition when step logging is on (environment order, then time).
struct StepRecord {
  std::int64_t iteration;
  int env;
  int t;
  std::int64_t episode;
  int clip;
  int frame;
  const reward::RewardBreakdown* reward;
};

/// Deterministic E x H rollout with online rewards from the frozen mappers.
/// Divergent environments are reset and reported through `events`.
rl::RolloutBuffer collect_rollouts(RunState& rs, const motion::MotionDataset& data, const TrainConfig& cfg,
                                   std::ostream* events = nullptr);

struct IterationStats {
  std::int64_t iteration = 0;
  double mean_r_total = 0.0;
  double mean_r_cpd = 0.0;
  double mean_r_cpd_r2h = 0.0;
  double mean_r_root = 0.0;
  double mean_r_tor = 0.0;
  double mean_r_lim = 0.0;
  correspond::CycleLoss mapper_before;
  correspond::CycleLoss mapper_after;
  bool mapper_aborted = false;
  rl::PPOStats ppo;
  int episodes_ended = 0;
  int falls = 0;
  int divergences = 0;
  double fall_rate = 0.0;  // falls / episodes ended this iteration (0 when none ended)
  bool flagged = false;    // some component failed; the counter still advanced
};

struct IterationHooks {
  std::ostream* events = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

/// collect -> PPO -> mapper update -> clear; increments rs.iteration by one.
IterationStats train_iteration(RunState& rs, const motion::MotionDataset& data, const TrainConfig& cfg,
                               const IterationHooks& hooks = {});

/// log.csv header and row formatting.
std::string log_header();
std::string log_row(const IterationStats& s);

/// Number of worker threads for rollout stepping: GAITBRIDGE_THREADS if set, else logical cores.
int worker_threads();

/// Runs (or resumes) training into cfg.output_dir and returns that directory.
std::filesystem::path train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

}  // namespace gaitbridge
