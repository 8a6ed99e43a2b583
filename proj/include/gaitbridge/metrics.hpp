#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gaitbridge/config.hpp"
#include "gaitbridge/correspond.hpp"
#include "gaitbridge/motion.hpp"
#include "gaitbridge/rl.hpp"
#include "gaitbridge/rng.hpp"
#include "gaitbridge/running_stats.hpp"
#include "gaitbridge/trainer.hpp"
#include "gaitbridge/trajectory.hpp"

namespace gaitbridge::metrics {

inline constexpr int kFeatureDim = 11;
inline constexpr int kDefaultSubsetSize = 256;

/// What a deterministic evaluation needs from a run.
struct PolicyBundle {
  rl::PolicyNet policy;
  correspond::MapperPair mappers;
  Standardizer obs;
  TrainConfig cfg;
};

PolicyBundle bundle_from_run(const RunState& rs, const TrainConfig& cfg);
/// Uses the config snapshot embedded in the checkpoint.
PolicyBundle bundle_from_checkpoint(const RunState& rs);

struct EvalRollout {
  std::string clip;
  std::vector<TrajectoryStep> steps;
  bool fell = false;
};

/// Mean-action rollout from the clip's first frame until the clip ends or the robot falls.
/// Reconstructed poses are filled in when `reconstruct` is set.
EvalRollout evaluate_clip(const PolicyBundle& b, const motion::MotionClip& clip, bool reconstruct = false);

/// Mean r_cpd over all steps of all rollouts.
double acr(std::span<const EvalRollout> rollouts);
/// Mean r_root over all steps of all rollouts.
double rtr(std::span<const EvalRollout> rollouts);
/// Fraction of rollouts that ended in a fall.
double fall_rate(std::span<const EvalRollout> rollouts);

/// Psi(s^r) = (vx, vz, pitch rate, 8 joint angles).
Eigen::VectorXd feature_vector(const sim::RobotDynState& s);
/// One feature row per recorded step, all rollouts pooled.
Eigen::MatrixXd feature_pool(std::span<const EvalRollout> rollouts);

/// Mean distance between two disjoint random subsets of size sd, paired in draw order.
/// Rows are sorted first, so the result does not depend on pooling order.
double div(const Eigen::MatrixXd& pool, int sd, Rng& rng);

struct ReportRow {
  std::string mode;
  std::string checkpoint;
  double acr = 0.0;
  double div = 0.0;
  double rtr = 0.0;
  double fall_rate = 0.0;
  std::uint64_t seed = 0;
  int subset_size = 0;  // S_d actually used
};

/// Runs every clip and computes all metrics. S_d shrinks to half the pool when the pool is smaller
/// than 2 * sd (the row records the size used).
ReportRow eval_report(const PolicyBundle& b, const motion::MotionDataset& data, const std::string& checkpoint,
                      int sd, std::uint64_t seed, std::vector<EvalRollout>* rollouts = nullptr);

std::vector<std::string> report_columns();
/// Writes report.csv, then report.txt.
void write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows);

}  // namespace gaitbridge::metrics
