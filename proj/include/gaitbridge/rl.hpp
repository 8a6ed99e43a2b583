#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gaitbridge/motion.hpp"
#include "gaitbridge/nn.hpp"
#include "gaitbridge/reward.hpp"
#include "gaitbridge/rng.hpp"
#include "gaitbridge/sim.hpp"

namespace gaitbridge::rl {

using nn::Matrix;
using nn::Vector;

inline constexpr int kPolicyInputDim = sim::kObsDim + motion::kFeatureDim;  // 97

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_ratio = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double learning_rate = 3e-4;
  double value_learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.005;
  double max_grad_norm = 1.0;
  int num_envs = 64;
  int horizon = 64;
};

/// Gaussian policy over a DenseNet mean with a state-independent log standard deviation.
struct PolicyNet {
  nn::DenseNet net;
  nn::GaussianHead head;

  static PolicyNet create(int input_dim, int action_dim, const std::vector<int>& hidden, double log_std_init,
                          Rng& rng);
};

struct ValueNet {
  nn::DenseNet net;

  static ValueNet create(int input_dim, const std::vector<int>& hidden, Rng& rng);
};

struct ActResult {
  Vector action;
  double log_prob = 0.0;
  double value = 0.0;
};

/// Samples (or, when deterministic, takes the mean of) the action distribution for one observation.
/// Throws SimulationDiverged-free InvalidArgument on dimension mismatch and std::runtime_error on a
/// non-finite network output.
ActResult policy_act(const PolicyNet& policy, const ValueNet& value, const Vector& obs, Rng& rng, bool deterministic);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Reverse-recursion GAE over one trajectory segment. A done at t stops propagation from t+1.
/// For done steps, `done_values` (if given) supplies the value to bootstrap from (zero for
/// true terminals, V(s_T) for time-limit ends); otherwise done steps bootstrap from zero.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                      std::span<const std::uint8_t> dones, double gamma, double lambda,
                      std::span<const double> done_values = {});

/// (adv - mean) / (std + 1e-8), population standard deviation.
std::vector<double> normalize_advantages(std::span<const double> adv);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double clip_ratio);

struct PPOBatch {
  Matrix obs;      // standardized policy inputs, one row per sample
  Matrix actions;  // sampled (unclamped) actions
  Vector log_probs;
  Vector advantages;  // already normalized
  Vector returns;
  Eigen::Index size() const { return obs.rows(); }
};

struct PPOOptimizer {
  nn::AdamState policy;
  nn::AdamState log_std;
  nn::AdamState value;

  static PPOOptimizer create(const PolicyNet& policy, const ValueNet& value, double learning_rate,
                             double value_learning_rate);
};

struct PPOStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  /// mean |ratio - 1| on the first minibatch of the first epoch.
  double initial_ratio_deviation = 0.0;
  double initial_clip_fraction = 0.0;
  int minibatch_updates = 0;
  int skipped_minibatches = 0;
};

struct PPOLoss {
  double policy_loss = 0.0;  // -mean clipped surrogate
  double value_loss = 0.0;   // value_coef * mean (V - R)^2
  double entropy = 0.0;
  double total = 0.0;  // policy_loss + value_loss - entropy_coef * entropy
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double ratio_deviation = 0.0;  // mean |ratio - 1|
};

struct PPOGradients {
  Vector policy;   // d total / d policy.net parameters
  Vector log_std;  // d total / d policy.head.log_std
  Vector value;    // d total / d value.net parameters
};

/// PPO objective on the given rows of a batch; fills `grads` when non-null.
PPOLoss ppo_loss(const PolicyNet& policy, const ValueNet& value, const PPOBatch& batch,
                 std::span<const Eigen::Index> rows, const PPOConfig& cfg, PPOGradients* grads = nullptr);

PPOStats ppo_update(PolicyNet& policy, ValueNet& value, PPOOptimizer& optimizer, const PPOBatch& batch,
                    const PPOConfig& cfg, Rng& rng);

/// Per-step transitions for E environments x H steps, stored environment-major (index e * H + t).
struct RolloutBuffer {
  int num_envs = 0;
  int horizon = 0;
  Matrix obs;  // raw (unstandardized) policy inputs
  Matrix actions;
  Vector log_probs;
  Vector values;
  std::vector<reward::RewardBreakdown> rewards;
  std::vector<std::uint8_t> dones;      // episode ended after this step (fall, clip end or divergence)
  std::vector<std::uint8_t> terminals;  // ended by a fall or divergence: no bootstrap
  Vector done_values;                   // bootstrap value at time-limit ends, else 0
  Matrix human_pose;                    // p^h paired with the step
  Matrix robot_pose;                    // p^r after the step
  std::vector<int> clip_ids;
  std::vector<std::int64_t> episode_ids;
  std::vector<int> frames;  // clip frame the robot reached after the step
  Vector last_values;       // V(s) of each environment after the final step
  int divergences = 0;      // steps where the simulator blew up (counted among terminals)

  void allocate(int envs, int steps);
  void clear();
  bool empty() const { return obs.rows() == 0; }
  std::size_t size() const { return static_cast<std::size_t>(obs.rows()); }
  std::size_t index(int env, int t) const { return static_cast<std::size_t>(env) * horizon + t; }
};

}  // namespace gaitbridge::rl
