#include "gaitbridge/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "gaitbridge/error.hpp"

namespace gaitbridge::rl {

PolicyNet PolicyNet::create(int input_dim, int action_dim, const std::vector<int>& hidden, double log_std_init,
                            Rng& rng) {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  PolicyNet p;
  p.net = nn::DenseNet::initialized(sizes, nn::Activation::elu, rng, 1.0, 0.01);
  p.head.log_std = Vector::Constant(action_dim, log_std_init);
  p.head.clamp();
  return p;
}

ValueNet ValueNet::create(int input_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return {nn::DenseNet::initialized(sizes, nn::Activation::elu, rng, 1.0, 1.0)};
}

ActResult policy_act(const PolicyNet& policy, const ValueNet& value, const Vector& obs, Rng& rng, bool deterministic) {
  ActResult r;
  const Vector mean = policy.net.forward(obs);
  r.value = value.net.forward(obs)[0];
  if (!mean.allFinite() || !std::isfinite(r.value)) throw std::runtime_error("policy produced a non-finite output");
  r.action = deterministic ? mean : nn::sample_gaussian(mean, policy.head.log_std, rng);
  r.log_prob = nn::gaussian_log_prob(mean, policy.head.log_std, r.action);
  return r;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                      std::span<const std::uint8_t> dones, double gamma, double lambda,
                      std::span<const double> done_values) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || (!done_values.empty() && done_values.size() != n))
    throw InvalidArgument("compute_gae: input sequences differ in length");
  GaeResult g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    double next_value;
    if (dones[k]) {
      next_value = done_values.empty() ? 0.0 : done_values[k];
      running = 0.0;
    } else {
      next_value = (k + 1 < n) ? values[k + 1] : bootstrap_value;
    }
    const double delta = rewards[k] + gamma * next_value - values[k];
    running = delta + gamma * lambda * running;
    g.advantages[k] = running;
    g.returns[k] = running + values[k];
  }
  return g;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.empty()) return out;
  const double n = static_cast<double>(out.size());
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / n);
  for (double& a : out) a = (a - mean) / (std + 1e-8);
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip_ratio) {
  const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio);
  return std::min(ratio * advantage, clipped * advantage);
}

PPOOptimizer PPOOptimizer::create(const PolicyNet& policy, const ValueNet& value, double learning_rate,
                                  double value_learning_rate) {
  return {nn::AdamState(policy.net.num_parameters(), learning_rate),
          nn::AdamState(policy.head.log_std.size(), learning_rate),
          nn::AdamState(value.net.num_parameters(), value_learning_rate)};
}

PPOLoss ppo_loss(const PolicyNet& policy, const ValueNet& value, const PPOBatch& batch,
                 std::span<const Eigen::Index> rows, const PPOConfig& cfg, PPOGradients* grads) {
  const Eigen::Index b = static_cast<Eigen::Index>(rows.size());
  if (b == 0) throw InvalidArgument("ppo_loss: no rows");
  const Eigen::Index in_dim = batch.obs.cols();
  const Eigen::Index act_dim = batch.actions.cols();
  Matrix obs(b, in_dim);
  Matrix actions(b, act_dim);
  for (Eigen::Index k = 0; k < b; ++k) {
    obs.row(k) = batch.obs.row(rows[k]);
    actions.row(k) = batch.actions.row(rows[k]);
  }

  nn::Tape policy_tape;
  nn::Tape value_tape;
  const Matrix mean = policy.net.forward_batch(obs, policy_tape);
  const Matrix v = value.net.forward_batch(obs, value_tape);
  const Vector& log_std = policy.head.log_std;
  const Vector inv_var = (-2.0 * log_std).array().exp().matrix();
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const double inv_b = 1.0 / static_cast<double>(b);

  PPOLoss r;
  Matrix d_mean = Matrix::Zero(b, act_dim);
  Vector d_log_std = Vector::Zero(act_dim);
  Matrix d_value(b, 1);
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::Index i = rows[k];
    const Vector diff = (actions.row(k) - mean.row(k)).transpose();
    const Vector z2 = diff.cwiseAbs2().cwiseProduct(inv_var);
    const double log_prob = -0.5 * z2.sum() - log_std.sum() - half_log_two_pi * static_cast<double>(act_dim);
    const double log_ratio = log_prob - batch.log_probs[i];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[i];
    r.policy_loss -= clipped_surrogate(ratio, adv, cfg.clip_ratio) * inv_b;
    r.clip_fraction += (std::abs(ratio - 1.0) > cfg.clip_ratio ? 1.0 : 0.0) * inv_b;
    r.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
    r.ratio_deviation += std::abs(ratio - 1.0) * inv_b;
    // The unclipped branch is the one the min selects; elsewhere the objective is flat in the ratio.
    const bool unclipped = adv >= 0.0 ? ratio <= 1.0 + cfg.clip_ratio : ratio >= 1.0 - cfg.clip_ratio;
    if (unclipped) {
      const double coef = -ratio * adv * inv_b;  // d loss / d log_prob
      d_mean.row(k) = coef * diff.cwiseProduct(inv_var).transpose();
      d_log_std += coef * (z2.array() - 1.0).matrix();
    }
    const double err = v(k, 0) - batch.returns[i];
    r.value_loss += cfg.value_coef * err * err * inv_b;
    d_value(k, 0) = 2.0 * cfg.value_coef * err * inv_b;
  }
  r.entropy = nn::gaussian_entropy(log_std);
  r.total = r.policy_loss + r.value_loss - cfg.entropy_coef * r.entropy;

  if (grads) {
    d_log_std.array() -= cfg.entropy_coef;
    grads->policy.resize(0);
    grads->value.resize(0);
    policy.net.backward_batch(policy_tape, d_mean, grads->policy);
    value.net.backward_batch(value_tape, d_value, grads->value);
    grads->log_std = d_log_std;
  }
  return r;
}

namespace {

struct MinibatchResult {
  PPOLoss loss;
  bool applied = false;
};

MinibatchResult ppo_minibatch(PolicyNet& policy, ValueNet& value, PPOOptimizer& opt, const PPOBatch& batch,
                              std::span<const Eigen::Index> rows, const PPOConfig& cfg) {
  MinibatchResult r;
  PPOGradients g;
  r.loss = ppo_loss(policy, value, batch, rows, cfg, &g);
  if (!std::isfinite(r.loss.total)) return r;
  nn::clip_grad_norm({&g.policy, &g.log_std}, cfg.max_grad_norm);
  nn::clip_grad_norm({&g.value}, cfg.max_grad_norm);
  if (!g.policy.allFinite() || !g.log_std.allFinite() || !g.value.allFinite()) return r;
  nn::adam_step(policy.net.parameters(), g.policy, opt.policy);
  nn::adam_step(policy.head.log_std, g.log_std, opt.log_std);
  policy.head.clamp();
  nn::adam_step(value.net.parameters(), g.value, opt.value);
  r.applied = true;
  return r;
}

}  // namespace

PPOStats ppo_update(PolicyNet& policy, ValueNet& value, PPOOptimizer& optimizer, const PPOBatch& batch,
                    const PPOConfig& cfg, Rng& rng) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw InvalidArgument("ppo_update: empty batch");
  if (batch.actions.rows() != n || batch.log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns.size() != n)
    throw InvalidArgument("ppo_update: batch arrays differ in length");
  if (cfg.minibatches <= 0 || cfg.epochs < 0) throw InvalidArgument("ppo_update: bad epoch/minibatch counts");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index chunk = std::max<Eigen::Index>(1, n / cfg.minibatches);

  PPOStats stats;
  int counted = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(i + 1)))]);
    for (int m = 0; m < cfg.minibatches; ++m) {
      const Eigen::Index begin = m * chunk;
      const Eigen::Index end = (m + 1 == cfg.minibatches) ? n : std::min(n, begin + chunk);
      if (begin >= end) continue;
      const std::span<const Eigen::Index> rows(order.data() + begin, static_cast<std::size_t>(end - begin));
      const MinibatchResult r = ppo_minibatch(policy, value, optimizer, batch, rows, cfg);
      if (epoch == 0 && m == 0) {
        stats.initial_ratio_deviation = r.loss.ratio_deviation;
        stats.initial_clip_fraction = r.loss.clip_fraction;
      }
      if (!r.applied) {
        ++stats.skipped_minibatches;
        continue;
      }
      ++stats.minibatch_updates;
      ++counted;
      stats.policy_loss += r.loss.policy_loss;
      stats.value_loss += r.loss.value_loss;
      stats.entropy += r.loss.entropy;
      stats.clip_fraction += r.loss.clip_fraction;
      stats.approx_kl += r.loss.approx_kl;
    }
  }
  if (counted > 0) {
    const double inv = 1.0 / counted;
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.clip_fraction *= inv;
    stats.approx_kl *= inv;
  }
  return stats;
}

void RolloutBuffer::allocate(int envs, int steps) {
  num_envs = envs;
  horizon = steps;
  const Eigen::Index n = static_cast<Eigen::Index>(envs) * steps;
  obs = Matrix::Zero(n, kPolicyInputDim);
  actions = Matrix::Zero(n, sim::kActionDim);
  log_probs = Vector::Zero(n);
  values = Vector::Zero(n);
  rewards.assign(static_cast<std::size_t>(n), {});
  dones.assign(static_cast<std::size_t>(n), 0);
  terminals.assign(static_cast<std::size_t>(n), 0);
  done_values = Vector::Zero(n);
  human_pose = Matrix::Zero(n, motion::kHumanPoseDim);
  robot_pose = Matrix::Zero(n, sim::kPoseDim);
  clip_ids.assign(static_cast<std::size_t>(n), 0);
  episode_ids.assign(static_cast<std::size_t>(n), 0);
  frames.assign(static_cast<std::size_t>(n), 0);
  last_values = Vector::Zero(envs);
}

void RolloutBuffer::clear() { *this = RolloutBuffer{}; }

}  // namespace gaitbridge::rl
