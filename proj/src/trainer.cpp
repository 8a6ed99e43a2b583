#include "gaitbridge/trainer.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <thread>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/checkpoint.hpp"
#include "gaitbridge/error.hpp"
#include "gaitbridge/text.hpp"

namespace gaitbridge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

RunState init_run_state(const TrainConfig& cfg) {
  RunState rs;
  rs.config_json = config_snapshot(cfg);
  rs.rng = Rng(cfg.seed);
  rs.policy = rl::PolicyNet::create(rl::kPolicyInputDim, sim::kActionDim, cfg.network.policy_hidden,
                                    cfg.network.log_std_init, rs.rng);
  rs.value = rl::ValueNet::create(rl::kPolicyInputDim, cfg.network.policy_hidden, rs.rng);
  rs.ppo_optimizer = rl::PPOOptimizer::create(rs.policy, rs.value, cfg.ppo.learning_rate, cfg.ppo.value_learning_rate);
  rs.mappers = correspond::MapperPair::create(motion::kHumanPoseDim, sim::kPoseDim, cfg.network.mapper_hidden, rs.rng);
  rs.mappers.sigma = cfg.mapper.sigma;
  rs.mapper_optimizer = correspond::MapperOptimizer::create(rs.mappers, cfg.mapper.update.learning_rate);
  rs.obs_stats = RunningMeanStd(rl::kPolicyInputDim);
  rs.human_stats = RunningMeanStd(motion::kHumanPoseDim);
  rs.robot_stats = RunningMeanStd(sim::kPoseDim);
  refreeze_mapper_standardizers(rs, cfg);
  rs.envs.resize(static_cast<std::size_t>(cfg.ppo.num_envs));
  for (std::size_t e = 0; e < rs.envs.size(); ++e) rs.envs[e].rng = Rng(cfg.seed + e);
  return rs;
}

VectorXd policy_input(const sim::RobotDynState& state, const motion::MotionClip& clip, std::size_t frame) {
  VectorXd x(rl::kPolicyInputDim);
  x << sim::extract_obs(state), motion::human_feature(clip, frame);
  return x;
}

Standardizer observation_standardizer(const RunningMeanStd& stats, const ObservationConfig& cfg) {
  return Standardizer::per_dimension(stats, cfg.std_floor);
}

MatrixXd standardize_observations(const Standardizer& s, const MatrixXd& raw, const ObservationConfig& cfg) {
  return s.apply_rows(raw).cwiseMax(-cfg.clip).cwiseMin(cfg.clip);
}

void refreeze_mapper_standardizers(RunState& rs, const TrainConfig& cfg) {
  rs.mappers.human = Standardizer::from_stats(rs.human_stats, cfg.mapper.std_floor);
  rs.mappers.robot = Standardizer::from_stats(rs.robot_stats, cfg.mapper.std_floor);
}

TaskTerms task_terms(const sim::RobotModel& model, const RewardConfig& cfg, const motion::RootTrack& track,
                     std::size_t frame, const sim::RobotDynState& state, const sim::StepInfo& info) {
  sim::JointArray lower{};
  sim::JointArray upper{};
  for (int j = 0; j < sim::kJointCount; ++j) {
    lower[j] = model.lower_limit(j);
    upper[j] = model.upper_limit(j);
  }
  TaskTerms t;
  t.root = reward::root_reward(state.x, state.vx, track.x[frame], track.dx[frame]);
  t.tor = reward::torque_penalty(cfg.torque_mode == reward::TorqueMode::action ? state.prev_action : info.torques);
  t.lim = reward::limit_penalty(info.limit_probe, lower, upper);
  return t;
}

int worker_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GAITBRIDGE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = cap;
  }
  return std::max(1, n);
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` threads, each taking a contiguous block.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  const int block = (n + threads - 1) / threads;
  for (int w = 1; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (int i = w * block; i < std::min(n, (w + 1) * block); ++i) fn(i);
    });
  for (int i = 0; i < std::min(n, block); ++i) fn(i);
}

struct PendingStep {
  VectorXd action;
  double log_prob = 0.0;
  sim::RobotDynState next;
  sim::StepInfo info;
  bool diverged = false;
  std::string error;
};

}  // namespace

rl::RolloutBuffer collect_rollouts(RunState& rs, const motion::MotionDataset& data, const TrainConfig& cfg,
                                   std::ostream* events) {
  const int num_envs = cfg.ppo.num_envs;
  const int horizon = cfg.ppo.horizon;
  if (static_cast<int>(rs.envs.size()) != num_envs)
    throw InvalidArgument("run state has " + std::to_string(rs.envs.size()) + " environments, config expects " +
                          std::to_string(num_envs));
  if (data.size() == 0) throw InvalidArgument("dataset has no clips");

  const sim::RobotModel model;
  std::vector<motion::RootTrack> tracks;
  for (const auto& clip : data.clips) tracks.push_back(motion::normalize_root_trajectory(clip, cfg.reward.root_scale));
  const Standardizer obs_std = observation_standardizer(rs.obs_stats, cfg.observation);
  const VectorXd sigma = rs.policy.head.log_std.array().exp().matrix();
  const int threads = worker_threads();

  rl::RolloutBuffer buf;
  buf.allocate(num_envs, horizon);
  MatrixXd raw(num_envs, rl::kPolicyInputDim);
  std::vector<PendingStep> pending(static_cast<std::size_t>(num_envs));

  auto observe = [&](int e) {
    const EnvSlot& slot = rs.envs[e];
    return policy_input(slot.state, data.clips[slot.clip], slot.frame);
  };

  for (int t = 0; t < horizon; ++t) {
    for (int e = 0; e < num_envs; ++e) {
      EnvSlot& slot = rs.envs[e];
      if (!slot.needs_reset) continue;
      slot.clip = static_cast<int>(motion::sample_clip(data, slot.rng));
      const sim::ResetResult r =
          sim::reset(model, data.clips[slot.clip], cfg.reward.root_scale, cfg.reset_mode, slot.rng);
      slot.state = r.state;
      slot.frame = r.start_frame;
      slot.episode = rs.next_episode++;
      slot.needs_reset = false;
    }
    for (int e = 0; e < num_envs; ++e) raw.row(e) = observe(e).transpose();
    const MatrixXd obs = standardize_observations(obs_std, raw, cfg.observation);
    const MatrixXd means = rs.policy.net.forward_batch(obs);
    const MatrixXd values = rs.value.net.forward_batch(obs);
    if (!means.allFinite() || !values.allFinite()) throw std::runtime_error("policy produced a non-finite output");

    parallel_for(num_envs, threads, [&](int e) {
      EnvSlot& slot = rs.envs[e];
      PendingStep& p = pending[e];
      const VectorXd mean = means.row(e).transpose();
      p.action = mean;
      for (int d = 0; d < sim::kActionDim; ++d) p.action[d] += sigma[d] * slot.rng.normal();
      p.log_prob = nn::gaussian_log_prob(mean, rs.policy.head.log_std, p.action);
      sim::JointArray a{};
      std::copy(p.action.data(), p.action.data() + sim::kActionDim, a.begin());
      p.diverged = false;
      try {
        p.next = sim::step(model, slot.state, a, &p.info);
      } catch (const SimulationDiverged& err) {
        p.diverged = true;
        p.error = err.what();
        p.next = slot.state;
      }
    });

    // Poses after the step, paired with the human pose of the frame the robot has reached.
    correspond::MapperBatch pairs{MatrixXd(num_envs, motion::kHumanPoseDim), MatrixXd(num_envs, sim::kPoseDim)};
    for (int e = 0; e < num_envs; ++e) {
      const EnvSlot& slot = rs.envs[e];
      const std::size_t reached = std::min(slot.frame + 1, data.clips[slot.clip].size() - 1);
      pairs.human.row(e) = data.clips[slot.clip].frames[reached].pose.to_vector().transpose();
      pairs.robot.row(e) = sim::extract_pose(pending[e].next).to_vector().transpose();
    }
    const correspond::ReconstructionErrors err = correspond::reconstruction_errors(rs.mappers, pairs);

    std::vector<int> timeouts;
    for (int e = 0; e < num_envs; ++e) {
      EnvSlot& slot = rs.envs[e];
      PendingStep& p = pending[e];
      const std::size_t i = buf.index(e, t);
      buf.obs.row(i) = raw.row(e);
      buf.actions.row(i) = p.action.transpose();
      buf.log_probs[i] = p.log_prob;
      buf.values[i] = values(e, 0);
      buf.human_pose.row(i) = pairs.human.row(e);
      buf.robot_pose.row(i) = pairs.robot.row(e);
      buf.clip_ids[i] = slot.clip;
      buf.episode_ids[i] = slot.episode;

      if (p.diverged) {
        ++buf.divergences;
        if (events)
          *events << "iteration " << rs.iteration + 1 << ": env " << e << " episode " << slot.episode
                  << " diverged (" << p.error << "); environment reset\n";
        buf.rewards[i] = reward::total_reward({}, cfg.reward.weights, cfg.mode);
        buf.frames[i] = static_cast<int>(slot.frame);
        buf.dones[i] = 1;
        buf.terminals[i] = 1;
        slot.needs_reset = true;
        continue;
      }

      slot.state = p.next;
      slot.frame += 1;
      const TaskTerms task = task_terms(model, cfg.reward, tracks[slot.clip], slot.frame, slot.state, p.info);
      reward::RewardInputs in;
      in.cpd = correspond::correspondence_reward_from_errors(err.r2h[e], err.cycle[e]);
      in.cpd_r2h = std::exp(-err.r2h[e]);
      in.root = task.root;
      in.tor = task.tor;
      in.lim = task.lim;
      buf.rewards[i] = reward::total_reward(in, cfg.reward.weights, cfg.mode);
      buf.frames[i] = static_cast<int>(slot.frame);

      if (sim::check_termination(model, slot.state) == sim::Termination::fell) {
        buf.dones[i] = 1;
        buf.terminals[i] = 1;
        slot.needs_reset = true;
      } else if (slot.frame + 1 >= data.clips[slot.clip].size()) {
        buf.dones[i] = 1;
        slot.needs_reset = true;
        timeouts.push_back(e);
      }
    }

    // Clip-end transitions bootstrap from the value of the state they reached.
    if (!timeouts.empty()) {
      MatrixXd next(static_cast<Eigen::Index>(timeouts.size()), rl::kPolicyInputDim);
      for (std::size_t k = 0; k < timeouts.size(); ++k) next.row(k) = observe(timeouts[k]).transpose();
      const MatrixXd v = rs.value.net.forward_batch(standardize_observations(obs_std, next, cfg.observation));
      for (std::size_t k = 0; k < timeouts.size(); ++k) buf.done_values[buf.index(timeouts[k], t)] = v(k, 0);
    }
  }

  std::vector<int> live;
  for (int e = 0; e < num_envs; ++e)
    if (!rs.envs[e].needs_reset) live.push_back(e);
  if (!live.empty()) {
    MatrixXd last(static_cast<Eigen::Index>(live.size()), rl::kPolicyInputDim);
    for (std::size_t k = 0; k < live.size(); ++k) last.row(k) = observe(live[k]).transpose();
    const MatrixXd v = rs.value.net.forward_batch(standardize_observations(obs_std, last, cfg.observation));
    for (std::size_t k = 0; k < live.size(); ++k) buf.last_values[live[k]] = v(k, 0);
  }
  return buf;
}

IterationStats train_iteration(RunState& rs, const motion::MotionDataset& data, const TrainConfig& cfg,
                               const IterationHooks& hooks) {
  IterationStats st;
  st.iteration = rs.iteration + 1;
  auto flag = [&](const std::string& what) {
    st.flagged = true;
    if (hooks.events) *hooks.events << "iteration " << st.iteration << ": " << what << "\n";
  };

  try {
    rs.buffer = collect_rollouts(rs, data, cfg, hooks.events);
  } catch (const std::exception& e) {
    flag(std::string("collection failed: ") + e.what());
    rs.buffer.clear();
    rs.iteration += 1;
    return st;
  }
  const rl::RolloutBuffer& buf = rs.buffer;
  const std::size_t n = buf.size();

  for (std::size_t i = 0; i < n; ++i) {
    const reward::RewardBreakdown& r = buf.rewards[i];
    st.mean_r_total += r.r_total;
    st.mean_r_cpd += r.r_cpd;
    st.mean_r_cpd_r2h += r.r_cpd_r2h;
    st.mean_r_root += r.r_root;
    st.mean_r_tor += r.r_tor;
    st.mean_r_lim += r.r_lim;
    st.episodes_ended += buf.dones[i];
    st.falls += buf.terminals[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  st.mean_r_total *= inv_n;
  st.mean_r_cpd *= inv_n;
  st.mean_r_cpd_r2h *= inv_n;
  st.mean_r_root *= inv_n;
  st.mean_r_tor *= inv_n;
  st.mean_r_lim *= inv_n;
  st.divergences = buf.divergences;
  st.falls -= buf.divergences;
  st.fall_rate = st.episodes_ended > 0 ? static_cast<double>(st.falls) / st.episodes_ended : 0.0;

  if (hooks.on_step) {
    for (int e = 0; e < buf.num_envs; ++e)
      for (int t = 0; t < buf.horizon; ++t) {
        const std::size_t i = buf.index(e, t);
        hooks.on_step({st.iteration, e, t, buf.episode_ids[i], buf.clip_ids[i], buf.frames[i], &buf.rewards[i]});
      }
  }

  // Advantages per environment sequence, then normalized over the whole buffer.
  std::vector<double> advantages(n);
  rl::PPOBatch batch;
  batch.returns.resize(static_cast<Eigen::Index>(n));
  for (int e = 0; e < buf.num_envs; ++e) {
    const std::size_t off = buf.index(e, 0);
    const std::size_t h = static_cast<std::size_t>(buf.horizon);
    std::vector<double> rewards(h);
    for (std::size_t t = 0; t < h; ++t) rewards[t] = buf.rewards[off + t].r_total;
    const rl::GaeResult g = rl::compute_gae(rewards, std::span(buf.values.data() + off, h), buf.last_values[e],
                                            std::span(buf.dones.data() + off, h), cfg.ppo.gamma, cfg.ppo.lambda,
                                            std::span(buf.done_values.data() + off, h));
    for (std::size_t t = 0; t < h; ++t) {
      advantages[off + t] = g.advantages[t];
      batch.returns[static_cast<Eigen::Index>(off + t)] = g.returns[t];
    }
  }
  const std::vector<double> normalized = rl::normalize_advantages(advantages);
  batch.advantages = Eigen::Map<const VectorXd>(normalized.data(), static_cast<Eigen::Index>(n));
  batch.obs = standardize_observations(observation_standardizer(rs.obs_stats, cfg.observation), buf.obs,
                                       cfg.observation);
  batch.actions = buf.actions;
  batch.log_probs = buf.log_probs;

  try {
    st.ppo = rl::ppo_update(rs.policy, rs.value, rs.ppo_optimizer, batch, cfg.ppo, rs.rng);
    if (st.ppo.skipped_minibatches > 0)
      flag("ppo skipped " + std::to_string(st.ppo.skipped_minibatches) + " minibatches with a non-finite loss");
  } catch (const std::exception& e) {
    flag(std::string("ppo update failed: ") + e.what());
  }

  rs.human_stats.update(buf.human_pose);
  rs.robot_stats.update(buf.robot_pose);
  refreeze_mapper_standardizers(rs, cfg);
  try {
    const correspond::MapperBatch pairs{buf.human_pose, buf.robot_pose};
    const correspond::MapperUpdateResult m =
        correspond::update_mappers(rs.mappers, rs.mapper_optimizer, pairs, cfg.mapper.update, rs.rng);
    st.mapper_before = m.before;
    st.mapper_after = m.per_epoch.empty() ? m.before : m.per_epoch.back();
    st.mapper_aborted = m.aborted;
    if (m.aborted) flag("mapper update aborted on a non-finite loss");
  } catch (const std::exception& e) {
    flag(std::string("mapper update failed: ") + e.what());
  }

  rs.obs_stats.update(buf.obs);
  rs.buffer.clear();
  rs.iteration += 1;
  return st;
}

std::string log_header() {
  return "iteration,mean_r_total,mean_r_cpd,mean_r_cpd_r2h,mean_r_root,mean_r_tor,mean_r_lim,"
         "mapper_loss_before,mapper_r2h,mapper_cycle,mapper_total,policy_loss,value_loss,entropy,"
         "clip_fraction,approx_kl,fall_rate,episodes_ended,falls,divergences,flagged";
}

std::string log_row(const IterationStats& s) {
  const auto f = format_double;
  return join({std::to_string(s.iteration), f(s.mean_r_total), f(s.mean_r_cpd), f(s.mean_r_cpd_r2h),
               f(s.mean_r_root), f(s.mean_r_tor), f(s.mean_r_lim), f(s.mapper_before.total), f(s.mapper_after.r2h),
               f(s.mapper_after.cycle), f(s.mapper_after.total), f(s.ppo.policy_loss), f(s.ppo.value_loss),
               f(s.ppo.entropy), f(s.ppo.clip_fraction), f(s.ppo.approx_kl), f(s.fall_rate),
               std::to_string(s.episodes_ended), std::to_string(s.falls), std::to_string(s.divergences),
               s.flagged ? "1" : "0"});
}

namespace {

std::ofstream open_output(const std::filesystem::path& p, std::ios::openmode mode) {
  std::ofstream out(p, mode);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::string steps_header() {
  return "iteration,env,t,episode,clip,frame,r_cpd,r_cpd_r2h,r_corr,r_root,r_tor,r_lim,"
         "w_cpd,w_root,w_tor,w_lim,r_total";
}

}  // namespace

std::filesystem::path train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& resume) {
  namespace fs = std::filesystem;
  const motion::MotionDataset data = motion::load_dataset(cfg.dataset);

  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir / "checkpoints", ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  RunState rs;
  if (resume) {
    rs = load_checkpoint(*resume);
    if (static_cast<int>(rs.envs.size()) != cfg.ppo.num_envs)
      throw ConfigError("ppo.num_envs: checkpoint holds " + std::to_string(rs.envs.size()) +
                        " environments but the config asks for " + std::to_string(cfg.ppo.num_envs));
    rs.config_json = config_snapshot(cfg);
  } else {
    rs = init_run_state(cfg);
  }

  const std::string snapshot = config_snapshot(cfg);
  open_output(dir / "config.json", std::ios::trunc) << snapshot;
  const auto append = resume ? std::ios::app : std::ios::trunc;
  std::ofstream events = open_output(dir / "events.log", append);
  events << "config " << hex64(fnv1a64(snapshot)) << "\n";
  if (resume) events << "resumed from " << resume->string() << " at iteration " << rs.iteration << "\n";

  const bool log_exists = resume && fs::exists(dir / "log.csv");
  std::ofstream log = open_output(dir / "log.csv", log_exists ? std::ios::app : std::ios::trunc);
  if (!log_exists) log << log_header() << "\n";

  std::ofstream steps;
  IterationHooks hooks;
  hooks.events = &events;
  if (cfg.log_steps) {
    const bool steps_exist = resume && fs::exists(dir / "steps.csv");
    steps = open_output(dir / "steps.csv", steps_exist ? std::ios::app : std::ios::trunc);
    if (!steps_exist) steps << steps_header() << "\n";
    hooks.on_step = [&steps](const StepRecord& s) {
      const auto& r = *s.reward;
      const auto f = format_double;
      steps << join({std::to_string(s.iteration), std::to_string(s.env), std::to_string(s.t),
                     std::to_string(s.episode), std::to_string(s.clip), std::to_string(s.frame), f(r.r_cpd),
                     f(r.r_cpd_r2h), f(r.r_corr), f(r.r_root), f(r.r_tor), f(r.r_lim), f(r.effective.cpd),
                     f(r.effective.root), f(r.effective.tor), f(r.effective.lim), f(r.r_total)})
            << "\n";
    };
  }

  while (rs.iteration < cfg.iterations) {
    const IterationStats st = train_iteration(rs, data, cfg, hooks);
    log << log_row(st) << "\n";
    log.flush();
    events.flush();
    if (rs.iteration % cfg.checkpoint_every == 0)
      save_checkpoint(rs, dir / "checkpoints" / ("iter_" + std::to_string(rs.iteration) + ".ckpt"));
  }
  save_checkpoint(rs, dir / "final.ckpt");
  events << "finished at iteration " << rs.iteration << "\n";
  return dir;
}

}  // namespace gaitbridge
