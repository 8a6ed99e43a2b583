#include "gaitbridge/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gaitbridge/error.hpp"
#include "gaitbridge/text.hpp"

namespace gaitbridge::metrics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

PolicyBundle bundle_from_run(const RunState& rs, const TrainConfig& cfg) {
  return {rs.policy, rs.mappers, observation_standardizer(rs.obs_stats, cfg.observation), cfg};
}

PolicyBundle bundle_from_checkpoint(const RunState& rs) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(rs.config_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint config snapshot is not valid JSON: ") + e.what());
  }
  return bundle_from_run(rs, config_from_json(doc));
}

EvalRollout evaluate_clip(const PolicyBundle& b, const motion::MotionClip& clip, bool reconstruct) {
  motion::validate_clip(clip);
  if (b.policy.net.input_size() != rl::kPolicyInputDim || b.policy.net.output_size() != sim::kActionDim)
    throw InvalidArgument("policy dimensions do not match the robot and clip feature sizes");
  const sim::RobotModel model;
  const motion::RootTrack track = motion::normalize_root_trajectory(clip, b.cfg.reward.root_scale);
  Rng unused(0);
  sim::RobotDynState state =
      sim::reset(model, clip, b.cfg.reward.root_scale, sim::ResetMode::clip_start, unused).state;

  EvalRollout out;
  out.clip = clip.name;
  for (std::size_t f = 0; f + 1 < clip.size(); ++f) {
    const MatrixXd obs = standardize_observations(b.obs, policy_input(state, clip, f).transpose(), b.cfg.observation);
    const VectorXd mean = b.policy.net.forward(obs.row(0).transpose());
    if (!mean.allFinite()) throw std::runtime_error("policy produced a non-finite output on clip " + clip.name);
    sim::JointArray a{};
    std::copy(mean.data(), mean.data() + sim::kActionDim, a.begin());
    sim::StepInfo info;
    try {
      state = sim::step(model, state, a, &info);
    } catch (const SimulationDiverged&) {
      out.fell = true;
      break;
    }

    TrajectoryStep s;
    s.time = static_cast<double>(f + 1) * model.control_dt();
    s.state = state;
    s.contact = info.contact;
    const VectorXd robot_pose = sim::extract_pose(state).to_vector();
    const correspond::MapperBatch pair{clip.frames[f + 1].pose.to_vector().transpose(), robot_pose.transpose()};
    const correspond::ReconstructionErrors err = correspond::reconstruction_errors(b.mappers, pair);
    const TaskTerms task = task_terms(model, b.cfg.reward, track, f + 1, state, info);
    reward::RewardInputs in;
    in.cpd = correspond::correspondence_reward_from_errors(err.r2h[0], err.cycle[0]);
    in.cpd_r2h = std::exp(-err.r2h[0]);
    in.root = task.root;
    in.tor = task.tor;
    in.lim = task.lim;
    s.reward = reward::total_reward(in, b.cfg.reward.weights, b.cfg.mode);
    if (reconstruct) {
      s.r2h = correspond::r2h_predict(b.mappers, robot_pose);
      s.cycle = correspond::cycle_predict(b.mappers, robot_pose);
    }
    out.steps.push_back(std::move(s));
    if (sim::check_termination(model, state) == sim::Termination::fell) {
      out.fell = true;
      break;
    }
  }
  return out;
}

namespace {

template <class Fn>
double step_mean(std::span<const EvalRollout> rollouts, Fn&& value, const char* metric) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const EvalRollout& r : rollouts)
    for (const TrajectoryStep& s : r.steps) {
      sum += value(s);
      ++n;
    }
  if (n == 0) throw InvalidArgument(std::string(metric) + ": no rollout steps to average");
  return sum / static_cast<double>(n);
}

}  // namespace

double acr(std::span<const EvalRollout> rollouts) {
  return step_mean(rollouts, [](const TrajectoryStep& s) { return s.reward.r_cpd; }, "ACR");
}

double rtr(std::span<const EvalRollout> rollouts) {
  return step_mean(rollouts, [](const TrajectoryStep& s) { return s.reward.r_root; }, "RTR");
}

double fall_rate(std::span<const EvalRollout> rollouts) {
  if (rollouts.empty()) throw InvalidArgument("fall rate: no rollouts");
  const auto falls = std::count_if(rollouts.begin(), rollouts.end(), [](const EvalRollout& r) { return r.fell; });
  return static_cast<double>(falls) / static_cast<double>(rollouts.size());
}

VectorXd feature_vector(const sim::RobotDynState& s) {
  VectorXd f(kFeatureDim);
  f[0] = s.vx;
  f[1] = s.vz;
  f[2] = s.pitch_rate;
  for (int j = 0; j < sim::kJointCount; ++j) f[3 + j] = s.q[j];
  return f;
}

MatrixXd feature_pool(std::span<const EvalRollout> rollouts) {
  std::size_t n = 0;
  for (const EvalRollout& r : rollouts) n += r.steps.size();
  MatrixXd pool(static_cast<Eigen::Index>(n), kFeatureDim);
  Eigen::Index k = 0;
  for (const EvalRollout& r : rollouts)
    for (const TrajectoryStep& s : r.steps) pool.row(k++) = feature_vector(s.state).transpose();
  return pool;
}

double div(const MatrixXd& pool, int sd, Rng& rng) {
  if (sd <= 0) throw InvalidArgument("DIV subset size must be positive");
  const Eigen::Index n = pool.rows();
  if (n < 2 * static_cast<Eigen::Index>(sd))
    throw InvalidArgument("DIV needs at least " + std::to_string(2 * sd) + " features, pool has " + std::to_string(n));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < pool.cols(); ++c)
      if (pool(a, c) != pool(b, c)) return pool(a, c) < pool(b, c);
    return false;
  });
  // Partial Fisher-Yates: the first 2*sd positions become the draw sequence.
  for (Eigen::Index i = 0; i < 2 * sd; ++i) {
    const Eigen::Index j = i + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < sd; ++i) sum += (pool.row(order[i]) - pool.row(order[sd + i])).norm();
  return sum / sd;
}

ReportRow eval_report(const PolicyBundle& b, const motion::MotionDataset& data, const std::string& checkpoint,
                      int sd, std::uint64_t seed, std::vector<EvalRollout>* keep) {
  if (data.size() == 0) throw InvalidArgument("dataset has no clips");
  std::vector<EvalRollout> rollouts;
  rollouts.reserve(data.size());
  for (const motion::MotionClip& clip : data.clips) rollouts.push_back(evaluate_clip(b, clip, keep != nullptr));

  ReportRow row;
  row.mode = reward::to_string(b.cfg.mode);
  row.checkpoint = checkpoint;
  row.seed = seed;
  row.acr = acr(rollouts);
  row.rtr = rtr(rollouts);
  row.fall_rate = fall_rate(rollouts);
  const MatrixXd pool = feature_pool(rollouts);
  row.subset_size = static_cast<int>(std::min<Eigen::Index>(sd, pool.rows() / 2));
  Rng rng(seed);
  row.div = row.subset_size > 0 ? div(pool, row.subset_size, rng) : 0.0;
  if (keep) *keep = std::move(rollouts);
  return row;
}

std::vector<std::string> report_columns() { return {"mode", "checkpoint", "ACR", "DIV", "RTR", "fall_rate", "seed"}; }

void write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "report.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + (dir / "report.csv").string());
    csv << join(report_columns()) << "\n";
    for (const ReportRow& r : rows)
      csv << join({r.mode, r.checkpoint, format_double(r.acr), format_double(r.div), format_double(r.rtr),
                   format_double(r.fall_rate), std::to_string(r.seed)})
          << "\n";
  }
  std::ofstream txt(dir / "report.txt", std::ios::trunc);
  if (!txt) throw std::runtime_error("cannot write " + (dir / "report.txt").string());
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %9s %6s  %s\n", "mode", "ACR", "DIV", "RTR", "fall_rate",
                "S_d", "checkpoint");
  txt << line;
  for (const ReportRow& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %8.4f %8.4f %8.4f %9.3f %6d  %s\n", r.mode.c_str(), r.acr, r.div, r.rtr,
                  r.fall_rate, r.subset_size, r.checkpoint.c_str());
    txt << line;
  }
  txt << "metric seed " << (rows.empty() ? 0 : rows.front().seed) << "\n";
}

}  // namespace gaitbridge::metrics
