#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/checkpoint.hpp"
#include "gaitbridge/config.hpp"
#include "gaitbridge/error.hpp"
#include "gaitbridge/trainer.hpp"
#include "support.hpp"

using namespace gaitbridge;
using reward::RewardMode;

namespace {

struct Fixture {
  testing::TempDir dir{"trainer"};
  motion::MotionDataset data;
  Fixture() { data = motion::load_dataset(testing::write_default_dataset(dir / "data")); }
  TrainConfig config(RewardMode mode = RewardMode::full, std::uint64_t seed = 0) const {
    return testing::small_config(dir / "data", dir / "run", mode, seed);
  }
};

}  // namespace

TEST_CASE("policy input layout") {
  const motion::MotionClip clip = motion::generate_clip(motion::Preset::walk, {1.0, 1.0, 0.5, 2.0}, 0);
  sim::RobotDynState s;
  s.z = 0.4;
  s.vx = 0.3;
  const Eigen::VectorXd x = policy_input(s, clip, 5);
  CHECK(x.size() == rl::kPolicyInputDim);
  CHECK(x.head(sim::kObsDim) == sim::extract_obs(s));
  CHECK(x.tail(motion::kFeatureDim) == motion::human_feature(clip, 5));
}

TEST_CASE("observation standardization clips outliers") {
  RunningMeanStd stats(3);
  stats.update(Eigen::MatrixXd::Random(50, 3));
  const ObservationConfig cfg;
  const Standardizer s = observation_standardizer(stats, cfg);
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(2, 3);
  raw(0, 1) = 1e6;
  raw(1, 2) = -1e6;
  const Eigen::MatrixXd z = standardize_observations(s, raw, cfg);
  CHECK(z(0, 1) == cfg.clip);
  CHECK(z(1, 2) == -cfg.clip);
}

TEST_CASE("rollout collection") {
  Fixture f;
  const TrainConfig cfg = f.config(RewardMode::task_only);
  RunState rs = init_run_state(cfg);
  const rl::RolloutBuffer b = collect_rollouts(rs, f.data, cfg);
  CHECK(b.size() == static_cast<std::size_t>(cfg.ppo.num_envs * cfg.ppo.horizon));
  CHECK(b.obs.rows() == static_cast<Eigen::Index>(b.size()));
  CHECK(b.human_pose.rows() == static_cast<Eigen::Index>(b.size()));
  for (const reward::RewardBreakdown& r : b.rewards) {
    CHECK(r.effective.cpd == 0.0);
    CHECK(r.r_cpd > 0.0);
    CHECK(r.r_cpd <= 1.0);
    CHECK(reward::recombine(r) == r.r_total);
  }
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b.terminals[i]) CHECK(b.dones[i]);

  RunState again = init_run_state(cfg);
  const rl::RolloutBuffer c = collect_rollouts(again, f.data, cfg);
  CHECK(nn::bit_equal(b.obs, c.obs));
  CHECK(nn::bit_equal(b.actions, c.actions));
  CHECK(b.dones == c.dones);
  CHECK(b.episode_ids == c.episode_ids);
}

TEST_CASE("human and robot poses are paired at the same step") {
  Fixture f;
  const TrainConfig cfg = f.config();
  RunState rs = init_run_state(cfg);
  const rl::RolloutBuffer b = collect_rollouts(rs, f.data, cfg);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const motion::MotionClip& clip = f.data.clips[static_cast<std::size_t>(b.clip_ids[i])];
    CHECK(b.human_pose.row(i).transpose() == clip.frames[static_cast<std::size_t>(b.frames[i])].pose.to_vector());
  }
}

TEST_CASE("train iteration") {
  Fixture f;
  const TrainConfig cfg = f.config();
  RunState rs = init_run_state(cfg);
  const IterationStats s = train_iteration(rs, f.data, cfg);
  CHECK(rs.iteration == 1);
  CHECK(s.iteration == 1);
  CHECK(rs.buffer.empty());
  CHECK_FALSE(s.flagged);
  CHECK(s.ppo.minibatch_updates == cfg.ppo.epochs * cfg.ppo.minibatches);
  CHECK(s.mapper_before.total == doctest::Approx(s.mapper_before.r2h + s.mapper_before.cycle));
  const std::string row = log_row(s);
  const std::string header = log_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  Fixture f;
  const TrainConfig cfg = f.config();
  RunState straight = init_run_state(cfg);
  train_iteration(straight, f.data, cfg);
  train_iteration(straight, f.data, cfg);

  RunState first = init_run_state(cfg);
  train_iteration(first, f.data, cfg);
  RunState resumed = parse_checkpoint(serialize_checkpoint(first));
  train_iteration(resumed, f.data, cfg);
  CHECK(serialize_checkpoint(resumed) == serialize_checkpoint(straight));
}

TEST_CASE("train writes the run directory") {
  Fixture f;
  const TrainConfig cfg = f.config();
  const auto dir = train(cfg);
  CHECK(std::filesystem::exists(dir / "config.json"));
  CHECK(std::filesystem::exists(dir / "final.ckpt"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "iter_1.ckpt"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "iter_2.ckpt"));

  const std::string snapshot = testing::read_file(dir / "config.json");
  CHECK(snapshot == config_snapshot(cfg));
  const std::string events = testing::read_file(dir / "events.log");
  CHECK(events.rfind("config " + hex64(fnv1a64(snapshot)) + "\n", 0) == 0);

  std::istringstream log(testing::read_file(dir / "log.csv"));
  std::string line;
  std::getline(log, line);
  CHECK(line == log_header());
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 2);

  // Resuming appends the remaining iterations.
  TrainConfig more = cfg;
  more.iterations = 3;
  train(more, dir / "final.ckpt");
  std::istringstream log2(testing::read_file(dir / "log.csv"));
  rows = -1;
  while (std::getline(log2, line)) ++rows;
  CHECK(rows == 3);
  CHECK(load_checkpoint(dir / "final.ckpt").iteration == 3);
}

TEST_CASE("config validation") {
  using nlohmann::json;
  SUBCASE("round trip") {
    TrainConfig c = testing::small_config("d", "o", RewardMode::r2h_only, 9);
    c.reward.torque_mode = reward::TorqueMode::torque;
    c.reset_mode = sim::ResetMode::clip_start;
    const TrainConfig back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
  }
  SUBCASE("every problem is reported") {
    const json doc = {{"output_dir", 3}, {"bogus", 1}, {"ppo", {{"gamma", 1.5}, {"horizon", "x"}}}};
    try {
      config_from_json(doc);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      const std::string all = e.what();
      CHECK(all.find("dataset: required field missing") != std::string::npos);
      CHECK(all.find("bogus: unknown field") != std::string::npos);
      CHECK(all.find("output_dir") != std::string::npos);
      CHECK(all.find("ppo.gamma") != std::string::npos);
      CHECK(all.find("ppo.horizon") != std::string::npos);
      CHECK(e.items().size() >= 5);
    }
  }
  SUBCASE("unknown mode") { CHECK_THROWS_AS(config_from_json(json{{"dataset", "d"}, {"mode", "both"}}), ConfigError); }
  SUBCASE("malformed file") {
    testing::TempDir dir("cfg");
    testing::write_file(dir / "c.json", "{\"dataset\": ");
    CHECK_THROWS_AS(load_config(dir / "c.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  }
}

TEST_CASE("thread count does not change results") {
  Fixture f;
  const TrainConfig cfg = f.config();
  std::vector<std::string> bytes;
  for (const char* threads : {"1", "3"}) {
    ::setenv("GAITBRIDGE_THREADS", threads, 1);
    RunState rs = init_run_state(cfg);
    train_iteration(rs, f.data, cfg);
    bytes.push_back(serialize_checkpoint(rs));
  }
  ::unsetenv("GAITBRIDGE_THREADS");
  CHECK(bytes[0] == bytes[1]);
}
