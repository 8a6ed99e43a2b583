#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitbridge/correspond.hpp"
#include "gaitbridge/reward.hpp"
#include "gaitbridge/rl.hpp"
#include "gaitbridge/sim.hpp"

namespace gaitbridge {

struct RewardConfig {
  reward::RewardWeights weights;
  double root_scale = reward::kDefaultRootScale;
  reward::TorqueMode torque_mode = reward::TorqueMode::action;
};

struct MapperConfig {
  correspond::MapperUpdateConfig update;
  double sigma = 1.0;
  double std_floor = 0.05;
};

struct NetworkConfig {
  std::vector<int> policy_hidden{128, 128};
  std::vector<int> mapper_hidden{64, 64};
  double log_std_init = -0.5;
};

struct ObservationConfig {
  double std_floor = 0.01;
  double clip = 10.0;
};

/// Everything a training run depends on. The JSON form is the run's snapshot.
struct TrainConfig {
  std::string dataset;
  std::string output_dir;
  reward::RewardMode mode = reward::RewardMode::full;
  std::uint64_t seed = 0;
  int iterations = 200;
  int checkpoint_every = 50;
  bool log_steps = false;
  sim::ResetMode reset_mode = sim::ResetMode::random_frame;
  RewardConfig reward;
  rl::PPOConfig ppo;
  MapperConfig mapper;
  NetworkConfig network;
  ObservationConfig observation;
};

std::string to_string(sim::ResetMode m);

/// Every field with its value, defaults included.
nlohmann::json to_json(const TrainConfig& cfg);

/// Validates the whole document and throws ConfigError listing every problem.
/// Absent optional fields take their defaults; unknown fields are rejected.
TrainConfig config_from_json(const nlohmann::json& doc);

/// Reads and validates a config file. Unreadable files and malformed JSON raise ConfigError too.
TrainConfig load_config(const std::filesystem::path& path);

/// Canonical text of the snapshot (sorted keys, two-space indent).
std::string config_snapshot(const TrainConfig& cfg);

}  // namespace gaitbridge
