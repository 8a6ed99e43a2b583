#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gaitbridge/rng.hpp"

namespace gaitbridge::motion {

inline constexpr int kHumanJointCount = 6;
inline constexpr int kHumanPoseDim = 8;
inline constexpr int kFeatureBlockDim = kHumanPoseDim + 3 + kHumanJointCount;  // 17
inline constexpr std::array<int, 4> kLookaheads{1, 2, 10, 30};
inline constexpr int kFeatureDim = static_cast<int>(kLookaheads.size()) * kFeatureBlockDim;  // 68
inline constexpr double kFrameDt = 1.0 / 30.0;
inline constexpr double kNominalHeight = 0.9;
inline constexpr double kJointBox = 2.5;
inline constexpr int kClipFormatVersion = 1;
inline constexpr int kManifestVersion = 1;

inline constexpr std::array<const char*, kHumanJointCount> kHumanJointNames{
    "left_hip", "left_knee", "left_ankle", "right_hip", "right_knee", "right_ankle"};

/// Local human pose: root height, root pitch, then hip/knee/ankle for the left and right leg.
struct HumanPose {
  double root_height = kNominalHeight;
  double root_pitch = 0.0;
  std::array<double, kHumanJointCount> joints{};

  Eigen::VectorXd to_vector() const;
  static HumanPose from_vector(const Eigen::VectorXd& v);
  friend bool operator==(const HumanPose&, const HumanPose&) = default;
};

struct HumanFrame {
  HumanPose pose;
  double root_x = 0.0;
  friend bool operator==(const HumanFrame&, const HumanFrame&) = default;
};

struct HumanVelocity {
  double root_dx = 0.0;
  double root_dz = 0.0;
  double pitch_rate = 0.0;
  std::array<double, kHumanJointCount> joint_rates{};
  friend bool operator==(const HumanVelocity&, const HumanVelocity&) = default;
};

/// Source motion. Velocities are derived from the frames, never stored on disk.
struct MotionClip {
  std::string name;
  double frame_dt = kFrameDt;
  std::vector<HumanFrame> frames;
  std::vector<HumanVelocity> velocities;

  std::size_t size() const { return frames.size(); }
  /// Number of control steps needed to play the clip from its first to its last frame.
  std::size_t steps() const { return frames.empty() ? 0 : frames.size() - 1; }

  friend bool operator==(const MotionClip&, const MotionClip&) = default;
};

enum class Preset : std::uint8_t { walk, run, hop, sway, stand };

std::string to_string(Preset p);
Preset preset_from_string(const std::string& name);

struct ClipParams {
  double speed = 1.0;      // m/s
  double frequency = 1.0;  // Hz
  double amplitude = 0.5;  // rad
  double duration = 4.0;   // s
};

/// Procedural planar gait. Throws InvalidArgument on out-of-range parameters.
MotionClip generate_clip(Preset preset, const ClipParams& params, std::uint64_t seed, std::string name = {});

/// Forward differences; the last frame repeats the previous rate.
MotionClip finite_difference_velocities(MotionClip clip);

/// Checks structural invariants; throws InvalidArgument describing the first problem.
void validate_clip(const MotionClip& clip);

/// Pose, root velocity and joint rates at frames t+1, t+2, t+10, t+30 (clamped to the last frame).
Eigen::VectorXd human_feature(const MotionClip& clip, std::size_t t);

/// Start-anchored, scaled root track used as the robot's desired root state.
struct RootTrack {
  std::vector<double> x;
  std::vector<double> dx;
};

RootTrack normalize_root_trajectory(const MotionClip& clip, double scale);

void save_clip(const MotionClip& clip, const std::filesystem::path& path);
MotionClip load_clip(const std::filesystem::path& path);
/// Parses the JSON text of a clip document.
MotionClip parse_clip(const std::string& text);
std::string serialize_clip(const MotionClip& clip);

struct MotionDataset {
  std::vector<MotionClip> clips;
  std::vector<double> weights;  // normalized to sum to 1

  MotionDataset() = default;
  explicit MotionDataset(std::vector<MotionClip> clips, std::vector<double> weights = {});
  std::size_t size() const { return clips.size(); }
};

/// Draws a clip index according to the dataset weights.
std::size_t sample_clip(const MotionDataset& dataset, Rng& rng);

struct PresetSpec {
  Preset preset;
  ClipParams params;
  std::uint64_t seed_offset;
};

/// The default 12-clip table: walk x3, run x2, hop x2, sway x3, stand x2.
std::vector<PresetSpec> default_preset_table();

/// Generates every default-table entry whose preset is listed, naming clips `<preset>_<k>`.
std::vector<MotionClip> generate_default_clips(std::span<const Preset> presets, std::uint64_t seed);

/// Writes clips plus manifest.json into `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const std::vector<MotionClip>& clips,
                                    const std::vector<double>& weights = {});

/// Loads manifest.json and every clip it lists.
MotionDataset load_dataset(const std::filesystem::path& dir);

/// Fingerprint of a dataset directory's manifest file bytes.
std::string manifest_hash(const std::filesystem::path& dir);

}  // namespace gaitbridge::motion
