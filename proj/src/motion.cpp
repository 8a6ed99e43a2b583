#include "gaitbridge/motion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/error.hpp"

namespace gaitbridge::motion {

using json = nlohmann::json;
namespace fs = std::filesystem;

Eigen::VectorXd HumanPose::to_vector() const {
  Eigen::VectorXd v(kHumanPoseDim);
  v[0] = root_height;
  v[1] = root_pitch;
  for (int j = 0; j < kHumanJointCount; ++j) v[2 + j] = joints[j];
  return v;
}

HumanPose HumanPose::from_vector(const Eigen::VectorXd& v) {
  if (v.size() != kHumanPoseDim)
    throw InvalidArgument("human pose vector has " + std::to_string(v.size()) + " values, expected 8");
  HumanPose p;
  p.root_height = v[0];
  p.root_pitch = v[1];
  for (int j = 0; j < kHumanJointCount; ++j) p.joints[j] = v[2 + j];
  return p;
}

std::string to_string(Preset p) {
  switch (p) {
    case Preset::walk: return "walk";
    case Preset::run: return "run";
    case Preset::hop: return "hop";
    case Preset::sway: return "sway";
    case Preset::stand: return "stand";
  }
  return "?";
}

Preset preset_from_string(const std::string& name) {
  for (Preset p : {Preset::walk, Preset::run, Preset::hop, Preset::sway, Preset::stand})
    if (to_string(p) == name) return p;
  throw InvalidArgument("unknown preset '" + name + "' (expected walk, run, hop, sway or stand)");
}

namespace {

void check_params(const ClipParams& p) {
  std::vector<std::string> problems;
  if (!(p.duration >= 1.0) || !std::isfinite(p.duration)) problems.push_back("duration must be >= 1 s");
  if (!(p.frequency > 0.0 && p.frequency <= 5.0)) problems.push_back("frequency must be in (0, 5] Hz");
  if (!(p.amplitude >= 0.0 && p.amplitude <= 1.2)) problems.push_back("amplitude must be in [0, 1.2] rad");
  if (!(p.speed >= 0.0 && p.speed <= 5.0)) problems.push_back("speed must be in [0, 5] m/s");
  if (!problems.empty()) throw ConfigError(problems);
}

}  // namespace

MotionClip generate_clip(Preset preset, const ClipParams& params, std::uint64_t seed, std::string name) {
  check_params(params);
  Rng rng(seed);
  const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::array<double, kHumanJointCount> jitter{};
  for (double& j : jitter) j = rng.uniform(0.9, 1.1);

  const auto count = static_cast<std::size_t>(std::llround(params.duration / kFrameDt)) + 1;
  const double a = params.amplitude;
  const double w = 2.0 * std::numbers::pi * params.frequency;

  MotionClip clip;
  clip.name = name.empty() ? to_string(preset) : std::move(name);
  clip.frame_dt = kFrameDt;
  clip.frames.resize(count);

  // Stand holds one seed-dependent posture for the whole clip.
  HumanPose stand_pose;
  stand_pose.root_height = kNominalHeight - 0.02 * rng.uniform();
  stand_pose.root_pitch = 0.04 * (rng.uniform() - 0.5);
  for (int side = 0; side < 2; ++side) {
    stand_pose.joints[3 * side + 0] = 0.1 * (rng.uniform() - 0.5);
    stand_pose.joints[3 * side + 1] = 0.05 + 0.1 * rng.uniform();
    stand_pose.joints[3 * side + 2] = 0.05 * (rng.uniform() - 0.5);
  }

  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) * kFrameDt;
    const double phi = w * t + phase0;
    HumanFrame& f = clip.frames[i];
    HumanPose& p = f.pose;
    f.root_x = params.speed * t;
    switch (preset) {
      case Preset::walk:
      case Preset::run: {
        const bool run = preset == Preset::run;
        for (int side = 0; side < 2; ++side) {
          const double leg = phi + side * std::numbers::pi;
          const double* j = &jitter[3 * side];
          p.joints[3 * side + 0] = (run ? 1.2 : 1.0) * a * j[0] * std::sin(leg);
          p.joints[3 * side + 1] = run ? 0.3 + 0.8 * a * j[1] * (1.0 + std::sin(leg + 0.8))
                                       : 0.15 + 0.5 * a * j[1] * (1.0 + std::sin(leg + 0.8));
          p.joints[3 * side + 2] = 0.35 * a * j[2] * std::sin(leg - 1.0);
        }
        p.root_height = (run ? 0.88 : kNominalHeight) - (run ? 0.06 : 0.03) * a * 0.5 * (1.0 - std::cos(2.0 * phi));
        p.root_pitch = (run ? 0.15 : 0.05) + (run ? 0.04 : 0.03) * std::sin(2.0 * phi);
        break;
      }
      case Preset::hop: {
        const double crouch = 0.5 * (1.0 - std::cos(phi));
        for (int side = 0; side < 2; ++side) {
          const double* j = &jitter[3 * side];
          p.joints[3 * side + 0] = a * j[0] * crouch;
          p.joints[3 * side + 1] = 0.1 + 1.6 * a * j[1] * crouch;
          p.joints[3 * side + 2] = -0.6 * a * j[2] * crouch;
        }
        p.root_height = kNominalHeight + 0.12 * a * std::sin(phi) - 0.2 * a * crouch;
        p.root_pitch = 0.1 * a * crouch;
        break;
      }
      case Preset::sway: {
        for (int side = 0; side < 2; ++side) {
          const double* j = &jitter[3 * side];
          const double leg = phi + side * 0.5 * std::numbers::pi;
          p.joints[3 * side + 0] = 0.6 * a * j[0] * std::sin(leg);
          p.joints[3 * side + 1] = 0.2 + 0.6 * a * j[1] * 0.5 * (1.0 - std::cos(2.0 * leg));
          p.joints[3 * side + 2] = 0.3 * a * j[2] * std::sin(2.0 * leg);
        }
        p.root_height = kNominalHeight - 0.1 * a * 0.5 * (1.0 - std::cos(2.0 * phi));
        p.root_pitch = 0.25 * a * std::sin(phi);
        f.root_x += 0.1 * a * std::sin(phi);
        break;
      }
      case Preset::stand: {
        p = stand_pose;
        f.root_x = 0.0;
        break;
      }
    }
  }
  return finite_difference_velocities(std::move(clip));
}

MotionClip finite_difference_velocities(MotionClip clip) {
  const std::size_t n = clip.frames.size();
  if (n < 2) throw InvalidArgument("clip '" + clip.name + "' needs at least 2 frames to difference");
  if (!(clip.frame_dt > 0.0)) throw InvalidArgument("clip '" + clip.name + "' has non-positive frame_dt");
  clip.velocities.assign(n, HumanVelocity{});
  const double inv_dt = 1.0 / clip.frame_dt;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const HumanFrame& a = clip.frames[i];
    const HumanFrame& b = clip.frames[i + 1];
    HumanVelocity& v = clip.velocities[i];
    v.root_dx = (b.root_x - a.root_x) * inv_dt;
    v.root_dz = (b.pose.root_height - a.pose.root_height) * inv_dt;
    v.pitch_rate = (b.pose.root_pitch - a.pose.root_pitch) * inv_dt;
    for (int j = 0; j < kHumanJointCount; ++j) v.joint_rates[j] = (b.pose.joints[j] - a.pose.joints[j]) * inv_dt;
  }
  clip.velocities[n - 1] = clip.velocities[n - 2];
  return clip;
}

void validate_clip(const MotionClip& clip) {
  if (clip.frames.size() < 2) throw InvalidArgument("clip '" + clip.name + "' has fewer than 2 frames");
  if (!(clip.frame_dt > 0.0) || !std::isfinite(clip.frame_dt))
    throw InvalidArgument("clip '" + clip.name + "' has non-positive frame_dt");
  if (clip.velocities.size() != clip.frames.size())
    throw InvalidArgument("clip '" + clip.name + "' velocity count does not match frame count");
}

Eigen::VectorXd human_feature(const MotionClip& clip, std::size_t t) {
  if (t >= clip.frames.size())
    throw InvalidArgument("frame index " + std::to_string(t) + " out of range for clip of " +
                          std::to_string(clip.frames.size()) + " frames");
  if (clip.velocities.size() != clip.frames.size()) throw InvalidArgument("clip velocities are missing");
  Eigen::VectorXd x(kFeatureDim);
  const std::size_t last = clip.frames.size() - 1;
  int o = 0;
  for (int k : kLookaheads) {
    const std::size_t idx = std::min(t + static_cast<std::size_t>(k), last);
    const HumanPose& p = clip.frames[idx].pose;
    const HumanVelocity& v = clip.velocities[idx];
    x[o++] = p.root_height;
    x[o++] = p.root_pitch;
    for (double q : p.joints) x[o++] = q;
    x[o++] = v.root_dx;
    x[o++] = v.root_dz;
    x[o++] = v.pitch_rate;
    for (double r : v.joint_rates) x[o++] = r;
  }
  return x;
}

RootTrack normalize_root_trajectory(const MotionClip& clip, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("root scale must be positive");
  RootTrack track;
  if (clip.frames.empty()) return track;
  const double x0 = clip.frames.front().root_x;
  track.x.reserve(clip.frames.size());
  track.dx.reserve(clip.frames.size());
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    track.x.push_back(scale * (clip.frames[i].root_x - x0));
    track.dx.push_back(i < clip.velocities.size() ? scale * clip.velocities[i].root_dx : 0.0);
  }
  return track;
}

std::string serialize_clip(const MotionClip& clip) {
  json doc;
  doc["version"] = kClipFormatVersion;
  doc["name"] = clip.name;
  doc["frame_dt"] = clip.frame_dt;
  doc["joint_names"] = std::vector<std::string>(kHumanJointNames.begin(), kHumanJointNames.end());
  json frames = json::array();
  for (const HumanFrame& f : clip.frames) {
    json row = json::array({f.root_x, f.pose.root_height, f.pose.root_pitch});
    for (double q : f.pose.joints) row.push_back(q);
    frames.push_back(std::move(row));
  }
  doc["frames"] = std::move(frames);
  return doc.dump(1);
}

void save_clip(const MotionClip& clip, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write clip file " + path.string());
  out << serialize_clip(clip) << '\n';
  if (!out) throw std::runtime_error("failed writing clip file " + path.string());
}

MotionClip parse_clip(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("clip is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("clip document must be a JSON object");
  auto require = [&](const char* field) -> const json& {
    if (!doc.contains(field)) throw ParseError(std::string("clip field '") + field + "' is missing");
    return doc.at(field);
  };
  const json& version = require("version");
  if (!version.is_number_integer() || version.get<int>() != kClipFormatVersion)
    throw ParseError("clip field 'version' must be " + std::to_string(kClipFormatVersion));
  const json& name = require("name");
  if (!name.is_string()) throw ParseError("clip field 'name' must be a string");
  const json& dt = require("frame_dt");
  if (!dt.is_number() || !(dt.get<double>() > 0.0)) throw ParseError("clip field 'frame_dt' must be a number > 0");
  const json& names = require("joint_names");
  if (!names.is_array() || names.size() != kHumanJointCount)
    throw ParseError("clip field 'joint_names' must list 6 joints");
  for (std::size_t j = 0; j < kHumanJointCount; ++j)
    if (names[j] != kHumanJointNames[j])
      throw ParseError("clip field 'joint_names[" + std::to_string(j) + "]' must be '" + kHumanJointNames[j] + "'");
  const json& frames = require("frames");
  if (!frames.is_array()) throw ParseError("clip field 'frames' must be an array");
  if (frames.size() < 2) throw ParseError("clip field 'frames' needs at least 2 frames");

  MotionClip clip;
  clip.name = name.get<std::string>();
  clip.frame_dt = dt.get<double>();
  clip.frames.resize(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& row = frames[i];
    const std::string where = "frames[" + std::to_string(i) + "]";
    if (!row.is_array()) throw ParseError("clip field '" + where + "' must be an array");
    if (row.size() != 3 + kHumanJointCount)
      throw ParseError("clip field '" + where + "' has " + std::to_string(row.size()) + " values, expected 9");
    std::array<double, 3 + kHumanJointCount> v{};
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!row[k].is_number())
        throw ParseError("clip field '" + where + "[" + std::to_string(k) + "]' is not a number");
      v[k] = row[k].get<double>();
      if (!std::isfinite(v[k]))
        throw ParseError("clip field '" + where + "[" + std::to_string(k) + "]' is not finite");
    }
    HumanFrame& f = clip.frames[i];
    f.root_x = v[0];
    f.pose.root_height = v[1];
    f.pose.root_pitch = v[2];
    for (int j = 0; j < kHumanJointCount; ++j) f.pose.joints[j] = v[3 + j];
  }
  return finite_difference_velocities(std::move(clip));
}

namespace {
std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

MotionClip load_clip(const fs::path& path) {
  try {
    return parse_clip(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

MotionDataset::MotionDataset(std::vector<MotionClip> c, std::vector<double> w) : clips(std::move(c)) {
  if (clips.empty()) throw InvalidArgument("dataset must contain at least one clip");
  for (const auto& clip : clips) validate_clip(clip);
  if (w.empty()) w.assign(clips.size(), 1.0);
  if (w.size() != clips.size()) throw InvalidArgument("dataset weight count does not match clip count");
  double total = 0.0;
  for (double x : w) {
    if (!(x > 0.0) || !std::isfinite(x)) throw InvalidArgument("dataset weights must be positive and finite");
    total += x;
  }
  weights.reserve(w.size());
  for (double x : w) weights.push_back(x / total);
}

std::size_t sample_clip(const MotionDataset& dataset, Rng& rng) {
  if (dataset.clips.empty()) throw InvalidArgument("cannot sample from an empty dataset");
  if (dataset.clips.size() == 1) return 0;
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < dataset.weights.size(); ++i) {
    acc += dataset.weights[i];
    if (u < acc) return i;
  }
  return dataset.weights.size() - 1;
}

std::vector<PresetSpec> default_preset_table() {
  return {
      {Preset::walk, {0.8, 0.9, 0.45, 6.0}, 0},  {Preset::walk, {1.1, 1.0, 0.55, 6.0}, 1},
      {Preset::walk, {1.4, 1.1, 0.65, 6.0}, 2},  {Preset::run, {2.0, 1.4, 0.8, 5.0}, 3},
      {Preset::run, {2.5, 1.6, 0.9, 5.0}, 4},    {Preset::hop, {0.4, 1.2, 0.6, 5.0}, 5},
      {Preset::hop, {0.8, 1.5, 0.7, 5.0}, 6},    {Preset::sway, {0.0, 0.5, 0.4, 6.0}, 7},
      {Preset::sway, {0.0, 0.8, 0.6, 6.0}, 8},   {Preset::sway, {0.0, 1.2, 0.8, 6.0}, 9},
      {Preset::stand, {0.0, 1.0, 0.0, 4.0}, 10}, {Preset::stand, {0.0, 1.0, 0.0, 4.0}, 11},
  };
}

std::vector<MotionClip> generate_default_clips(std::span<const Preset> presets, std::uint64_t seed) {
  std::vector<MotionClip> clips;
  std::array<int, 5> counter{};
  for (const PresetSpec& spec : default_preset_table()) {
    if (std::find(presets.begin(), presets.end(), spec.preset) == presets.end()) continue;
    const int k = counter[static_cast<int>(spec.preset)]++;
    clips.push_back(generate_clip(spec.preset, spec.params, seed * 1000003ULL + spec.seed_offset,
                                  to_string(spec.preset) + "_" + std::to_string(k)));
  }
  return clips;
}

fs::path write_dataset(const fs::path& dir, const std::vector<MotionClip>& clips, const std::vector<double>& weights) {
  if (clips.empty()) throw InvalidArgument("refusing to write an empty dataset");
  if (!weights.empty() && weights.size() != clips.size())
    throw InvalidArgument("dataset weight count does not match clip count");
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = kManifestVersion;
  manifest["pose_dim"] = kHumanPoseDim;
  manifest["feature_dim"] = kFeatureDim;
  json entries = json::array();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string file = clips[i].name + ".json";
    save_clip(clips[i], dir / file);
    entries.push_back({{"path", file}, {"weight", weights.empty() ? 1.0 / static_cast<double>(clips.size()) : weights[i]}});
  }
  manifest["clips"] = std::move(entries);
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest.dump(2) << '\n';
  return path;
}

MotionDataset load_dataset(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": not valid JSON: " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("clips") || !manifest["clips"].is_array())
    throw ParseError(path.string() + ": field 'clips' is missing or not an array");
  if (manifest.value("version", -1) != kManifestVersion)
    throw ParseError(path.string() + ": field 'version' must be " + std::to_string(kManifestVersion));
  if (manifest.value("pose_dim", kHumanPoseDim) != kHumanPoseDim ||
      manifest.value("feature_dim", kFeatureDim) != kFeatureDim)
    throw InvalidArgument(path.string() + ": dataset pose/feature dimensions do not match this build (8/68)");
  std::vector<MotionClip> clips;
  std::vector<double> weights;
  std::size_t i = 0;
  for (const json& e : manifest["clips"]) {
    const std::string where = "clips[" + std::to_string(i++) + "]";
    if (!e.is_object() || !e.contains("path") || !e["path"].is_string())
      throw ParseError(path.string() + ": field '" + where + ".path' is missing");
    clips.push_back(load_clip(dir / e["path"].get<std::string>()));
    weights.push_back(e.value("weight", 1.0));
  }
  return MotionDataset(std::move(clips), std::move(weights));
}

std::string manifest_hash(const fs::path& dir) { return hex64(fnv1a64(read_file(dir / "manifest.json"))); }

}  // namespace gaitbridge::motion
