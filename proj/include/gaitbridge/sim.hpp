#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

#include "gaitbridge/motion.hpp"
#include "gaitbridge/rng.hpp"

namespace gaitbridge {
class BinaryWriter;
class BinaryReader;
}  // namespace gaitbridge

namespace gaitbridge::sim {

inline constexpr int kLegCount = 4;
inline constexpr int kJointCount = 8;
inline constexpr int kActionDim = kJointCount;
inline constexpr int kPoseDim = 10;
inline constexpr int kObsDim = kPoseDim + 3 + kJointCount + kActionDim;  // 29

using JointArray = std::array<double, kJointCount>;

/// Physical constants of the planar quadruped. Legs are ordered front to rear; joint
/// 2k is the hip and 2k+1 the knee of leg k.
struct RobotModel {
  double mass = 10.0;
  double pitch_inertia = 0.5;
  std::array<double, kLegCount> hip_offsets{0.30, 0.10, -0.10, -0.30};
  double upper_link = 0.25;
  double lower_link = 0.25;
  double joint_inertia = 0.05;
  double joint_damping = 0.1;
  double kp = 40.0;
  double kd = 1.0;
  double torque_limit = 30.0;
  double hip_lower = -1.2;
  double hip_upper = 1.2;
  double knee_lower = 0.1;
  double knee_upper = 2.4;
  double contact_stiffness = 5000.0;
  double contact_damping = 100.0;
  double friction = 0.8;
  double friction_velocity = 0.1;
  double gravity = 9.81;
  double physics_dt = 1.0 / 240.0;
  int decimation = 8;
  double action_scale = 0.8;
  double nominal_height = 0.42;
  double nominal_hip = 0.3;
  double nominal_knee = 0.8;
  double fall_height = 0.20;
  double fall_pitch = 1.0;

  double control_dt() const { return physics_dt * decimation; }
  /// Hips alternate +/- nominal_hip from the front leg; knees are all nominal_knee.
  JointArray nominal_joints() const;
  double lower_limit(int joint) const { return joint % 2 == 0 ? hip_lower : knee_lower; }
  double upper_limit(int joint) const { return joint % 2 == 0 ? hip_upper : knee_upper; }
};

struct RobotDynState {
  double x = 0.0;
  double z = 0.0;
  double pitch = 0.0;
  double vx = 0.0;
  double vz = 0.0;
  double pitch_rate = 0.0;
  JointArray q{};
  JointArray q_rate{};
  JointArray prev_action{};

  void write(BinaryWriter& out) const;
  static RobotDynState read(BinaryReader& in);
  friend bool operator==(const RobotDynState&, const RobotDynState&) = default;
};

/// Local robot pose p^r: root height, root pitch, 8 joint angles.
struct RobotPose {
  double root_height = 0.0;
  double root_pitch = 0.0;
  JointArray joints{};

  Eigen::VectorXd to_vector() const;
  static RobotPose from_vector(const Eigen::VectorXd& v);
  friend bool operator==(const RobotPose&, const RobotPose&) = default;
};

struct StepInfo {
  JointArray torques{};  // torques applied in the final substep
  std::array<bool, kLegCount> contact{};  // foot below ground at the end of the step
  /// Per joint, the pre-clamp angle of the substep where it pressed hardest against a
  /// stop; the final pre-clamp angle when it never reached one.
  JointArray limit_probe{};
};

enum class ResetMode : std::uint8_t { clip_start, random_frame };

struct ResetResult {
  RobotDynState state;
  std::size_t start_frame = 0;
};

/// Nominal stance with zero velocities, root x placed on the scaled clip track.
ResetResult reset(const RobotModel& model, const motion::MotionClip& clip, double root_scale, ResetMode mode,
                  Rng& rng);

/// Target q* = nominal + action_scale * clamp(action, -1, 1); PD torque saturated at the limit.
JointArray pd_torque(const RobotModel& model, const JointArray& q, const JointArray& q_rate, const JointArray& action);

struct FootState {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
};

/// World-frame foot position and velocity for every leg.
std::array<FootState, kLegCount> foot_kinematics(const RobotModel& model, const RobotDynState& state);

/// d(foot position)/d(x, z, pitch, hip, knee) for one leg.
Eigen::Matrix<double, 2, 5> foot_jacobian(const RobotModel& model, const RobotDynState& state, int leg);

/// Spring-damper normal force with tanh-smoothed Coulomb friction. Zero when the foot is above ground.
Eigen::Vector2d contact_force(const RobotModel& model, const Eigen::Vector2d& foot_position,
                              const Eigen::Vector2d& foot_velocity);

/// One control step: `decimation` semi-implicit Euler substeps. Throws SimulationDiverged on a
/// non-finite result.
RobotDynState step(const RobotModel& model, const RobotDynState& state, const JointArray& action,
                   StepInfo* info = nullptr);

RobotPose extract_pose(const RobotDynState& state);
/// s^r: pose (10), root velocity (3), joint rates (8), previous action (8).
Eigen::VectorXd extract_obs(const RobotDynState& state);

enum class Termination : std::uint8_t { running, fell };
Termination check_termination(const RobotModel& model, const RobotDynState& state);

/// Translational plus rotational kinetic energy and gravitational potential of the root body.
double root_energy(const RobotModel& model, const RobotDynState& state);

}  // namespace gaitbridge::sim
