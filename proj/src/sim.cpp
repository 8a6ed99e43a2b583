#include "gaitbridge/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/error.hpp"

namespace gaitbridge::sim {

JointArray RobotModel::nominal_joints() const {
  JointArray q{};
  for (int leg = 0; leg < kLegCount; ++leg) {
    q[2 * leg] = (leg % 2 == 0) ? nominal_hip : -nominal_hip;
    q[2 * leg + 1] = nominal_knee;
  }
  return q;
}

void RobotDynState::write(BinaryWriter& out) const {
  for (double v : {x, z, pitch, vx, vz, pitch_rate}) out.f64(v);
  out.f64s(q);
  out.f64s(q_rate);
  out.f64s(prev_action);
}

RobotDynState RobotDynState::read(BinaryReader& in) {
  RobotDynState s;
  for (double* v : {&s.x, &s.z, &s.pitch, &s.vx, &s.vz, &s.pitch_rate}) *v = in.f64("robot state");
  auto joints = [&](JointArray& dst, const char* what) {
    const auto v = in.f64s(what);
    if (v.size() != kJointCount) throw ParseError(std::string(what) + " must have 8 entries");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  joints(s.q, "joint angles");
  joints(s.q_rate, "joint rates");
  joints(s.prev_action, "previous action");
  return s;
}

Eigen::VectorXd RobotPose::to_vector() const {
  Eigen::VectorXd v(kPoseDim);
  v[0] = root_height;
  v[1] = root_pitch;
  for (int j = 0; j < kJointCount; ++j) v[2 + j] = joints[j];
  return v;
}

RobotPose RobotPose::from_vector(const Eigen::VectorXd& v) {
  if (v.size() != kPoseDim)
    throw InvalidArgument("robot pose vector has " + std::to_string(v.size()) + " values, expected 10");
  RobotPose p;
  p.root_height = v[0];
  p.root_pitch = v[1];
  for (int j = 0; j < kJointCount; ++j) p.joints[j] = v[2 + j];
  return p;
}

ResetResult reset(const RobotModel& model, const motion::MotionClip& clip, double root_scale, ResetMode mode,
                  Rng& rng) {
  motion::validate_clip(clip);
  ResetResult r;
  if (mode == ResetMode::random_frame) r.start_frame = static_cast<std::size_t>(rng.index(clip.size() - 1));
  const double x0 = clip.frames.front().root_x;
  r.state.x = root_scale * (clip.frames[r.start_frame].root_x - x0);
  r.state.z = model.nominal_height;
  r.state.q = model.nominal_joints();
  return r;
}

JointArray pd_torque(const RobotModel& model, const JointArray& q, const JointArray& q_rate, const JointArray& action) {
  const JointArray nominal = model.nominal_joints();
  JointArray tau{};
  for (int j = 0; j < kJointCount; ++j) {
    const double target = nominal[j] + model.action_scale * std::clamp(action[j], -1.0, 1.0);
    tau[j] = std::clamp(model.kp * (target - q[j]) - model.kd * q_rate[j], -model.torque_limit, model.torque_limit);
  }
  return tau;
}

namespace {

// Unit vector of a link hanging from the downward vertical, rotated by `angle`.
Eigen::Vector2d link_dir(double angle) { return {std::sin(angle), -std::cos(angle)}; }
Eigen::Vector2d link_dir_derivative(double angle) { return {std::cos(angle), std::sin(angle)}; }

}  // namespace

Eigen::Matrix<double, 2, 5> foot_jacobian(const RobotModel& model, const RobotDynState& s, int leg) {
  const double hx = model.hip_offsets[leg];
  const double a = s.pitch + s.q[2 * leg];
  const double b = a + s.q[2 * leg + 1];
  const Eigen::Vector2d lower = model.lower_link * link_dir_derivative(b);
  const Eigen::Vector2d upper = model.upper_link * link_dir_derivative(a) + lower;
  Eigen::Matrix<double, 2, 5> j;
  j.col(0) = Eigen::Vector2d(1.0, 0.0);
  j.col(1) = Eigen::Vector2d(0.0, 1.0);
  j.col(2) = Eigen::Vector2d(-hx * std::sin(s.pitch), hx * std::cos(s.pitch)) + upper;
  j.col(3) = upper;
  j.col(4) = lower;
  return j;
}

std::array<FootState, kLegCount> foot_kinematics(const RobotModel& model, const RobotDynState& s) {
  std::array<FootState, kLegCount> feet;
  const double c = std::cos(s.pitch);
  const double sn = std::sin(s.pitch);
  for (int leg = 0; leg < kLegCount; ++leg) {
    const double hx = model.hip_offsets[leg];
    const double a = s.pitch + s.q[2 * leg];
    const double b = a + s.q[2 * leg + 1];
    feet[leg].position = Eigen::Vector2d(s.x + hx * c, s.z + hx * sn) + model.upper_link * link_dir(a) +
                         model.lower_link * link_dir(b);
    const Eigen::Matrix<double, 5, 1> rates(s.vx, s.vz, s.pitch_rate, s.q_rate[2 * leg], s.q_rate[2 * leg + 1]);
    feet[leg].velocity = foot_jacobian(model, s, leg) * rates;
  }
  return feet;
}

Eigen::Vector2d contact_force(const RobotModel& model, const Eigen::Vector2d& p, const Eigen::Vector2d& v) {
  if (p.y() >= 0.0) return Eigen::Vector2d::Zero();
  const double normal = std::max(0.0, -model.contact_stiffness * p.y() - model.contact_damping * v.y());
  const double tangential = -model.friction * normal * std::tanh(v.x() / model.friction_velocity);
  return {tangential, normal};
}

RobotDynState step(const RobotModel& model, const RobotDynState& state, const JointArray& action, StepInfo* info) {
  RobotDynState s = state;
  JointArray a{};
  for (int j = 0; j < kJointCount; ++j) a[j] = std::clamp(action[j], -1.0, 1.0);
  const double dt = model.physics_dt;

  JointArray worst_violation;
  worst_violation.fill(-std::numeric_limits<double>::infinity());
  JointArray probe{};
  JointArray tau{};
  std::array<FootState, kLegCount> feet{};

  for (int sub = 0; sub < model.decimation; ++sub) {
    tau = pd_torque(model, s.q, s.q_rate, a);
    for (int j = 0; j < kJointCount; ++j) {
      s.q_rate[j] += dt * (tau[j] - model.joint_damping * s.q_rate[j]) / model.joint_inertia;
      double q = s.q[j] + dt * s.q_rate[j];
      const double lo = model.lower_limit(j);
      const double hi = model.upper_limit(j);
      const double violation = std::max(lo - q, q - hi);
      if (violation >= 0.0 && violation >= worst_violation[j]) {
        worst_violation[j] = violation;
        probe[j] = q;
      } else if (worst_violation[j] < 0.0) {
        probe[j] = q;
      }
      if (q < lo || q > hi) {
        q = std::clamp(q, lo, hi);
        s.q_rate[j] = 0.0;
      }
      s.q[j] = q;
    }

    feet = foot_kinematics(model, s);
    double fx = 0.0;
    double fz = -model.mass * model.gravity;
    double moment = 0.0;
    for (const FootState& foot : feet) {
      const Eigen::Vector2d f = contact_force(model, foot.position, foot.velocity);
      fx += f.x();
      fz += f.y();
      moment += (foot.position.x() - s.x) * f.y() - (foot.position.y() - s.z) * f.x();
    }
    s.vx += dt * fx / model.mass;
    s.vz += dt * fz / model.mass;
    s.pitch_rate += dt * moment / model.pitch_inertia;
    s.x += dt * s.vx;
    s.z += dt * s.vz;
    s.pitch += dt * s.pitch_rate;
  }
  s.prev_action = a;

  auto finite = [](const JointArray& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
  if (!std::isfinite(s.x) || !std::isfinite(s.z) || !std::isfinite(s.pitch) || !std::isfinite(s.vx) ||
      !std::isfinite(s.vz) || !std::isfinite(s.pitch_rate) || !finite(s.q) || !finite(s.q_rate))
    throw SimulationDiverged("non-finite robot state after physics step");

  if (info) {
    info->torques = tau;
    info->limit_probe = probe;
    const auto end_feet = foot_kinematics(model, s);
    for (int leg = 0; leg < kLegCount; ++leg) info->contact[leg] = end_feet[leg].position.y() < 0.0;
  }
  return s;
}

RobotPose extract_pose(const RobotDynState& s) {
  RobotPose p;
  p.root_height = s.z;
  p.root_pitch = s.pitch;
  p.joints = s.q;
  return p;
}

Eigen::VectorXd extract_obs(const RobotDynState& s) {
  Eigen::VectorXd o(kObsDim);
  int k = 0;
  o[k++] = s.z;
  o[k++] = s.pitch;
  for (double q : s.q) o[k++] = q;
  o[k++] = s.vx;
  o[k++] = s.vz;
  o[k++] = s.pitch_rate;
  for (double r : s.q_rate) o[k++] = r;
  for (double a : s.prev_action) o[k++] = a;
  return o;
}

Termination check_termination(const RobotModel& model, const RobotDynState& s) {
  return (s.z < model.fall_height || std::abs(s.pitch) > model.fall_pitch) ? Termination::fell : Termination::running;
}

double root_energy(const RobotModel& model, const RobotDynState& s) {
  return 0.5 * model.mass * (s.vx * s.vx + s.vz * s.vz) + 0.5 * model.pitch_inertia * s.pitch_rate * s.pitch_rate +
         model.mass * model.gravity * s.z;
}

}  // namespace gaitbridge::sim
