#include "gaitbridge/trajectory.hpp"

#include <fstream>

#include "gaitbridge/error.hpp"
#include "gaitbridge/motion.hpp"
#include "gaitbridge/text.hpp"

namespace gaitbridge {

std::vector<std::string> trajectory_columns(bool with_reconstruction) {
  std::vector<std::string> c{"time", "root_x", "root_z", "root_pitch", "root_vx", "root_vz", "pitch_rate"};
  for (int j = 0; j < sim::kJointCount; ++j) c.push_back("q" + std::to_string(j));
  for (int j = 0; j < sim::kActionDim; ++j) c.push_back("a" + std::to_string(j));
  for (int l = 0; l < sim::kLegCount; ++l) c.push_back("contact" + std::to_string(l));
  for (const char* r : {"r_cpd", "r_cpd_r2h", "r_corr", "r_root", "r_tor", "r_lim", "r_total"}) c.emplace_back(r);
  if (with_reconstruction) {
    c.insert(c.end(), {"r2h_root_height", "r2h_root_pitch"});
    for (const char* name : motion::kHumanJointNames) c.push_back(std::string("r2h_") + name);
    c.insert(c.end(), {"cycle_root_height", "cycle_root_pitch"});
    for (int j = 0; j < sim::kJointCount; ++j) c.push_back("cycle_q" + std::to_string(j));
  }
  return c;
}

std::string trajectory_row(const TrajectoryStep& s, bool with_reconstruction) {
  const auto f = format_double;
  const sim::RobotDynState& x = s.state;
  std::vector<std::string> v{f(s.time), f(x.x), f(x.z), f(x.pitch), f(x.vx), f(x.vz), f(x.pitch_rate)};
  for (double q : x.q) v.push_back(f(q));
  for (double a : x.prev_action) v.push_back(f(a));
  for (bool c : s.contact) v.emplace_back(c ? "1" : "0");
  const reward::RewardBreakdown& r = s.reward;
  for (double d : {r.r_cpd, r.r_cpd_r2h, r.r_corr, r.r_root, r.r_tor, r.r_lim, r.r_total}) v.push_back(f(d));
  if (with_reconstruction) {
    if (s.r2h.size() != motion::kHumanPoseDim || s.cycle.size() != sim::kPoseDim)
      throw InvalidArgument("trajectory step lacks reconstructed poses");
    for (double d : s.r2h) v.push_back(f(d));
    for (double d : s.cycle) v.push_back(f(d));
  }
  return join(v);
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryStep>& steps,
                          bool with_reconstruction) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << join(trajectory_columns(with_reconstruction)) << "\n";
  for (const TrajectoryStep& s : steps) out << trajectory_row(s, with_reconstruction) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace gaitbridge
