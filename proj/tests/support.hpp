#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Core>
#include <Eigen/QR>

#include "gaitbridge/config.hpp"
#include "gaitbridge/correspond.hpp"
#include "gaitbridge/motion.hpp"
#include "gaitbridge/nn.hpp"
#include "gaitbridge/rl.hpp"
#include "gaitbridge/rng.hpp"
#include "gaitbridge/sim.hpp"

namespace testing {

namespace fs = std::filesystem;
using gaitbridge::Rng;
using gaitbridge::nn::DenseNet;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("gaitbridge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline double act(gaitbridge::nn::Activation a, double z) {
  switch (a) {
    case gaitbridge::nn::Activation::relu: return z > 0.0 ? z : 0.0;
    case gaitbridge::nn::Activation::elu: return z > 0.0 ? z : std::expm1(z);
    case gaitbridge::nn::Activation::tanh: return std::tanh(z);
    case gaitbridge::nn::Activation::linear: return z;
  }
  return z;
}

// Scalar-loop evaluation of the affine chain, independent of the library's matrix code.
// Collects every hidden pre-activation when `pre` is given.
inline VectorXd reference_forward(const DenseNet& net, const VectorXd& x, std::vector<double>* pre = nullptr) {
  const auto& sizes = net.layer_sizes();
  const VectorXd& p = net.parameters();
  std::vector<double> a(x.data(), x.data() + x.size());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    std::vector<double> z(fan_out, 0.0);
    for (int o = 0; o < fan_out; ++o) {
      double s = 0.0;
      for (int i = 0; i < fan_in; ++i) s += a[i] * p[off + static_cast<Eigen::Index>(i) * fan_out + o];
      z[o] = s + p[off + static_cast<Eigen::Index>(fan_in) * fan_out + o];
    }
    off += static_cast<Eigen::Index>(fan_in) * fan_out + fan_out;
    const bool last = l + 2 == sizes.size();
    if (!last) {
      if (pre) pre->insert(pre->end(), z.begin(), z.end());
      for (double& v : z) v = act(net.hidden_activation(), v);
    }
    a = std::move(z);
  }
  return Eigen::Map<VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

inline double min_abs_preactivation(const DenseNet& net, const VectorXd& x) {
  std::vector<double> pre;
  reference_forward(net, x, &pre);
  double m = std::numeric_limits<double>::infinity();
  for (double z : pre) m = std::min(m, std::abs(z));
  return m;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheck {
  double max_rel = 0.0;
  int checked = 0;
};

// Central differences of upstream . f(theta, x) against the library's backward pass, over the
// listed parameter indices and every input coordinate.
inline GradCheck check_net_gradients(const DenseNet& net, const VectorXd& x, const VectorXd& upstream,
                                     const std::vector<Eigen::Index>& params, double h = 1e-5) {
  const auto g = net.backward(x, upstream);
  GradCheck r;
  DenseNet probe = net;
  for (Eigen::Index i : params) {
    const double saved = probe.parameters()[i];
    probe.parameters()[i] = saved + h;
    const double up = upstream.dot(reference_forward(probe, x));
    probe.parameters()[i] = saved - h;
    const double down = upstream.dot(reference_forward(probe, x));
    probe.parameters()[i] = saved;
    r.max_rel = std::max(r.max_rel, relative_error(g.params[i], (up - down) / (2 * h)));
    ++r.checked;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x;
    xp[i] += h;
    VectorXd xm = x;
    xm[i] -= h;
    const double numeric = (upstream.dot(reference_forward(net, xp)) - upstream.dot(reference_forward(net, xm))) / (2 * h);
    r.max_rel = std::max(r.max_rel, relative_error(g.input[i], numeric));
    ++r.checked;
  }
  return r;
}

inline VectorXd random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Distinct random indices in [0, n), or all of them when k >= n.
inline std::vector<Eigen::Index> sample_indices(Eigen::Index n, int k, Rng& rng) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) all[i] = i;
  if (k >= n) return all;
  for (int i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(static_cast<std::uint64_t>(n - i))]);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

// Explicit double loop: A_t = sum_k (gamma lambda)^k delta_{t+k}, truncated at the first done.
inline std::vector<double> brute_force_gae(const std::vector<double>& r, const std::vector<double>& v, double boot,
                                           const std::vector<std::uint8_t>& done, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = done[t] ? 0.0 : (t + 1 < n ? v[t + 1] : boot);
    delta[t] = r[t] + gamma * next - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += w * delta[k];
      if (done[k]) break;
      w *= gamma * lambda;
    }
  }
  return adv;
}

inline fs::path write_default_dataset(const fs::path& dir, std::uint64_t seed = 0) {
  using gaitbridge::motion::Preset;
  const std::vector<Preset> presets{Preset::walk, Preset::run, Preset::hop, Preset::sway, Preset::stand};
  gaitbridge::motion::write_dataset(dir, gaitbridge::motion::generate_default_clips(presets, seed));
  return dir;
}

// ---- simulator oracles ----

inline gaitbridge::sim::RobotDynState random_airborne_state(Rng& rng, double height) {
  const gaitbridge::sim::RobotModel model;
  gaitbridge::sim::RobotDynState s;
  s.x = rng.uniform(-1.0, 1.0);
  s.z = height;
  s.pitch = rng.uniform(-0.3, 0.3);
  s.vx = rng.uniform(-1.0, 1.0);
  s.vz = rng.uniform(-0.5, 0.5);
  s.pitch_rate = rng.uniform(-0.5, 0.5);
  s.q = model.nominal_joints();
  for (int j = 0; j < gaitbridge::sim::kJointCount; ++j) s.q[j] += rng.uniform(-0.2, 0.2);
  return s;
}

// Action whose PD target equals the current joint angles.
inline gaitbridge::sim::JointArray pinned_action(const gaitbridge::sim::RobotModel& model,
                                                const gaitbridge::sim::RobotDynState& s) {
  const auto nominal = model.nominal_joints();
  gaitbridge::sim::JointArray a{};
  for (int j = 0; j < gaitbridge::sim::kJointCount; ++j) a[j] = (s.q[j] - nominal[j]) / model.action_scale;
  return a;
}

inline double lowest_foot(const gaitbridge::sim::RobotModel& model, const gaitbridge::sim::RobotDynState& s) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& f : gaitbridge::sim::foot_kinematics(model, s)) m = std::min(m, f.position.y());
  return m;
}

// Largest deviation of one control step's vertical velocity change from -g * control_dt.
inline double free_fall_error(int trials, Rng& rng) {
  const gaitbridge::sim::RobotModel model;
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    const auto s = random_airborne_state(rng, 5.0);
    const auto next = gaitbridge::sim::step(model, s, pinned_action(model, s));
    worst = std::max(worst, std::abs((next.vz - s.vz) + model.gravity * model.control_dt()));
    worst = std::max(worst, std::abs(next.vx - s.vx));
    worst = std::max(worst, std::abs(next.pitch_rate - s.pitch_rate));
  }
  return worst;
}

// Largest per-step increase in root mechanical energy during contact-free flight.
inline double passive_energy_increase(int trials, int steps, Rng& rng) {
  const gaitbridge::sim::RobotModel model;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < trials; ++i) {
    auto s = random_airborne_state(rng, 3.0);
    for (int k = 0; k < steps && lowest_foot(model, s) > 0.5; ++k) {
      const double before = gaitbridge::sim::root_energy(model, s);
      s = gaitbridge::sim::step(model, s, pinned_action(model, s));
      worst = std::max(worst, gaitbridge::sim::root_energy(model, s) - before);
    }
  }
  return worst;
}

struct SettleResult {
  double height = 0.0;
  double vz = 0.0;
  double max_penetration = 0.0;
};

// Nominal stance released with zero action for `seconds`.
inline SettleResult drop_settle(double seconds = 2.0) {
  const gaitbridge::sim::RobotModel model;
  gaitbridge::sim::RobotDynState s;
  s.z = model.nominal_height;
  s.q = model.nominal_joints();
  const int steps = static_cast<int>(std::lround(seconds / model.control_dt()));
  SettleResult r;
  for (int k = 0; k < steps; ++k) {
    s = gaitbridge::sim::step(model, s, gaitbridge::sim::JointArray{});
    if (k >= steps / 2) r.max_penetration = std::max(r.max_penetration, -lowest_foot(model, s));
  }
  r.height = s.z;
  r.vz = s.vz;
  return r;
}

// Central differences of foot positions with respect to (x, z, pitch, hip, knee).
inline double foot_jacobian_error(int trials, Rng& rng, double h = 1e-6) {
  const gaitbridge::sim::RobotModel model;
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    gaitbridge::sim::RobotDynState s = random_airborne_state(rng, rng.uniform(0.2, 1.0));
    for (int j = 0; j < gaitbridge::sim::kJointCount; ++j) s.q[j] = rng.uniform(model.lower_limit(j), model.upper_limit(j));
    for (int leg = 0; leg < gaitbridge::sim::kLegCount; ++leg) {
      const auto J = gaitbridge::sim::foot_jacobian(model, s, leg);
      for (int c = 0; c < 5; ++c) {
        auto coord = [&](gaitbridge::sim::RobotDynState& t) -> double& {
          switch (c) {
            case 0: return t.x;
            case 1: return t.z;
            case 2: return t.pitch;
            case 3: return t.q[2 * leg];
            default: return t.q[2 * leg + 1];
          }
        };
        auto plus = s;
        auto minus = s;
        coord(plus) += h;
        coord(minus) -= h;
        const Eigen::Vector2d fd = (gaitbridge::sim::foot_kinematics(model, plus)[leg].position -
                                    gaitbridge::sim::foot_kinematics(model, minus)[leg].position) /
                                   (2 * h);
        for (int r = 0; r < 2; ++r) worst = std::max(worst, relative_error(J(r, c), fd[r]));
      }
    }
  }
  return worst;
}

// ---- synthetic correspondence oracle ----

struct LinearCorrespondence {
  gaitbridge::correspond::MapperBatch batch;  // raw units
  MatrixXd A;                                // human = A * robot + b (+ noise)
  VectorXd b;
};

// Robot poses live on an 8-dimensional affine subspace of R^10, so the linear map to the 8-D
// human pose is invertible on the data and the cycle can be closed exactly.
inline LinearCorrespondence linear_correspondence(Eigen::Index n, double noise, Rng& rng) {
  const int dr = gaitbridge::sim::kPoseDim;
  const int dh = gaitbridge::motion::kHumanPoseDim;
  LinearCorrespondence c;
  const MatrixXd basis = random_matrix(dr, dh, rng, 0.3);
  const VectorXd offset = random_vector(dr, rng, 0.3);
  c.A = MatrixXd::Identity(dh, dr) + random_matrix(dh, dr, rng, 0.2);
  c.b = random_vector(dh, rng, 0.5);
  c.batch.robot.resize(n, dr);
  c.batch.human.resize(n, dh);
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd r = basis * random_vector(dh, rng) + offset;
    c.batch.robot.row(i) = r.transpose();
    c.batch.human.row(i) = (c.A * r + c.b + random_vector(dh, rng, noise)).transpose();
  }
  return c;
}

// Mean squared residual of the best affine fit of Y on X (rows are samples).
inline double least_squares_residual(const MatrixXd& X, const MatrixXd& Y) {
  MatrixXd design(X.rows(), X.cols() + 1);
  design << X, MatrixXd::Ones(X.rows(), 1);
  const MatrixXd coef = design.completeOrthogonalDecomposition().solve(Y);
  return (design * coef - Y).rowwise().squaredNorm().mean();
}

// ---- one-step bandit ----

struct BanditResult {
  VectorXd optimum;
  VectorXd final_mean;
  double error = 0.0;  // max |mean - optimum|
};

// Single-step episodes with reward -|a - a*|^2 and a constant observation. Each iteration samples
// `batch` actions, forms one-step GAE advantages (terminal, so A = r - V) and runs one PPO update.
inline BanditResult run_bandit(std::uint64_t seed, int iterations, int batch = 256) {
  namespace rl = gaitbridge::rl;
  Rng rng(seed);
  const int obs_dim = 4;
  const int act_dim = 2;
  BanditResult out;
  out.optimum.resize(act_dim);
  out.optimum << 0.5, -0.3;
  rl::PPOConfig cfg;
  rl::PolicyNet policy = rl::PolicyNet::create(obs_dim, act_dim, {32, 32}, -0.5, rng);
  rl::ValueNet value = rl::ValueNet::create(obs_dim, {32, 32}, rng);
  rl::PPOOptimizer opt = rl::PPOOptimizer::create(policy, value, cfg.learning_rate, cfg.value_learning_rate);
  const VectorXd obs = VectorXd::Constant(obs_dim, 0.5);
  for (int it = 0; it < iterations; ++it) {
    rl::PPOBatch b;
    b.obs = obs.transpose().replicate(batch, 1);
    b.actions.resize(batch, act_dim);
    b.log_probs.resize(batch);
    b.returns.resize(batch);
    std::vector<double> rewards(batch);
    std::vector<double> values(batch);
    for (int i = 0; i < batch; ++i) {
      const rl::ActResult a = rl::policy_act(policy, value, obs, rng, false);
      b.actions.row(i) = a.action.transpose();
      b.log_probs[i] = a.log_prob;
      rewards[i] = -(a.action - out.optimum).squaredNorm();
      values[i] = a.value;
    }
    const std::vector<std::uint8_t> done(1, 1);
    std::vector<double> adv(batch);
    for (int i = 0; i < batch; ++i) {
      const rl::GaeResult g = rl::compute_gae(std::span(&rewards[i], 1), std::span(&values[i], 1), 0.0, done,
                                              cfg.gamma, cfg.lambda);
      adv[i] = g.advantages[0];
      b.returns[i] = g.returns[0];
    }
    const std::vector<double> norm = rl::normalize_advantages(adv);
    b.advantages = Eigen::Map<const VectorXd>(norm.data(), batch);
    rl::ppo_update(policy, value, opt, b, cfg, rng);
  }
  out.final_mean = policy.net.forward(obs);
  out.error = (out.final_mean - out.optimum).cwiseAbs().maxCoeff();
  return out;
}

// ---- small training setups ----

inline gaitbridge::TrainConfig small_config(const fs::path& dataset, const fs::path& out,
                                           gaitbridge::reward::RewardMode mode = gaitbridge::reward::RewardMode::full,
                                           std::uint64_t seed = 0) {
  gaitbridge::TrainConfig c;
  c.dataset = dataset.string();
  c.output_dir = out.string();
  c.mode = mode;
  c.seed = seed;
  c.iterations = 2;
  c.checkpoint_every = 1;
  c.ppo.num_envs = 4;
  c.ppo.horizon = 16;
  c.network.policy_hidden = {32, 32};
  c.network.mapper_hidden = {16, 16};
  c.mapper.update.minibatch = 32;
  return c;
}

}  // namespace testing
