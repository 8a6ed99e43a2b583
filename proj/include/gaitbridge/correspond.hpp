#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "gaitbridge/nn.hpp"
#include "gaitbridge/rng.hpp"
#include "gaitbridge/running_stats.hpp"

namespace gaitbridge::correspond {

using nn::Matrix;
using nn::Vector;

/// Robot-to-human and human-to-robot mean networks.
///
/// Both networks work in standardized pose coordinates. `human` and `robot` are the frozen
/// standardizers for the two pose spaces (identity unless the trainer installs statistics);
/// every reconstruction error below is measured in those coordinates. `sigma` is the fixed
/// covariance of the Gaussian mappers. Once the log-density reduces to a squared error it
/// never enters a computed quantity; it is kept for completeness of the model description.
struct MapperPair {
  nn::DenseNet r2h;
  nn::DenseNet h2r;
  double sigma = 1.0;
  Standardizer human;
  Standardizer robot;

  static MapperPair create(int human_dim, int robot_dim, const std::vector<int>& hidden, Rng& rng);

  int human_dim() const { return r2h.output_size(); }
  int robot_dim() const { return r2h.input_size(); }
};

/// Mean human pose predicted from a robot pose (raw units in, raw units out).
Vector r2h_predict(const MapperPair& mapper, const Vector& robot_pose);
/// Mean robot pose predicted from a human pose (raw units in, raw units out).
Vector h2r_predict(const MapperPair& mapper, const Vector& human_pose);
/// h2r(r2h(p^r)) in raw robot units.
Vector cycle_predict(const MapperPair& mapper, const Vector& robot_pose);

/// Timestep-aligned (p^h, p^r) pairs, one per row, in raw units.
struct MapperBatch {
  Matrix human;
  Matrix robot;
  Eigen::Index size() const { return human.rows(); }
};

struct CycleLoss {
  double r2h = 0.0;
  double cycle = 0.0;
  double total = 0.0;
};

/// Per-sample squared reconstruction errors.
struct ReconstructionErrors {
  Vector r2h;    // |p^h - mu_r2h(p^r)|^2
  Vector cycle;  // |p^r - mu_h2r(mu_r2h(p^r))|^2
};

ReconstructionErrors reconstruction_errors(const MapperPair& mapper, const MapperBatch& batch);

/// Batch means of both reconstruction errors; total = r2h + cycle_weight * cycle.
CycleLoss cycle_loss(const MapperPair& mapper, const MapperBatch& batch, double cycle_weight = 1.0);

struct CycleLossGradients {
  CycleLoss loss;
  Vector r2h;  // gradient w.r.t. mapper.r2h parameters
  Vector h2r;  // gradient w.r.t. mapper.h2r parameters
};

/// Loss and exact parameter gradients. The cycle term reaches r2h through the composition.
CycleLossGradients cycle_loss_gradients(const MapperPair& mapper, const MapperBatch& batch, double cycle_weight = 1.0);

struct MapperUpdateConfig {
  int epochs = 4;
  int minibatch = 512;
  double learning_rate = 1e-3;
  double cycle_weight = 1.0;
};

struct MapperOptimizer {
  nn::AdamState r2h;
  nn::AdamState h2r;

  static MapperOptimizer create(const MapperPair& mapper, double learning_rate);
};

struct MapperUpdateResult {
  CycleLoss before;                 // loss on the full batch before any update
  std::vector<CycleLoss> per_epoch;  // loss on the full batch after each epoch
  bool aborted = false;             // a non-finite loss stopped the update
  int skipped_steps = 0;
};

/// Minibatch Adam on the cycle-consistency loss, both networks jointly.
MapperUpdateResult update_mappers(MapperPair& mapper, MapperOptimizer& optimizer, const MapperBatch& data,
                                  const MapperUpdateConfig& cfg, Rng& rng);

/// exp(-e_r2h - e_cycle).
inline double correspondence_reward_from_errors(double r2h_error, double cycle_error) {
  return std::exp(-r2h_error - cycle_error);
}

double correspondence_reward(const MapperPair& mapper, const Vector& human_pose, const Vector& robot_pose);
/// exp(-e_r2h); the cycle term is dropped.
double r2h_only_reward(const MapperPair& mapper, const Vector& human_pose, const Vector& robot_pose);

}  // namespace gaitbridge::correspond
