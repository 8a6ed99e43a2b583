#include "gaitbridge/correspond.hpp"

#include <cmath>
#include <numeric>

#include "gaitbridge/error.hpp"

namespace gaitbridge::correspond {

MapperPair MapperPair::create(int human_dim, int robot_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> forward{robot_dim};
  forward.insert(forward.end(), hidden.begin(), hidden.end());
  forward.push_back(human_dim);
  std::vector<int> backward{human_dim};
  backward.insert(backward.end(), hidden.begin(), hidden.end());
  backward.push_back(robot_dim);
  MapperPair m;
  m.r2h = nn::DenseNet::initialized(forward, nn::Activation::relu, rng, 1.0, 1.0);
  m.h2r = nn::DenseNet::initialized(backward, nn::Activation::relu, rng, 1.0, 1.0);
  m.human = Standardizer::identity(human_dim);
  m.robot = Standardizer::identity(robot_dim);
  return m;
}

Vector r2h_predict(const MapperPair& mapper, const Vector& robot_pose) {
  if (robot_pose.size() != mapper.robot_dim())
    throw InvalidArgument("robot pose has " + std::to_string(robot_pose.size()) + " values, expected " +
                          std::to_string(mapper.robot_dim()));
  return mapper.human.invert(mapper.r2h.forward(mapper.robot.apply(robot_pose)));
}

Vector h2r_predict(const MapperPair& mapper, const Vector& human_pose) {
  if (human_pose.size() != mapper.human_dim())
    throw InvalidArgument("human pose has " + std::to_string(human_pose.size()) + " values, expected " +
                          std::to_string(mapper.human_dim()));
  return mapper.robot.invert(mapper.h2r.forward(mapper.human.apply(human_pose)));
}

Vector cycle_predict(const MapperPair& mapper, const Vector& robot_pose) {
  if (robot_pose.size() != mapper.robot_dim()) throw InvalidArgument("robot pose dimension mismatch");
  return mapper.robot.invert(mapper.h2r.forward(mapper.r2h.forward(mapper.robot.apply(robot_pose))));
}

namespace {

void check_batch(const MapperPair& mapper, const MapperBatch& batch) {
  if (batch.human.rows() == 0) throw InvalidArgument("mapper batch is empty");
  if (batch.human.rows() != batch.robot.rows()) throw InvalidArgument("mapper batch halves have different lengths");
  if (batch.human.cols() != mapper.human_dim() || batch.robot.cols() != mapper.robot_dim())
    throw InvalidArgument("mapper batch pose dimensions do not match the mappers");
}

}  // namespace

ReconstructionErrors reconstruction_errors(const MapperPair& mapper, const MapperBatch& batch) {
  check_batch(mapper, batch);
  const Matrix x = mapper.robot.apply_rows(batch.robot);
  const Matrix y = mapper.human.apply_rows(batch.human);
  const Matrix h = mapper.r2h.forward_batch(x);
  const Matrix c = mapper.h2r.forward_batch(h);
  return {(y - h).rowwise().squaredNorm(), (x - c).rowwise().squaredNorm()};
}

CycleLoss cycle_loss(const MapperPair& mapper, const MapperBatch& batch, double cycle_weight) {
  const ReconstructionErrors e = reconstruction_errors(mapper, batch);
  CycleLoss l;
  l.r2h = e.r2h.mean();
  l.cycle = e.cycle.mean();
  l.total = l.r2h + cycle_weight * l.cycle;
  return l;
}

CycleLossGradients cycle_loss_gradients(const MapperPair& mapper, const MapperBatch& batch, double cycle_weight) {
  check_batch(mapper, batch);
  const double n = static_cast<double>(batch.size());
  const Matrix x = mapper.robot.apply_rows(batch.robot);
  const Matrix y = mapper.human.apply_rows(batch.human);
  nn::Tape forward_tape;
  nn::Tape backward_tape;
  const Matrix h = mapper.r2h.forward_batch(x, forward_tape);
  const Matrix c = mapper.h2r.forward_batch(h, backward_tape);

  CycleLossGradients g;
  g.loss.r2h = (y - h).rowwise().squaredNorm().mean();
  g.loss.cycle = (x - c).rowwise().squaredNorm().mean();
  g.loss.total = g.loss.r2h + cycle_weight * g.loss.cycle;

  const Matrix d_c = (2.0 * cycle_weight / n) * (c - x);
  Matrix d_h = mapper.h2r.backward_batch(backward_tape, d_c, g.h2r);
  d_h += (2.0 / n) * (h - y);
  mapper.r2h.backward_batch(forward_tape, d_h, g.r2h);
  return g;
}

MapperOptimizer MapperOptimizer::create(const MapperPair& mapper, double learning_rate) {
  return {nn::AdamState(mapper.r2h.num_parameters(), learning_rate),
          nn::AdamState(mapper.h2r.num_parameters(), learning_rate)};
}

MapperUpdateResult update_mappers(MapperPair& mapper, MapperOptimizer& optimizer, const MapperBatch& data,
                                  const MapperUpdateConfig& cfg, Rng& rng) {
  check_batch(mapper, data);
  if (cfg.epochs < 0 || cfg.minibatch <= 0) throw InvalidArgument("mapper update needs epochs >= 0 and minibatch > 0");
  MapperUpdateResult result;
  result.before = cycle_loss(mapper, data, cfg.cycle_weight);
  if (!std::isfinite(result.before.total)) {
    result.aborted = true;
    return result;
  }

  const Eigen::Index n = data.size();
  const Eigen::Index mb = std::min<Eigen::Index>(cfg.minibatch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(i + 1)))]);
    // Trailing samples that do not fill a minibatch wait for the next shuffle.
    for (Eigen::Index start = 0; start + mb <= n; start += mb) {
      MapperBatch mini{Matrix(mb, data.human.cols()), Matrix(mb, data.robot.cols())};
      for (Eigen::Index k = 0; k < mb; ++k) {
        mini.human.row(k) = data.human.row(order[start + k]);
        mini.robot.row(k) = data.robot.row(order[start + k]);
      }
      const CycleLossGradients g = cycle_loss_gradients(mapper, mini, cfg.cycle_weight);
      if (!std::isfinite(g.loss.total)) {
        result.aborted = true;
        return result;
      }
      const bool ok_r2h = nn::adam_step(mapper.r2h.parameters(), g.r2h, optimizer.r2h);
      const bool ok_h2r = nn::adam_step(mapper.h2r.parameters(), g.h2r, optimizer.h2r);
      result.skipped_steps += static_cast<int>(!ok_r2h) + static_cast<int>(!ok_h2r);
    }
    const CycleLoss after = cycle_loss(mapper, data, cfg.cycle_weight);
    result.per_epoch.push_back(after);
    if (!std::isfinite(after.total)) {
      result.aborted = true;
      return result;
    }
  }
  return result;
}

double correspondence_reward(const MapperPair& mapper, const Vector& human_pose, const Vector& robot_pose) {
  MapperBatch b{human_pose.transpose(), robot_pose.transpose()};
  const ReconstructionErrors e = reconstruction_errors(mapper, b);
  return correspondence_reward_from_errors(e.r2h[0], e.cycle[0]);
}

double r2h_only_reward(const MapperPair& mapper, const Vector& human_pose, const Vector& robot_pose) {
  MapperBatch b{human_pose.transpose(), robot_pose.transpose()};
  return std::exp(-reconstruction_errors(mapper, b).r2h[0]);
}

}  // namespace gaitbridge::correspond
