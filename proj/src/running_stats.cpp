#include "gaitbridge/running_stats.hpp"

#include <cmath>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/error.hpp"

namespace gaitbridge {

void RunningMeanStd::update(const Eigen::MatrixXd& batch) {
  if (batch.rows() == 0) return;
  if (batch.cols() != mean.size()) throw InvalidArgument("running statistics dimension mismatch");
  const double n = static_cast<double>(batch.rows());
  const Eigen::VectorXd batch_mean = batch.colwise().mean().transpose();
  const Eigen::VectorXd batch_var = (batch.rowwise() - batch_mean.transpose()).array().square().colwise().mean().transpose();
  const Eigen::VectorXd delta = batch_mean - mean;
  const double total = count + n;
  mean += delta * (n / total);
  var = (var * count + batch_var * n + delta.cwiseAbs2() * (count * n / total)) / total;
  count = total;
}

void RunningMeanStd::write(BinaryWriter& out) const {
  out.vec(mean);
  out.vec(var);
  out.f64(count);
}

RunningMeanStd RunningMeanStd::read(BinaryReader& in) {
  RunningMeanStd r;
  r.mean = in.vec("running mean");
  r.var = in.vec("running variance");
  r.count = in.f64("running count");
  if (r.mean.size() != r.var.size()) throw ParseError("running statistics have inconsistent sizes");
  return r;
}

Standardizer Standardizer::identity(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Standardizer Standardizer::from_stats(const RunningMeanStd& stats, double std_floor) {
  const double root_dim = std::sqrt(static_cast<double>(stats.mean.size()));
  Standardizer s;
  s.mean = stats.mean;
  s.scale = stats.var.unaryExpr([&](double v) { return 1.0 / (std::max(std::sqrt(v), std_floor) * root_dim); });
  return s;
}

Standardizer Standardizer::per_dimension(const RunningMeanStd& stats, double std_floor) {
  Standardizer s;
  s.mean = stats.mean;
  s.scale = stats.var.unaryExpr([&](double v) { return 1.0 / std::max(std::sqrt(v), std_floor); });
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw InvalidArgument("standardizer dimension mismatch");
  return (x - mean).cwiseProduct(scale);
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw InvalidArgument("standardizer dimension mismatch");
  return ((x.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array()).matrix();
}

Eigen::VectorXd Standardizer::invert(const Eigen::VectorXd& z) const {
  if (z.size() != mean.size()) throw InvalidArgument("standardizer dimension mismatch");
  return z.cwiseQuotient(scale) + mean;
}

void Standardizer::write(BinaryWriter& out) const {
  out.vec(mean);
  out.vec(scale);
}

Standardizer Standardizer::read(BinaryReader& in) {
  Standardizer s;
  s.mean = in.vec("standardizer mean");
  s.scale = in.vec("standardizer scale");
  if (s.mean.size() != s.scale.size()) throw ParseError("standardizer has inconsistent sizes");
  return s;
}

}  // namespace gaitbridge
