#pragma once

#include <Eigen/Core>

namespace gaitbridge {
class BinaryWriter;
class BinaryReader;

/// Running per-dimension mean and variance, merged batch by batch (Chan et al. parallel update).
struct RunningMeanStd {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  double count = 1e-4;

  RunningMeanStd() = default;
  explicit RunningMeanStd(Eigen::Index dim) : mean(Eigen::VectorXd::Zero(dim)), var(Eigen::VectorXd::Ones(dim)) {}

  /// Rows of `batch` are samples.
  void update(const Eigen::MatrixXd& batch);

  void write(BinaryWriter& out) const;
  static RunningMeanStd read(BinaryReader& in);
};

/// Frozen affine map z = (x - mean) .* scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(Eigen::Index dim);
  /// scale_i = 1 / (max(std_i, std_floor) * sqrt(dim)), so a standardized vector has unit
  /// expected squared norm rather than unit variance per entry.
  static Standardizer from_stats(const RunningMeanStd& stats, double std_floor);
  /// scale_i = 1 / max(std_i, std_floor), clipped downstream by the caller if needed.
  static Standardizer per_dimension(const RunningMeanStd& stats, double std_floor);

  Eigen::Index dim() const { return mean.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const;

  void write(BinaryWriter& out) const;
  static Standardizer read(BinaryReader& in);
};

}  // namespace gaitbridge
