#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gaitbridge/rng.hpp"

namespace gaitbridge {
class BinaryWriter;
class BinaryReader;
}  // namespace gaitbridge

namespace gaitbridge::nn {

using Vector = Eigen::VectorXd;
/// Batches are laid out one sample per row.
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Same size and identical bit patterns.
template <class A, class B>
bool bit_equal(const Eigen::PlainObjectBase<A>& a, const Eigen::PlainObjectBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

enum class Activation : std::uint8_t { relu, elu, tanh, linear };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Intermediate values of a batched forward pass, consumed by backward().
struct Tape {
  std::vector<Matrix> inputs;  // input to each affine layer
  std::vector<Matrix> outputs;  // post-activation output of each layer
};

struct Gradients {
  Vector params;  // same layout as DenseNet::parameters()
  Vector input;
};

/// Fully connected network: affine layers with a shared hidden activation and a linear output.
///
/// All parameters live in one flat vector. Layer l occupies a fan_in x fan_out weight block
/// stored row-major, followed by its fan_out biases. Gradients use the same layout so an
/// optimizer can treat the network as a single parameter vector.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::vector<int> layer_sizes, Activation hidden);

  /// Orthogonal initialization scaled by `hidden_gain` / `output_gain`, zero biases.
  static DenseNet initialized(std::vector<int> layer_sizes, Activation hidden, Rng& rng,
                              double hidden_gain, double output_gain);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index num_parameters() const { return params_.size(); }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  Eigen::Map<RowMatrix> weight(int layer);
  Eigen::Map<const RowMatrix> weight(int layer) const;
  Eigen::Map<Vector> bias(int layer);
  Eigen::Map<const Vector> bias(int layer) const;

  Vector forward(const Vector& input) const;
  Matrix forward_batch(const Matrix& inputs) const;
  Matrix forward_batch(const Matrix& inputs, Tape& tape) const;

  /// Gradient of sum(upstream .* output) for a taped batch. Parameter gradients are
  /// accumulated into `param_grad` (resized and zeroed if empty); returns the input gradient.
  Matrix backward_batch(const Tape& tape, const Matrix& upstream, Vector& param_grad) const;

  Gradients backward(const Vector& input, const Vector& upstream) const;

  void write(BinaryWriter& out) const;
  static DenseNet read(BinaryReader& in);

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    return a.sizes_ == b.sizes_ && a.hidden_ == b.hidden_ && bit_equal(a.params_, b.params_);
  }

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1];
  }
  void check_input(Eigen::Index cols) const;

  std::vector<int> sizes_;
  Activation hidden_ = Activation::relu;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

/// Adam optimizer state for one flat parameter vector.
struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index size, double lr)
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)), learning_rate(lr) {}

  void write(BinaryWriter& out) const;
  static AdamState read(BinaryReader& in);

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return bit_equal(a.first_moment, b.first_moment) && bit_equal(a.second_moment, b.second_moment) &&
           a.step_count == b.step_count && a.learning_rate == b.learning_rate && a.beta1 == b.beta1 &&
           a.beta2 == b.beta2 && a.epsilon == b.epsilon;
  }
};

/// Bias-corrected Adam update in place. A gradient with any non-finite entry leaves
/// parameters and state untouched and returns false.
bool adam_step(Vector& params, const Vector& grads, AdamState& state);

/// Scales `grads` down so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
double clip_grad_norm(std::vector<Vector*> grads, double max_norm);

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 1.0;

/// State-independent diagonal Gaussian head over a network's mean output.
struct GaussianHead {
  Vector log_std;

  void clamp() { log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }
  friend bool operator==(const GaussianHead& a, const GaussianHead& b) { return bit_equal(a.log_std, b.log_std); }
};

/// Sum over dimensions of the diagonal-Gaussian log density.
double gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& sample);

/// mean + exp(log_std) * xi with xi ~ N(0, I); log_std is clamped to [-10, 1] first.
Vector sample_gaussian(const Vector& mean, const Vector& log_std, Rng& rng);

/// Entropy of the diagonal Gaussian.
double gaussian_entropy(const Vector& log_std);

}  // namespace gaitbridge::nn
