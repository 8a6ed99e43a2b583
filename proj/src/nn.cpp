#include "gaitbridge/nn.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/error.hpp"

namespace gaitbridge::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw InvalidArgument("unknown activation '" + name + "'");
}

namespace {

void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::elu: z = z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); }); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::linear: break;
  }
}

// Multiplies `grad` in place by the activation derivative, written in terms of the
// activation output y.
void activation_backward(Matrix& grad, const Matrix& y, Activation a) {
  switch (a) {
    case Activation::relu:
      grad = grad.cwiseProduct(y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
      break;
    case Activation::elu:
      grad = grad.cwiseProduct(y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : v + 1.0; }));
      break;
    case Activation::tanh: grad = grad.cwiseProduct((1.0 - y.array().square()).matrix()); break;
    case Activation::linear: break;
  }
}

}  // namespace

DenseNet::DenseNet(std::vector<int> layer_sizes, Activation hidden)
    : sizes_(std::move(layer_sizes)), hidden_(hidden) {
  if (sizes_.size() < 2) throw InvalidArgument("a network needs at least an input and an output layer");
  for (int s : sizes_)
    if (s <= 0) throw InvalidArgument("layer sizes must be positive");
  Eigen::Index offset = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = Vector::Zero(offset);
}

DenseNet DenseNet::initialized(std::vector<int> layer_sizes, Activation hidden, Rng& rng,
                               double hidden_gain, double output_gain) {
  DenseNet net(std::move(layer_sizes), hidden);
  for (int l = 0; l < net.num_layers(); ++l) {
    const int rows = net.sizes_[l];
    const int cols = net.sizes_[l + 1];
    const int big = std::max(rows, cols);
    const int small = std::min(rows, cols);
    Matrix g(big, small);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(big, small);
    const Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (int j = 0; j < small; ++j)
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    const double gain = (l + 1 == net.num_layers()) ? output_gain : hidden_gain;
    if (rows >= cols)
      net.weight(l) = gain * q;
    else
      net.weight(l) = gain * q.transpose();
  }
  return net;
}

Eigen::Map<RowMatrix> DenseNet::weight(int layer) {
  return {params_.data() + weight_offset(layer), sizes_[layer], sizes_[layer + 1]};
}
Eigen::Map<const RowMatrix> DenseNet::weight(int layer) const {
  return {params_.data() + weight_offset(layer), sizes_[layer], sizes_[layer + 1]};
}
Eigen::Map<Vector> DenseNet::bias(int layer) { return {params_.data() + bias_offset(layer), sizes_[layer + 1]}; }
Eigen::Map<const Vector> DenseNet::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

void DenseNet::check_input(Eigen::Index cols) const {
  if (sizes_.empty()) throw InvalidArgument("network has no layers");
  if (cols != sizes_.front())
    throw InvalidArgument("network input has " + std::to_string(cols) + " values, expected " +
                          std::to_string(sizes_.front()));
}

Vector DenseNet::forward(const Vector& input) const {
  check_input(input.size());
  Matrix x = input.transpose();
  return forward_batch(x).row(0).transpose();
}

Matrix DenseNet::forward_batch(const Matrix& inputs) const {
  check_input(inputs.cols());
  Matrix a = inputs;
  for (int l = 0; l < num_layers(); ++l) {
    Matrix z = a * weight(l);
    z.rowwise() += bias(l).transpose();
    activate(z, l + 1 == num_layers() ? Activation::linear : hidden_);
    a = std::move(z);
  }
  return a;
}

Matrix DenseNet::forward_batch(const Matrix& inputs, Tape& tape) const {
  check_input(inputs.cols());
  tape.inputs.assign(num_layers(), Matrix());
  tape.outputs.assign(num_layers(), Matrix());
  tape.inputs[0] = inputs;
  for (int l = 0; l < num_layers(); ++l) {
    Matrix z = tape.inputs[l] * weight(l);
    z.rowwise() += bias(l).transpose();
    activate(z, l + 1 == num_layers() ? Activation::linear : hidden_);
    if (l + 1 < num_layers()) tape.inputs[l + 1] = z;
    tape.outputs[l] = std::move(z);
  }
  return tape.outputs.back();
}

Matrix DenseNet::backward_batch(const Tape& tape, const Matrix& upstream, Vector& param_grad) const {
  if (static_cast<int>(tape.outputs.size()) != num_layers())
    throw InvalidArgument("tape does not belong to this network");
  const Matrix& out = tape.outputs.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw InvalidArgument("upstream gradient shape does not match network output");
  if (param_grad.size() == 0) param_grad = Vector::Zero(num_parameters());
  if (param_grad.size() != num_parameters()) throw InvalidArgument("parameter gradient has the wrong size");

  Matrix grad = upstream;
  for (int l = num_layers() - 1; l >= 0; --l) {
    activation_backward(grad, tape.outputs[l], l + 1 == num_layers() ? Activation::linear : hidden_);
    Eigen::Map<RowMatrix> gw(param_grad.data() + weight_offset(l), sizes_[l], sizes_[l + 1]);
    Eigen::Map<Vector> gb(param_grad.data() + bias_offset(l), sizes_[l + 1]);
    gw.noalias() += tape.inputs[l].transpose() * grad;
    gb.noalias() += grad.colwise().sum().transpose();
    grad = grad * weight(l).transpose();
  }
  return grad;
}

Gradients DenseNet::backward(const Vector& input, const Vector& upstream) const {
  check_input(input.size());
  if (upstream.size() != output_size())
    throw InvalidArgument("upstream gradient has " + std::to_string(upstream.size()) + " values, expected " +
                          std::to_string(output_size()));
  Tape tape;
  forward_batch(Matrix(input.transpose()), tape);
  Gradients g;
  g.input = backward_batch(tape, Matrix(upstream.transpose()), g.params).row(0).transpose();
  return g;
}

void DenseNet::write(BinaryWriter& out) const {
  out.u64(sizes_.size());
  for (int s : sizes_) out.u64(static_cast<std::uint64_t>(s));
  out.u8(static_cast<std::uint8_t>(hidden_));
  out.vec(params_);
}

DenseNet DenseNet::read(BinaryReader& in) {
  const auto n = in.u64("layer count");
  if (n < 2 || n > 64) throw ParseError("implausible layer count " + std::to_string(n));
  std::vector<int> sizes;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto s = in.u64("layer size");
    if (s == 0 || s > (1u << 20)) throw ParseError("implausible layer size " + std::to_string(s));
    sizes.push_back(static_cast<int>(s));
  }
  const auto act = in.u8("activation");
  if (act > static_cast<std::uint8_t>(Activation::linear)) throw ParseError("unknown activation code");
  DenseNet net(std::move(sizes), static_cast<Activation>(act));
  Vector p = in.vec("network parameters");
  if (p.size() != net.num_parameters()) throw ParseError("network parameter count does not match layer sizes");
  net.params_ = std::move(p);
  return net;
}

void AdamState::write(BinaryWriter& out) const {
  out.vec(first_moment);
  out.vec(second_moment);
  out.i64(step_count);
  out.f64(learning_rate);
  out.f64(beta1);
  out.f64(beta2);
  out.f64(epsilon);
}

AdamState AdamState::read(BinaryReader& in) {
  AdamState s;
  s.first_moment = in.vec("adam first moment");
  s.second_moment = in.vec("adam second moment");
  s.step_count = in.i64("adam step count");
  s.learning_rate = in.f64("adam learning rate");
  s.beta1 = in.f64("adam beta1");
  s.beta2 = in.f64("adam beta2");
  s.epsilon = in.f64("adam epsilon");
  if (s.first_moment.size() != s.second_moment.size() || s.step_count < 0)
    throw ParseError("inconsistent adam state");
  return s;
}

bool adam_step(Vector& params, const Vector& grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw InvalidArgument("adam_step: parameter, gradient and moment sizes differ");
  if (!grads.allFinite()) return false;
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
  return true;
}

double clip_grad_norm(std::vector<Vector*> grads, double max_norm) {
  double sq = 0.0;
  for (const Vector* g : grads) sq += g->squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / (norm + 1e-12);
    for (Vector* g : grads) *g *= scale;
  }
  return norm;
}

double gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& sample) {
  if (mean.size() != log_std.size() || mean.size() != sample.size())
    throw InvalidArgument("gaussian_log_prob: mean, log_std and sample lengths differ");
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (sample[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - half_log_two_pi;
  }
  return lp;
}

Vector sample_gaussian(const Vector& mean, const Vector& log_std, Rng& rng) {
  if (mean.size() != log_std.size()) throw InvalidArgument("sample_gaussian: mean and log_std lengths differ");
  Vector out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double ls = std::clamp(log_std[i], kLogStdMin, kLogStdMax);
    out[i] = mean[i] + std::exp(ls) * rng.normal();
  }
  return out;
}

double gaussian_entropy(const Vector& log_std) {
  const double c = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
  return log_std.sum() + c * static_cast<double>(log_std.size());
}

}  // namespace gaitbridge::nn
