#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/error.hpp"
#include "gaitbridge/nn.hpp"
#include "support.hpp"

using namespace gaitbridge;
using nn::Activation;
using nn::DenseNet;
using nn::Vector;

TEST_CASE("zero weights give the output bias") {
  DenseNet net({3, 4, 2}, Activation::tanh);
  net.bias(1) << 0.25, -1.5;
  const Vector y = net.forward(Vector::Constant(3, 7.0));
  CHECK(y[0] == 0.25);
  CHECK(y[1] == -1.5);
}

TEST_CASE("scalar affine net") {
  DenseNet net({1, 1}, Activation::relu);
  net.weight(0)(0, 0) = 2.0;
  CHECK(net.forward(Vector::Constant(1, 3.0))[0] == 6.0);

  const auto g = net.backward(Vector::Constant(1, 3.0), Vector::Constant(1, 1.0));
  CHECK(g.params[0] == 3.0);  // dL/dw
  CHECK(g.params[1] == 1.0);  // dL/db
  CHECK(g.input[0] == 2.0);
}

TEST_CASE("forward agrees with a scalar-loop evaluation") {
  Rng rng(11);
  for (Activation a : {Activation::relu, Activation::elu, Activation::tanh}) {
    const DenseNet net = DenseNet::initialized({5, 7, 6, 3}, a, rng, 1.0, 1.0);
    for (int k = 0; k < 10; ++k) {
      const Vector x = testing::random_vector(5, rng);
      const Vector y = net.forward(x);
      const Vector ref = testing::reference_forward(net, x);
      CHECK((y - ref).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(nn::bit_equal(y, net.forward(x)));
    }
  }
}

TEST_CASE("batched forward matches per-sample forward") {
  Rng rng(3);
  const DenseNet net = DenseNet::initialized({4, 8, 2}, Activation::elu, rng, 1.0, 1.0);
  const nn::Matrix xs = testing::random_matrix(6, 4, rng);
  const nn::Matrix ys = net.forward_batch(xs);
  for (int i = 0; i < 6; ++i) CHECK((ys.row(i).transpose() - net.forward(xs.row(i).transpose())).norm() < 1e-12);
}

TEST_CASE("dimension mismatches are rejected") {
  DenseNet net({3, 2}, Activation::relu);
  CHECK_THROWS_AS(net.forward(Vector::Zero(4)), InvalidArgument);
  CHECK_THROWS_AS(net.backward(Vector::Zero(3), Vector::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(DenseNet({3}, Activation::relu), InvalidArgument);
  CHECK_THROWS_AS(DenseNet({3, 0, 2}, Activation::relu), InvalidArgument);
}

TEST_CASE("dead relu layer blocks gradients upstream") {
  Rng rng(5);
  DenseNet net = DenseNet::initialized({3, 4, 4, 2}, Activation::relu, rng, 1.0, 1.0);
  net.bias(1).setConstant(-100.0);  // every second-layer pre-activation is negative
  const auto g = net.backward(Vector::Constant(3, 0.3), Vector::Ones(2));
  const Eigen::Index first_two = 3 * 4 + 4 + 4 * 4 + 4;
  CHECK(g.params.head(first_two).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.input.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(17);
  const std::vector<std::pair<std::vector<int>, Activation>> shapes{
      {{6, 16, 16, 3}, Activation::relu}, {{6, 16, 16, 3}, Activation::elu}, {{4, 9, 2}, Activation::tanh}};
  for (const auto& [sizes, a] : shapes) {
    for (int draw = 0; draw < 10; ++draw) {
      DenseNet net = DenseNet::initialized(sizes, a, rng, 1.0, 1.0);
      net.parameters() += testing::random_vector(net.num_parameters(), rng, 0.1);
      Vector x = testing::random_vector(sizes.front(), rng);
      while (a == Activation::relu && testing::min_abs_preactivation(net, x) < 1e-3)
        x = testing::random_vector(sizes.front(), rng);
      const Vector up = testing::random_vector(sizes.back(), rng);
      const auto all = testing::sample_indices(net.num_parameters(), 1 << 30, rng);
      CHECK(testing::check_net_gradients(net, x, up, all).max_rel < 1e-4);
    }
  }
}

TEST_CASE("serialization round-trip is bit exact") {
  Rng rng(23);
  const DenseNet net = DenseNet::initialized({5, 6, 2}, Activation::elu, rng, 1.0, 0.01);
  BinaryWriter w;
  net.write(w);
  BinaryReader r(w.bytes());
  const DenseNet back = DenseNet::read(r);
  CHECK(back == net);
  CHECK(r.at_end());

  std::string truncated = w.bytes();
  truncated.resize(truncated.size() - 3);
  BinaryReader bad(truncated);
  CHECK_THROWS_AS(DenseNet::read(bad), ParseError);
}

TEST_CASE("orthogonal init has orthonormal columns scaled by the gain") {
  Rng rng(2);
  const DenseNet net = DenseNet::initialized({16, 8, 4}, Activation::elu, rng, 1.0, 0.01);
  const nn::Matrix w0 = net.weight(0);
  CHECK((w0.transpose() * w0 - nn::Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);
  const nn::Matrix w1 = net.weight(1);
  CHECK((w1.transpose() * w1 - 1e-4 * nn::Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(net.bias(0).isZero());
}

TEST_CASE("adam with zero gradient only advances the step count") {
  Vector p = Vector::LinSpaced(4, -1.0, 1.0);
  const Vector before = p;
  nn::AdamState s(4, 0.1);
  CHECK(nn::adam_step(p, Vector::Zero(4), s));
  CHECK(nn::bit_equal(p, before));
  CHECK(s.first_moment.isZero());
  CHECK(s.second_moment.isZero());
  CHECK(s.step_count == 1);
}

TEST_CASE("first adam step moves by the learning rate against the gradient sign") {
  for (double g : {3.0, -0.02}) {
    Vector p = Vector::Constant(1, 0.5);
    nn::AdamState s(1, 0.01);
    nn::adam_step(p, Vector::Constant(1, g), s);
    CHECK(p[0] == doctest::Approx(0.5 - 0.01 * (g > 0 ? 1 : -1)).epsilon(1e-6));
  }
}

TEST_CASE("adam descends x^2") {
  Vector x = Vector::Constant(1, 1.0);
  nn::AdamState s(1, 0.1);
  std::vector<double> trace;
  for (int i = 0; i < 100; ++i) {
    nn::adam_step(x, 2.0 * x, s);
    trace.push_back(std::abs(x[0]));
  }
  // Burn-in: the first 8 steps travel at roughly the learning rate, strictly shrinking |x|.
  for (int i = 1; i < 8; ++i) CHECK(trace[i] < trace[i - 1]);
  CHECK(trace.back() < 0.1);
}

TEST_CASE("adam skips non-finite gradients") {
  Vector p = Vector::Ones(2);
  nn::AdamState s(2, 0.1);
  Vector g(2);
  g << 1.0, std::nan("");
  CHECK_FALSE(nn::adam_step(p, g, s));
  CHECK(s.step_count == 0);
  CHECK(p == Vector::Ones(2));
}

TEST_CASE("gradient norm clipping") {
  Vector a = Vector::Constant(1, 3.0);
  Vector b = Vector::Constant(1, 4.0);
  CHECK(nn::clip_grad_norm({&a, &b}, 1.0) == 5.0);
  CHECK(std::hypot(a[0], b[0]) == doctest::Approx(1.0));
  Vector c = Vector::Constant(2, 0.1);
  nn::clip_grad_norm({&c}, 1.0);
  CHECK(c[0] == 0.1);
}

TEST_CASE("gaussian log density") {
  CHECK(nn::gaussian_log_prob(Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)) ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(nn::gaussian_log_prob(Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)) ==
        doctest::Approx(-0.91894).epsilon(1e-5));

  Rng rng(8);
  const Vector mean = testing::random_vector(3, rng);
  const Vector ls = testing::random_vector(3, rng, 0.3);
  const Vector x = testing::random_vector(3, rng);
  const double joint = nn::gaussian_log_prob(mean, ls, x);
  CHECK(nn::gaussian_log_prob(mean.array() + 2.5, ls, x.array() + 2.5) == doctest::Approx(joint).epsilon(1e-12));
  double parts = 0.0;
  for (int i = 0; i < 3; ++i)
    parts += nn::gaussian_log_prob(mean.segment(i, 1), ls.segment(i, 1), x.segment(i, 1));
  CHECK(parts == doctest::Approx(joint).epsilon(1e-12));
  CHECK_THROWS_AS(nn::gaussian_log_prob(Vector::Zero(2), Vector::Zero(3), Vector::Zero(2)), InvalidArgument);
}

TEST_CASE("gaussian sampling") {
  Rng a(4);
  Rng b(4);
  const Vector mean = Vector::LinSpaced(3, -1.0, 1.0);
  CHECK(nn::bit_equal(nn::sample_gaussian(mean, Vector::Zero(3), a), nn::sample_gaussian(mean, Vector::Zero(3), b)));

  const Vector tiny = nn::sample_gaussian(mean, Vector::Constant(3, -1e6), a);
  CHECK((tiny - mean).cwiseAbs().maxCoeff() < 1e-4);

  Rng rng(99);
  const int n = 100000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = nn::sample_gaussian(Vector::Zero(1), Vector::Zero(1), rng)[0];
    sum += s;
    sq += s * s;
  }
  const double m = sum / n;
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(sq / n - m * m - 1.0) < 0.05);
}

TEST_CASE("gaussian head clamps log_std") {
  nn::GaussianHead h{Vector::Constant(2, 5.0)};
  h.log_std[1] = -50.0;
  h.clamp();
  CHECK(h.log_std[0] == nn::kLogStdMax);
  CHECK(h.log_std[1] == nn::kLogStdMin);
}

TEST_CASE("adam state round-trip") {
  nn::AdamState s(3, 0.02);
  Vector p = Vector::Ones(3);
  nn::adam_step(p, Vector::LinSpaced(3, 0.1, 0.3), s);
  BinaryWriter w;
  s.write(w);
  BinaryReader r(w.bytes());
  CHECK(nn::AdamState::read(r) == s);
}
