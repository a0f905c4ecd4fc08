#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "dissip/mlp.hpp"

using dissip::Adam;
using dissip::GradTape;
using dissip::Mlp;
using dissip::Rng;

namespace {

// scalar loss L = c . forward(x); returns dL/dp for one parameter by central
// finite differences
double fd_param(Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& c,
                double* param, double step) {
  const double saved = *param;
  *param = saved + step;
  const double up = c.dot(net.forward(x));
  *param = saved - step;
  const double down = c.dot(net.forward(x));
  *param = saved;
  return (up - down) / (2.0 * step);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("forward matches a hand-computed two-layer network") {
  Mlp net;
  net.layers.resize(2);
  net.layers[0].W.resize(2, 2);
  net.layers[0].W << 1.0, -1.0, 0.5, 2.0;
  net.layers[0].b = Eigen::Vector2d(0.25, -0.5);
  net.layers[1].W.resize(1, 2);
  net.layers[1].W << 2.0, 3.0;
  net.layers[1].b = Eigen::VectorXd::Constant(1, 0.125);

  // x = (1, 2): pre = (1-2+0.25, 0.5+4-0.5) = (-0.75, 4.0), relu = (0, 4)
  // out = 2*0 + 3*4 + 0.125 = 12.125
  Eigen::Vector2d x(1.0, 2.0);
  CHECK(net.forward(x)(0) == doctest::Approx(12.125).epsilon(1e-15));
}

TEST_CASE("backprop matches central finite differences on random nets") {
  // acceptance-level property: 100 random nets, relative error <= 1e-5
  Rng rng(42);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int in = 1 + static_cast<int>(rng.integer(4));
    const int hidden = 1 + static_cast<int>(rng.integer(6));
    const int out = 1 + static_cast<int>(rng.integer(3));
    Mlp net({in, hidden, out}, rng);

    Eigen::VectorXd x(in);
    for (int i = 0; i < in; ++i) x(i) = rng.uniform(-2.0, 2.0);
    Eigen::VectorXd c(out);
    for (int i = 0; i < out; ++i) c(i) = rng.uniform(-1.0, 1.0);

    GradTape tape = net.backward(x, c);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto& W = net.layers[l].W;
      auto& b = net.layers[l].b;
      for (Eigen::Index i = 0; i < W.size(); ++i) {
        const double fd = fd_param(net, x, c, W.data() + i, 1e-5);
        CHECK(rel_err(tape.g[l].W(i), fd) <= 1e-5);
        ++checked;
      }
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double fd = fd_param(net, x, c, b.data() + i, 1e-5);
        CHECK(rel_err(tape.g[l].b(i), fd) <= 1e-5);
        ++checked;
      }
    }

    // input gradient against finite differences on x
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += 1e-5;
      xm(i) -= 1e-5;
      const double fd = (c.dot(net.forward(xp)) - c.dot(net.forward(xm))) / 2e-5;
      CHECK(rel_err(tape.dx(i), fd) <= 1e-5);
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("backward_accum sums gradients of independent calls") {
  Rng rng(3);
  Mlp net({3, 8, 2}, rng);
  Eigen::Vector3d x1(0.3, -0.7, 1.1), x2(-1.0, 0.2, 0.5);
  Eigen::Vector2d c1(1.0, -0.5), c2(0.25, 2.0);

  GradTape sum = net.zero_tape();
  net.backward_accum(x1, c1, sum);
  net.backward_accum(x2, c2, sum);

  GradTape a = net.backward(x1, c1);
  GradTape b = net.backward(x2, c2);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK((sum.g[l].W - a.g[l].W - b.g[l].W).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((sum.g[l].b - a.g[l].b - b.g[l].b).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("output clamp saturates values and zeroes saturated gradients") {
  Rng rng(9);
  Mlp net({2, 4, 1}, rng);
  // force a huge positive output
  net.layers[1].b(0) = 100.0;
  net.set_output_clamp(Eigen::VectorXd::Constant(1, -1.0),
                       Eigen::VectorXd::Constant(1, 1.0));
  Eigen::Vector2d x(0.5, -0.5);
  CHECK(net.forward(x)(0) == 1.0);
  GradTape tape = net.backward(x, Eigen::VectorXd::Constant(1, 1.0));
  for (const auto& layer : tape.g) {
    CHECK(layer.W.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.b.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("save/load round-trip is bit-exact") {
  Rng rng(77);
  Mlp net({4, 16, 16, 2}, rng);
  net.set_output_clamp(Eigen::Vector2d(-3.0, -4.0), Eigen::Vector2d(3.0, 4.0));

  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  net.save(buf);
  Mlp back = Mlp::load(buf);

  CHECK(back.param_hash() == net.param_hash());
  CHECK(back.has_clamp == net.has_clamp);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK((back.layers[l].W.array() == net.layers[l].W.array()).all());
    CHECK((back.layers[l].b.array() == net.layers[l].b.array()).all());
  }
  Eigen::Vector4d x(0.1, 0.2, 0.3, 0.4);
  CHECK((back.forward(x).array() == net.forward(x).array()).all());
}

TEST_CASE("load rejects corrupted streams") {
  Rng rng(5);
  Mlp net({2, 4, 1}, rng);
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  net.save(buf);
  std::string bytes = buf.str();
  bytes[0] ^= 0xff;  // clobber the magic
  std::istringstream bad(bytes, std::ios::binary);
  CHECK_THROWS_AS(Mlp::load(bad), dissip::CheckpointError);
}

TEST_CASE("identical seeds build identical networks") {
  Rng a(123), b(123);
  Mlp na({3, 8, 2}, a), nb({3, 8, 2}, b);
  CHECK(na.param_hash() == nb.param_hash());
  Rng c(124);
  Mlp nc({3, 8, 2}, c);
  CHECK(nc.param_hash() != na.param_hash());
}

TEST_CASE("sgd and adam move parameters against the gradient") {
  Rng rng(11);
  Mlp net({1, 4, 1}, rng);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
  Eigen::VectorXd target = Eigen::VectorXd::Constant(1, 2.0);

  auto loss = [&]() {
    const double d = net.forward(x)(0) - target(0);
    return 0.5 * d * d;
  };

  const double before = loss();
  for (int k = 0; k < 200; ++k) {
    const double d = net.forward(x)(0) - target(0);
    GradTape tape = net.backward(x, Eigen::VectorXd::Constant(1, d));
    dissip::sgd_step(net, tape, 1e-2);
  }
  const double mid = loss();
  CHECK(mid < before);

  Adam adam(net, 1e-2);
  for (int k = 0; k < 200; ++k) {
    const double d = net.forward(x)(0) - target(0);
    GradTape tape = net.backward(x, Eigen::VectorXd::Constant(1, d));
    adam.step(net, tape);
  }
  CHECK(loss() < std::max(1e-6, mid));
}

TEST_CASE("non-finite gradients are rejected by the optimizers") {
  Rng rng(13);
  Mlp net({2, 4, 1}, rng);
  GradTape tape = net.zero_tape();
  tape.g[0].W(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(tape.finite());
  Adam adam(net, 1e-3);
  CHECK_THROWS_AS(adam.step(net, tape), dissip::TrainingError);
}
