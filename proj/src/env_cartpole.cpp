#include <cmath>

#include "dissip/environment.hpp"

namespace dissip {

namespace {

/**
 * Frictionless cart-pole. Raw state x = (p, theta, pdot, thetadot) with
 * force u on the cart; the constrained output is the pole angle theta, so
 * the transformed coordinates are s = (theta, thetadot, p, pdot) and the
 * relative degree is 2 (the force reaches thetadot's derivative directly).
 */
class CartPoleEnv final : public Environment {
 public:
  explicit CartPoleEnv(const CartPoleParams& params) : p_(params) {}

  std::string id() const override { return "cartpole"; }
  int state_dim() const override { return 4; }
  int control_dim() const override { return 1; }
  int relative_degree() const override { return 2; }

  Eigen::VectorXd f(const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) const override {
    const double theta = x(1);
    const double theta_dot = x(3);
    const double force = u(0);
    const double sin_th = std::sin(theta);
    const double cos_th = std::cos(theta);
    const double total_mass = p_.cart_mass + p_.pole_mass;
    const double pole_ml = p_.pole_mass * p_.half_length;

    const double temp =
        (force + pole_ml * theta_dot * theta_dot * sin_th) / total_mass;
    const double theta_acc =
        (p_.gravity * sin_th - cos_th * temp) /
        (p_.half_length *
         (4.0 / 3.0 - p_.pole_mass * cos_th * cos_th / total_mass));
    const double p_acc = temp - pole_ml * theta_acc * cos_th / total_mass;

    Eigen::VectorXd dx(4);
    dx << x(2), theta_dot, p_acc, theta_acc;
    return dx;
  }

  Eigen::RowVectorXd output_row() const override {
    Eigen::RowVectorXd c(4);
    c << 0.0, 1.0, 0.0, 0.0;
    return c;
  }

  Eigen::VectorXd to_s(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd s(4);
    s << x(1), x(3), x(0), x(2);
    return s;
  }

  Eigen::VectorXd from_s(const Eigen::VectorXd& s) const override {
    Eigen::VectorXd x(4);
    x << s(2), s(0), s(3), s(1);
    return x;
  }

  Eigen::VectorXd u_min() const override {
    return Eigen::VectorXd::Constant(1, -p_.force_max);
  }
  Eigen::VectorXd u_max() const override {
    return Eigen::VectorXd::Constant(1, p_.force_max);
  }

  Eigen::VectorXd sample_initial(Rng& rng) const override {
    return uniform_box(rng, p_.init_lo, p_.init_hi);
  }

  // training episodes end once the pole leaves the +/- 0.2 rad band
  bool terminal(const Eigen::VectorXd& x) const override {
    return std::abs(x(1)) > 0.2;
  }

 private:
  CartPoleParams p_;
};

}  // namespace

std::unique_ptr<Environment> make_cartpole(const CartPoleParams& params) {
  return std::make_unique<CartPoleEnv>(params);
}

}  // namespace dissip
