#include <cmath>

#include "dissip/environment.hpp"

namespace dissip {

namespace {

/**
 * Gliding descent of an unpowered vehicle controlled by angle of attack.
 * Raw state x = (h, gamma, v): altitude, flight-path angle, speed. The
 * constrained output is y = -h (altitude floor at y_max = 0), giving
 * transformed coordinates s = (-h, -v sin gamma, gamma): negative altitude,
 * descent rate, flight-path angle. The angle of attack only reaches hddot
 * through the lift and drag coefficients, so the relative degree is 2.
 *
 * The transformation is singular at gamma = 0; the operating domain keeps
 * gamma strictly negative (descending flight).
 */
class ShuttleEnv final : public Environment {
 public:
  explicit ShuttleEnv(const ShuttleParams& params) : p_(params) {}

  std::string id() const override { return "shuttle"; }
  int state_dim() const override { return 3; }
  int control_dim() const override { return 1; }
  int relative_degree() const override { return 2; }

  Eigen::VectorXd f(const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) const override {
    const double h = x(0);
    const double gamma = x(1);
    const double v = x(2);
    if (!(v > 0.0))
      throw DomainError("shuttle: speed must be positive (invalid state)");
    const double alpha = u(0);
    const double sin_a = std::sin(alpha);
    const double cos_a = std::cos(alpha);
    const double lift_coef = p_.C_L0 * sin_a * sin_a * cos_a;
    const double drag_coef = p_.C_D0 + p_.K * lift_coef * lift_coef;
    const double rho = p_.rho0 * std::exp(-h / p_.H);
    const double sin_g = std::sin(gamma);
    const double cos_g = std::cos(gamma);

    Eigen::VectorXd dx(3);
    dx(0) = v * sin_g;
    dx(1) = rho * v * lift_coef * p_.S_over_m / 2.0 - p_.g * cos_g / v;
    dx(2) = -rho * v * v * drag_coef * p_.S_over_m / 2.0 - p_.g * sin_g;
    return dx;
  }

  Eigen::RowVectorXd output_row() const override {
    Eigen::RowVectorXd c(3);
    c << -1.0, 0.0, 0.0;
    return c;
  }

  Eigen::VectorXd to_s(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd s(3);
    s << -x(0), -x(2) * std::sin(x(1)), x(1);
    return s;
  }

  Eigen::VectorXd from_s(const Eigen::VectorXd& s) const override {
    const double sin_g = std::sin(s(2));
    if (sin_g == 0.0)
      throw DomainError(
          "shuttle: transformation is singular at gamma = 0");
    Eigen::VectorXd x(3);
    x << -s(0), s(2), -s(1) / sin_g;
    return x;
  }

  Eigen::VectorXd u_min() const override {
    return Eigen::VectorXd::Constant(1, p_.alpha_min);
  }
  Eigen::VectorXd u_max() const override {
    return Eigen::VectorXd::Constant(1, p_.alpha_max);
  }

  Eigen::VectorXd sample_initial(Rng& rng) const override {
    Eigen::VectorXd x(3);
    x(0) = p_.h0;
    x(1) = rng.uniform(p_.gamma0_min, p_.gamma0_max);
    x(2) = rng.uniform(p_.v0_min, p_.v0_max);
    return x;
  }

  bool terminal(const Eigen::VectorXd& x) const override {
    return x(0) <= 0.0;
  }

 private:
  ShuttleParams p_;
};

}  // namespace

std::unique_ptr<Environment> make_shuttle(const ShuttleParams& params) {
  return std::make_unique<ShuttleEnv>(params);
}

}  // namespace dissip
