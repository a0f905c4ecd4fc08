#include "dissip/environment.hpp"

namespace dissip {

namespace {

/**
 * Double integrator yddot = u with x = s = (y, ydot). The transformation
 * is the identity and the relative degree is exactly 2, which makes the
 * numeric derivative evaluator's value equal to the applied control; the
 * test system for everything downstream of the buffer geometry.
 */
class DoubleIntegratorEnv final : public Environment {
 public:
  explicit DoubleIntegratorEnv(const DoubleIntegratorParams& params)
      : p_(params) {}

  std::string id() const override { return "double_integrator"; }
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }
  int relative_degree() const override { return 2; }

  Eigen::VectorXd f(const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) const override {
    Eigen::VectorXd dx(2);
    dx << x(1), u(0);
    return dx;
  }

  Eigen::RowVectorXd output_row() const override {
    Eigen::RowVectorXd c(2);
    c << 1.0, 0.0;
    return c;
  }

  Eigen::VectorXd to_s(const Eigen::VectorXd& x) const override { return x; }
  Eigen::VectorXd from_s(const Eigen::VectorXd& s) const override { return s; }

  Eigen::VectorXd u_min() const override {
    return Eigen::VectorXd::Constant(1, -p_.u_max);
  }
  Eigen::VectorXd u_max() const override {
    return Eigen::VectorXd::Constant(1, p_.u_max);
  }

  Eigen::VectorXd sample_initial(Rng& rng) const override {
    return uniform_box(rng, p_.init_lo, p_.init_hi);
  }

 private:
  DoubleIntegratorParams p_;
};

}  // namespace

std::unique_ptr<Environment> make_double_integrator(
    const DoubleIntegratorParams& params) {
  return std::make_unique<DoubleIntegratorEnv>(params);
}

}  // namespace dissip
