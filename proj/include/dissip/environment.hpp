#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dissip/common.hpp"

namespace dissip {

/** Deterministic state-feedback policy in transformed coordinates. */
using PolicyFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/**
 * Deterministic continuous-time control system exposed as a black box: the
 * dynamics can only be evaluated, never inspected. Alongside f the system
 * declares its output row C, the invertible transformation T between raw
 * state x and derivative coordinates s = (y, ydot, ..., y^(r-1), rest), the
 * control box, and the relative degree r (supplied from first principles).
 */
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual int state_dim() const = 0;    // n
  virtual int control_dim() const = 0;  // m
  virtual int relative_degree() const = 0;

  /** Dynamics evaluation xdot = f(x, u); pure and deterministic. */
  virtual Eigen::VectorXd f(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u) const = 0;

  /** Output row C with y = C x. */
  virtual Eigen::RowVectorXd output_row() const = 0;

  /** Transformation to derivative coordinates, s = T(x). */
  virtual Eigen::VectorXd to_s(const Eigen::VectorXd& x) const = 0;

  /** Inverse transformation, x = T^-1(s). */
  virtual Eigen::VectorXd from_s(const Eigen::VectorXd& s) const = 0;

  virtual Eigen::VectorXd u_min() const = 0;
  virtual Eigen::VectorXd u_max() const = 0;

  /** Seeded draw from the initial-state distribution (x coordinates). */
  virtual Eigen::VectorXd sample_initial(Rng& rng) const = 0;

  /** Episode-terminating condition on the raw state. */
  virtual bool terminal(const Eigen::VectorXd& x) const { return false; }

  /** Constrained output y = C x. */
  double output(const Eigen::VectorXd& x) const { return output_row() * x; }

  /** Control clipped to the box U. */
  Eigen::VectorXd clamp_control(const Eigen::VectorXd& u) const {
    return u.cwiseMax(u_min()).cwiseMin(u_max());
  }
};

/** Classical 4th-order Runge-Kutta step with zero-order-hold control. */
Eigen::VectorXd rk4_step(const Environment& env, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt);

/**
 * Numeric r-th output derivative at transformed state s under control u:
 * the central finite difference of s_r along +/- delta micro-rollouts of the
 * black-box dynamics with the control frozen. Uses only f, T and T^-1.
 */
double f_tilde_r(const Environment& env, const Eigen::VectorXd& s,
                 const Eigen::VectorXd& u, double delta = 1e-4);

/** Same, with the control supplied by a policy evaluated at s. */
double f_tilde_r(const Environment& env, const PolicyFn& policy,
                 const Eigen::VectorXd& s, double delta = 1e-4);

/** Sampled trajectory in both coordinate systems. */
struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states_x;
  std::vector<Eigen::VectorXd> states_s;
  std::vector<Eigen::VectorXd> controls;
  std::vector<double> outputs;

  std::size_t size() const { return times.size(); }

  /** CSV with header `t, x1..xn, s1..sn, u1..um, y`. */
  std::string to_csv() const;
};

/**
 * Integrates the closed loop from x0 for `horizon` seconds (or until the
 * environment reports a terminal state), sampling at the integrator step.
 * Controls are clipped to the environment's box before application.
 */
Trajectory rollout(const Environment& env, const PolicyFn& policy,
                   const Eigen::VectorXd& x0, double dt, double horizon);

/** Uniform sample from an axis-aligned box. */
Eigen::VectorXd uniform_box(Rng& rng, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi);

/** Physical constants of the gliding-descent system (imperial units). */
struct ShuttleParams {
  double S_over_m = 0.9118;  // wing area over mass, ft^2/slug
  double C_L0 = 2.3;         // lift coefficient scale
  double C_D0 = 0.0975;      // zero-lift drag coefficient
  double K = 0.1819;         // induced-drag factor
  double rho0 = 0.0027;      // sea-level air density, slug/ft^3
  double g = 32.174;         // gravity, ft/s^2
  double H = 27890.0;        // atmospheric scale height, ft
  double alpha_min = 0.0;    // angle-of-attack box, rad
  double alpha_max = 1.0471975511965976;  // 60 degrees
  double h0 = 500.0;         // initial altitude, ft
  double v0_min = 300.0, v0_max = 400.0;          // initial speed, ft/s
  double gamma0_min = -0.5235987755982988;        // -30 degrees
  double gamma0_max = -0.17453292519943295;       // -10 degrees
};

struct CartPoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double gravity = 9.8;
  double force_max = 3.0;
  Eigen::Vector4d init_lo{-0.05, -0.05, -0.05, -0.05};  // (p, th, pdot, thdot)
  Eigen::Vector4d init_hi{0.05, 0.05, 0.05, 0.05};
};

struct DoubleIntegratorParams {
  double u_max = 10.0;
  Eigen::Vector2d init_lo{0.0, 0.0};
  Eigen::Vector2d init_hi{1.0, 1.0};
};

std::unique_ptr<Environment> make_cartpole(const CartPoleParams& params);
std::unique_ptr<Environment> make_shuttle(const ShuttleParams& params);
std::unique_ptr<Environment> make_double_integrator(
    const DoubleIntegratorParams& params);

}  // namespace dissip
