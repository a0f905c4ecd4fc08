#include "dissip/environment.hpp"

#include <cmath>
#include <sstream>

namespace dissip {

Eigen::VectorXd rk4_step(const Environment& env, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt) {
  Eigen::VectorXd k1 = env.f(x, u);
  Eigen::VectorXd k2 = env.f(x + 0.5 * dt * k1, u);
  Eigen::VectorXd k3 = env.f(x + 0.5 * dt * k2, u);
  Eigen::VectorXd k4 = env.f(x + dt * k3, u);
  Eigen::VectorXd next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite())
    throw IntegrationError("rk4_step: state became non-finite");
  return next;
}

double f_tilde_r(const Environment& env, const Eigen::VectorXd& s,
                 const Eigen::VectorXd& u, double delta) {
  const int r = env.relative_degree();
  Eigen::VectorXd x = env.from_s(s);
  Eigen::VectorXd x_fwd = rk4_step(env, x, u, delta);
  Eigen::VectorXd x_bwd = rk4_step(env, x, u, -delta);
  double sr_fwd = env.to_s(x_fwd)(r - 1);
  double sr_bwd = env.to_s(x_bwd)(r - 1);
  return (sr_fwd - sr_bwd) / (2.0 * delta);
}

double f_tilde_r(const Environment& env, const PolicyFn& policy,
                 const Eigen::VectorXd& s, double delta) {
  Eigen::VectorXd u = env.clamp_control(policy(s));
  return f_tilde_r(env, s, u, delta);
}

std::string Trajectory::to_csv() const {
  std::ostringstream out;
  const int n = states_x.empty() ? 0 : static_cast<int>(states_x[0].size());
  const int m = controls.empty() ? 0 : static_cast<int>(controls[0].size());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ", x" << i;
  for (int i = 1; i <= n; ++i) out << ", s" << i;
  for (int i = 1; i <= m; ++i) out << ", u" << i;
  out << ", y\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    out << format_double(times[k]);
    for (int i = 0; i < n; ++i) out << ", " << format_double(states_x[k](i));
    for (int i = 0; i < n; ++i) out << ", " << format_double(states_s[k](i));
    for (int i = 0; i < m; ++i) out << ", " << format_double(controls[k](i));
    out << ", " << format_double(outputs[k]) << "\n";
  }
  return out.str();
}

Trajectory rollout(const Environment& env, const PolicyFn& policy,
                   const Eigen::VectorXd& x0, double dt, double horizon) {
  if (dt <= 0.0) throw IntegrationError("rollout: dt must be positive");
  Trajectory traj;
  Eigen::VectorXd x = x0;
  double t = 0.0;
  const long steps = static_cast<long>(std::llround(horizon / dt));
  for (long k = 0; k <= steps; ++k) {
    Eigen::VectorXd s = env.to_s(x);
    Eigen::VectorXd u = env.clamp_control(policy(s));
    traj.times.push_back(t);
    traj.states_x.push_back(x);
    traj.states_s.push_back(s);
    traj.controls.push_back(u);
    traj.outputs.push_back(env.output(x));
    if (k == steps || env.terminal(x)) break;
    x = rk4_step(env, x, u, dt);
    t = static_cast<double>(k + 1) * dt;
  }
  return traj;
}

Eigen::VectorXd uniform_box(Rng& rng, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size())
    throw ShapeError("uniform_box: lo/hi dimension mismatch");
  Eigen::VectorXd x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x(i) = rng.uniform(lo(i), hi(i));
  return x;
}

}  // namespace dissip
