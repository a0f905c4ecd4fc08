#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dissip/affine_policy.hpp"
#include "dissip/buffer.hpp"
#include "dissip/environment.hpp"

namespace dissip {

/** Dissipation check at one buffer vertex. */
struct VertexCheck {
  Eigen::VectorXd s;
  Eigen::VectorXd u;
  double f_r = 0.0;       // numeric r-th output derivative under u
  double threshold = 0.0; // -2*eps - beta * s_r
  double margin = 0.0;    // threshold - f_r, pass iff >= 0
  bool pass = false;
  std::string note;
};

/** Result of the vertex dissipation certificate. */
struct Certificate {
  std::string version = "1";
  std::string env;
  double beta = 0.0;
  double eps = 0.0;
  std::vector<VertexCheck> vertices;
  bool pass = false;              // every vertex margin >= 0 (and in contract)
  Eigen::MatrixXd dtheta;         // affine map of the policy on the buffer
  Eigen::VectorXd etheta;
  std::vector<std::string> notes;
  std::uint64_t policy_hash = 0;  // hash of the certified policy parameters
  nlohmann::json approx;          // derivative surrogate behind eps, if any

  double min_margin() const;
  nlohmann::json to_json() const;
};

/**
 * Evaluates the dissipation inequality at every buffer vertex: the policy
 * must drive the numeric r-th output derivative below -2*eps - beta*s_r.
 * Requires an enforced policy (the certificate extends from the vertices to
 * the whole buffer only when the policy is affine on it). Vertices where
 * the dynamics are undefined fail with an explanatory note; so do vertices
 * where the policy output leaves the control box, since the affine model
 * stops being the applied control there.
 */
Certificate verify_dissipation(const Environment& env,
                               const RegionAffinePolicy& policy,
                               const BufferSpec& spec, double eps,
                               double delta = 1e-4);

/** One constraint breach inside the checked window. */
struct TrajectoryViolation {
  int index = -1;
  double t = 0.0;
  std::string what;
  double amount = 0.0;  // overshoot beyond the strictness slack
};

/** Buffer entry/exit bookkeeping and violations for one trajectory. */
struct TrajectoryReport {
  bool entered = false;
  int entry_index = -1;
  double t_entry = 0.0;
  int exit_index = -1;  // first sample past the window, -1 if none
  double t_exit = 0.0;
  std::string exit_reason;  // "floor", "aux", "end"
  int steps_checked = 0;
  std::vector<TrajectoryViolation> violations;
  int tolerated_steps = 0;      // overshoots within the integrator allowance
  double max_overshoot = 0.0;   // largest tolerated overshoot
  double max_envelope_excess_y = 0.0;       // slack vs analytic output bound
  double max_envelope_excess_deriv = 0.0;   // slack vs analytic derivative bounds
  bool ok = false;  // entered and no genuine violation in the window

  nlohmann::json to_json() const;
};

/**
 * Scans a trajectory for the first buffer entry (inside the buffer and
 * strictly below the state-dependent upper bound), then checks the upper
 * bounds, the output constraint, and the analytic decay envelopes until the
 * trajectory leaves through a lower bound or the aux set. Overshoots within
 * the per-step integration allowance are tolerated and reported separately
 * from genuine violations.
 */
TrajectoryReport check_trajectory(const Trajectory& traj,
                                  const BufferSpec& spec,
                                  double strict_slack = 1e-9);

/** Exponential decay envelopes from an entry state (Gronwall bounds). */
struct Envelopes {
  Eigen::VectorXd t_offsets;
  Eigen::VectorXd y_bound;          // (y0 - y_max) * exp(-beta dt) + y_max
  Eigen::MatrixXd deriv_bounds;     // row k-1: s_{k+1}(t0) * exp(-beta dt)
};

Envelopes envelope_bounds(const Eigen::VectorXd& entry_coords, double y_max,
                          double beta, const Eigen::VectorXd& t_offsets);

/**
 * Integrates the scalar comparison system z' = -beta z + slack(t) and
 * checks z(t) <= z(0) exp(-beta t) within tolerance; slack must be
 * non-positive for the bound to hold.
 */
bool comparison_ode_check(double beta, const std::function<double(double)>& slack,
                          double z0, double horizon, double tol = 1e-7);

/**
 * Max of f_tilde_r(s) + beta * s_r over the in-window samples of a
 * trajectory; non-positive values confirm the interior dissipation that the
 * vertex certificate implies.
 */
double interior_dissipation_excess(const Environment& env, const PolicyFn& policy,
                                   const Trajectory& traj, const BufferSpec& spec,
                                   const TrajectoryReport& report,
                                   double delta = 1e-4);

}  // namespace dissip
