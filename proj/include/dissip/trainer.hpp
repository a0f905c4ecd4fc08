#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dissip/affine_policy.hpp"
#include "dissip/approx.hpp"
#include "dissip/buffer.hpp"
#include "dissip/environment.hpp"
#include "dissip/mlp.hpp"

namespace dissip {

enum class PolicyKind { kBaseline, kAffine };

PolicyKind policy_kind_from_string(const std::string& name);
std::string policy_kind_name(PolicyKind kind);

struct TrainConfig {
  PolicyKind kind = PolicyKind::kAffine;
  int iterations = 150;
  int batch_steps = 1024;     // environment steps per iteration
  int epochs = 10;
  int minibatch = 256;
  double dt = 0.02;
  double horizon = 8.0;       // episode truncation time
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double lr_policy = 3e-4;
  double lr_value = 1e-3;
  double entropy_coef = 0.0;
  double penalty_weight = 0.0;   // weight of the vertex dissipation penalty
  double penalty_margin = 0.0;   // extra slack demanded inside the penalty
  int eps_refresh_every = 50;    // iterations between eps re-estimates
  double eps_cushion = 0.0;      // added to the estimate during training
  std::vector<int> hidden = {64, 64};
  std::vector<int> value_hidden = {64, 64};
  double init_log_std = -0.5;
  double value_scale = 50.0;     // returns are regressed divided by this
  int polish_iters = 0;          // penalty-only descent after the main loop
  double polish_lr = 1e-4;
  double delta = 1e-4;           // micro-rollout step for derivatives
  int checkpoint_every = 0;      // 0 = final checkpoint only
  ApproxOptions approx;

  void validate() const;  // throws ConfigError on out-of-range values
};

struct TrainLogRow {
  int iter = 0;
  double return_mean = 0.0;
  double penalty = 0.0;
  double min_vertex_margin = 0.0;
  double eps = 0.0;
};

std::string train_log_to_csv(const std::vector<TrainLogRow>& rows);

struct TrainResult {
  RegionAffinePolicy policy;
  Eigen::VectorXd log_std;
  Mlp value_net;
  std::vector<TrainLogRow> log;
  ApproxMeasure eps_measure;  // final estimate (affine kind only)
  double eps = 0.0;
  bool diverged = false;
  std::string divergence_note;
};

/**
 * Sum over buffer vertices of max(0, f_tilde_r + 2 eps + beta s_r + margin)^2
 * under the deployed policy; zero exactly when the dissipation certificate
 * holds with `margin` to spare. Vertices where the dynamics are undefined
 * are skipped (they cannot be improved by the policy).
 */
double dissipation_penalty(const RegionAffinePolicy& policy,
                           const Eigen::MatrixXd& vertices,
                           const Environment& env, double eps, double beta,
                           double delta = 1e-4, double margin = 0.0);

/**
 * Same value, with parameter gradients accumulated into `tape` via central
 * differences of the derivative in the control and reverse mode through the
 * network. At a saturated control bound the gradient is kept only when it
 * points back into the box.
 */
double dissipation_penalty_grad(const RegionAffinePolicy& policy,
                                const Eigen::MatrixXd& vertices,
                                const Environment& env, double eps, double beta,
                                GradTape& tape, double delta = 1e-4,
                                double margin = 0.0);

/** Smallest vertex margin -2 eps - beta s_r - f_tilde_r (skips undefined). */
double min_vertex_margin(const RegionAffinePolicy& policy,
                         const Eigen::MatrixXd& vertices, const Environment& env,
                         double eps, double beta, double delta = 1e-4);

/**
 * Generalized advantage estimation over one episode segment: `values` has
 * one trailing bootstrap entry (zero at a true termination, the critic's
 * estimate at a truncation).
 */
Eigen::VectorXd gae(const std::vector<double>& rewards,
                    const std::vector<double>& values, double gamma,
                    double lambda);

/** Upright tracking reward: 1 - (theta / 0.2)^2 - 0.01 u^2. */
double reward_pendulum(const Eigen::VectorXd& x, const Eigen::VectorXd& u);

/**
 * Landing reward: -0.2 |a - a_prev| each step, minus |h| + |hdot| at the
 * final step (gentle handoff at the floor).
 */
double reward_shuttle(double a, double a_prev, double h, double hdot,
                      bool final_step);

/** Invoked after each iteration (logging, residual checks, checkpoints). */
using TrainCallback =
    std::function<void(int iter, const RegionAffinePolicy& policy,
                       const Eigen::VectorXd& log_std, const Mlp& value_net)>;

/** PPO with optional affine-region enforcement and dissipation penalty. */
TrainResult train(const Environment& env, const BufferSpec& spec,
                  const TrainConfig& cfg, std::uint64_t seed,
                  const TrainCallback& callback = {});

}  // namespace dissip
