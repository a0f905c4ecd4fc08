#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <vector>

#include "dissip/buffer.hpp"
#include "dissip/environment.hpp"

namespace dissip {

struct ApproxOptions {
  int sample_count = 512;      // random samples added to the vertex base set
  double inflation = 1.2;      // multiplicative over-approximation
  double abs_margin = 1e-3;    // additive over-approximation
  int holdout_factor = 10;     // holdout size = factor * sample_count
  double delta = 1e-4;         // micro-rollout step for the derivative
  std::uint64_t seed = 0;
};

/**
 * Fitted affine model of the closed-loop r-th output derivative over the
 * buffer, plus the certified over-approximation eps of its worst residual.
 */
struct ApproxMeasure {
  Eigen::VectorXd w_s;  // state weights
  Eigen::VectorXd w_u;  // control weights
  double w0 = 0.0;      // offset

  double eps_fit = 0.0;   // max |residual| over the fit samples
  double inflation = 1.2;
  double abs_margin = 1e-3;
  double eps = 0.0;       // eps_fit * inflation + abs_margin
  int sample_count = 0;
  std::uint64_t seed = 0;
  double holdout_max_residual = 0.0;
  bool rank_deficient = false;

  double predict(const Eigen::VectorXd& s, const Eigen::VectorXd& u) const {
    return w_s.dot(s) + w_u.dot(u) + w0;
  }

  nlohmann::json to_json() const;
  static ApproxMeasure from_json(const nlohmann::json& j);
};

/**
 * Uniform-ish buffer samples: every vertex that satisfies membership plus
 * `count` random convex combinations of the vertices (Dirichlet weights).
 * Combinations that leave the buffer (possible when the lower bounds are
 * not tight, since the vertex hull then strictly contains the buffer) are
 * rejected and redrawn. Deterministic given the seed.
 */
std::vector<Eigen::VectorXd> sample_buffer(const BufferSpec& spec, int count,
                                           std::uint64_t seed);

/**
 * Least-squares fit of the numeric derivative against (s, policy(s), 1)
 * over the samples; rank-deficient systems (e.g. when the policy is exactly
 * affine in s, making the control collinear) fall back to the minimum-norm
 * solution and are flagged. eps over-approximates the max fit residual and
 * is validated on a fresh holdout sample set.
 */
ApproxMeasure fit_affine(const std::vector<Eigen::VectorXd>& samples,
                         const PolicyFn& policy, const Environment& env,
                         const ApproxOptions& options, const BufferSpec& spec);

/** Max |f_tilde_r - model| over a sample set (for monotonicity checks). */
double max_abs_residual(const ApproxMeasure& model,
                        const std::vector<Eigen::VectorXd>& samples,
                        const PolicyFn& policy, const Environment& env,
                        double delta = 1e-4);

}  // namespace dissip
