#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "dissip/environment.hpp"
#include "dissip/mlp.hpp"

namespace dissip {

/**
 * Adjusts the hidden-layer biases of `net` so that its restriction to the
 * convex hull of `vertices` (one per row, in the network's input space) is
 * exactly affine: layer by layer the vertex images are pushed forward, and
 * every hidden unit whose vertex pre-activations disagree in sign gets its
 * bias shifted by the minimal amount that makes all of them share the
 * majority sign (ties toward the active side, which keeps gradients alive).
 *
 * Only ReLU hidden layers are supported.
 */
void enforce_affine_region(Mlp& net, const Eigen::MatrixXd& vertices);

/**
 * Policy network over transformed coordinates with a fixed input
 * normalization and an optional enforced affine region. The normalization
 * is itself affine, so enforcement of the inner network makes the composite
 * map exactly affine on the hull of the region vertices.
 */
class RegionAffinePolicy {
 public:
  RegionAffinePolicy() = default;

  /** Free policy (no affine region). */
  RegionAffinePolicy(Mlp net, Eigen::VectorXd norm_mu,
                     Eigen::VectorXd norm_sigma, Eigen::VectorXd u_lo,
                     Eigen::VectorXd u_hi);

  /** Policy constrained to be affine on hull(region_vertices). */
  static RegionAffinePolicy make_enforced(Mlp net,
                                          const Eigen::MatrixXd& region_vertices,
                                          Eigen::VectorXd norm_mu,
                                          Eigen::VectorXd norm_sigma,
                                          Eigen::VectorXd u_lo,
                                          Eigen::VectorXd u_hi);

  /**
   * Rebuilds a policy from serialized parts without touching the biases
   * (deserialization must be bit-exact; enforcement already happened before
   * the save, and certification re-checks affineness independently).
   */
  static RegionAffinePolicy restore(Mlp net, Eigen::MatrixXd region_vertices,
                                    Eigen::VectorXd norm_mu,
                                    Eigen::VectorXd norm_sigma,
                                    Eigen::VectorXd u_lo, Eigen::VectorXd u_hi,
                                    bool enforced);

  /** Raw network output (not clipped to the control box). */
  Eigen::VectorXd forward(const Eigen::VectorXd& s) const;

  /** Deployed control: forward clipped to the control box. */
  Eigen::VectorXd act(const Eigen::VectorXd& s) const;

  /** Gradients of upstream . forward(s) through normalization and network. */
  GradTape backward(const Eigen::VectorXd& s,
                    const Eigen::VectorXd& upstream) const;

  /** Same gradients, accumulated in place. */
  void backward_accum(const Eigen::VectorXd& s, const Eigen::VectorXd& upstream,
                      GradTape& tape) const;

  /** Re-applies the bias adjustment (call after every optimizer step). */
  void reenforce();

  /**
   * Recovers the affine map (D, e) with forward(s) = D s + e on the region:
   * D column-wise by central differences around the vertex centroid (step
   * sized to stay inside the hull, shrunk on failure), e from the centroid
   * value. Throws NotAffineError when the vertex residual exceeds 1e-9.
   */
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> extract_affine_map() const;

  /** max over samples of the sup-norm deviation from the affine map. */
  double affine_residual(const std::vector<Eigen::VectorXd>& samples) const;

  bool enforced() const { return enforced_; }
  int state_dim() const { return net_.input_dim(); }
  int control_dim() const { return net_.output_dim(); }
  const Eigen::MatrixXd& region_vertices() const { return region_vertices_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  const Eigen::VectorXd& norm_mu() const { return norm_mu_; }
  const Eigen::VectorXd& norm_sigma() const { return norm_sigma_; }
  const Eigen::VectorXd& u_lo() const { return u_lo_; }
  const Eigen::VectorXd& u_hi() const { return u_hi_; }

  /** Hash over parameters, normalization and region (for artifacts). */
  std::uint64_t hash() const;

  /** Adapter for rollout/verifier call sites. */
  PolicyFn as_policy_fn() const;

 private:
  Mlp net_;
  Eigen::VectorXd norm_mu_, norm_sigma_;
  Eigen::VectorXd u_lo_, u_hi_;
  Eigen::MatrixXd region_vertices_;  // one vertex per row, raw coordinates
  bool enforced_ = false;

  Eigen::VectorXd normalize(const Eigen::VectorXd& s) const;
};

/** Vertex-mean / vertex-extent normalization for a region (extent floor 1). */
std::pair<Eigen::VectorXd, Eigen::VectorXd> region_normalization(
    const Eigen::MatrixXd& vertices);

}  // namespace dissip
