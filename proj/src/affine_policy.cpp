#include "dissip/affine_policy.hpp"

#include <cmath>

namespace dissip {

void enforce_affine_region(Mlp& net, const Eigen::MatrixXd& vertices) {
  if (net.layers.empty()) throw ShapeError("enforce_affine_region: empty net");
  if (vertices.rows() < 1)
    throw ShapeError("enforce_affine_region: need at least one vertex");
  if (vertices.cols() != net.input_dim())
    throw ShapeError("enforce_affine_region: vertex dimension mismatch");

  // vertex images, one per row
  Eigen::MatrixXd acts = vertices;
  for (std::size_t layer = 0; layer + 1 < net.layers.size(); ++layer) {
    Eigen::MatrixXd pre =
        (acts * net.layers[layer].W.transpose()).rowwise() +
        net.layers[layer].b.transpose();
    for (Eigen::Index j = 0; j < pre.cols(); ++j) {
      double min_z = pre.col(j).minCoeff();
      double max_z = pre.col(j).maxCoeff();
      if (min_z >= 0.0 || max_z < 0.0) continue;  // signs already agree
      Eigen::Index active = 0;
      for (Eigen::Index i = 0; i < pre.rows(); ++i)
        if (pre(i, j) >= 0.0) ++active;
      const Eigen::Index inactive = pre.rows() - active;
      // majority vote; ties go to the active side
      double shift = (active >= inactive) ? -min_z : -max_z;
      net.layers[layer].b(j) += shift;
      pre.col(j).array() += shift;
    }
    acts = pre.cwiseMax(0.0);
  }
}

RegionAffinePolicy::RegionAffinePolicy(Mlp net, Eigen::VectorXd norm_mu,
                                       Eigen::VectorXd norm_sigma,
                                       Eigen::VectorXd u_lo,
                                       Eigen::VectorXd u_hi)
    : net_(std::move(net)),
      norm_mu_(std::move(norm_mu)),
      norm_sigma_(std::move(norm_sigma)),
      u_lo_(std::move(u_lo)),
      u_hi_(std::move(u_hi)) {
  if (norm_mu_.size() != net_.input_dim() ||
      norm_sigma_.size() != net_.input_dim())
    throw ShapeError("policy: normalization dimension mismatch");
  if ((norm_sigma_.array() <= 0.0).any())
    throw ShapeError("policy: normalization scale must be positive");
  if (u_lo_.size() != net_.output_dim() || u_hi_.size() != net_.output_dim())
    throw ShapeError("policy: control box dimension mismatch");
}

RegionAffinePolicy RegionAffinePolicy::make_enforced(
    Mlp net, const Eigen::MatrixXd& region_vertices, Eigen::VectorXd norm_mu,
    Eigen::VectorXd norm_sigma, Eigen::VectorXd u_lo, Eigen::VectorXd u_hi) {
  RegionAffinePolicy policy(std::move(net), std::move(norm_mu),
                            std::move(norm_sigma), std::move(u_lo),
                            std::move(u_hi));
  policy.region_vertices_ = region_vertices;
  policy.enforced_ = true;
  policy.reenforce();
  return policy;
}

RegionAffinePolicy RegionAffinePolicy::restore(
    Mlp net, Eigen::MatrixXd region_vertices, Eigen::VectorXd norm_mu,
    Eigen::VectorXd norm_sigma, Eigen::VectorXd u_lo, Eigen::VectorXd u_hi,
    bool enforced) {
  RegionAffinePolicy policy(std::move(net), std::move(norm_mu),
                            std::move(norm_sigma), std::move(u_lo),
                            std::move(u_hi));
  if (enforced && region_vertices.rows() < 1)
    throw CheckpointError("policy: enforced flag without region vertices");
  policy.region_vertices_ = std::move(region_vertices);
  policy.enforced_ = enforced;
  return policy;
}

Eigen::VectorXd RegionAffinePolicy::normalize(const Eigen::VectorXd& s) const {
  return (s - norm_mu_).cwiseQuotient(norm_sigma_);
}

Eigen::VectorXd RegionAffinePolicy::forward(const Eigen::VectorXd& s) const {
  return net_.forward(normalize(s));
}

Eigen::VectorXd RegionAffinePolicy::act(const Eigen::VectorXd& s) const {
  return forward(s).cwiseMax(u_lo_).cwiseMin(u_hi_);
}

GradTape RegionAffinePolicy::backward(const Eigen::VectorXd& s,
                                      const Eigen::VectorXd& upstream) const {
  return net_.backward(normalize(s), upstream);
}

void RegionAffinePolicy::backward_accum(const Eigen::VectorXd& s,
                                        const Eigen::VectorXd& upstream,
                                        GradTape& tape) const {
  net_.backward_accum(normalize(s), upstream, tape);
}

void RegionAffinePolicy::reenforce() {
  if (!enforced_) return;
  Eigen::MatrixXd normed = region_vertices_;
  for (Eigen::Index i = 0; i < normed.rows(); ++i)
    normed.row(i) = normalize(region_vertices_.row(i).transpose()).transpose();
  enforce_affine_region(net_, normed);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd>
RegionAffinePolicy::extract_affine_map() const {
  const Eigen::MatrixXd& verts = region_vertices_;
  if (verts.rows() < 1)
    throw NotAffineError("extract_affine_map: policy has no region");
  const int n = net_.input_dim();
  const int m = net_.output_dim();

  Eigen::VectorXd centroid = verts.colwise().mean().transpose();
  Eigen::VectorXd extent =
      (verts.colwise().maxCoeff() - verts.colwise().minCoeff()).transpose();

  double factor = 1e-3;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, n);
    for (int i = 0; i < n; ++i) {
      double h = factor * extent(i);
      if (h <= 0.0) continue;  // hull is flat along this axis
      Eigen::VectorXd lo = centroid, hi = centroid;
      hi(i) += h;
      lo(i) -= h;
      D.col(i) = (forward(hi) - forward(lo)) / (2.0 * h);
    }
    Eigen::VectorXd e = forward(centroid) - D * centroid;

    double residual = 0.0;
    for (Eigen::Index k = 0; k < verts.rows(); ++k) {
      Eigen::VectorXd v = verts.row(k).transpose();
      residual = std::max(
          residual,
          (forward(v) - (D * v + e)).lpNorm<Eigen::Infinity>());
    }
    if (residual <= 1e-9) return {D, e};
    factor *= 0.5;  // perturbation may have left the hull; shrink and retry
  }
  throw NotAffineError(
      "extract_affine_map: vertex residual exceeds 1e-9 (the network is not "
      "affine on the region)");
}

double RegionAffinePolicy::affine_residual(
    const std::vector<Eigen::VectorXd>& samples) const {
  auto [D, e] = extract_affine_map();
  double worst = 0.0;
  for (const auto& s : samples)
    worst = std::max(worst,
                     (forward(s) - (D * s + e)).lpNorm<Eigen::Infinity>());
  return worst;
}

std::uint64_t RegionAffinePolicy::hash() const {
  std::uint64_t h = net_.param_hash();
  auto mix_vec = [&h](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      double x = v(i);
      h ^= fnv1a64(&x, sizeof(x));
      h *= 0x100000001b3ULL;
    }
  };
  mix_vec(norm_mu_);
  mix_vec(norm_sigma_);
  for (Eigen::Index i = 0; i < region_vertices_.rows(); ++i)
    mix_vec(region_vertices_.row(i).transpose());
  return h;
}

PolicyFn RegionAffinePolicy::as_policy_fn() const {
  return [this](const Eigen::VectorXd& s) { return act(s); };
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> region_normalization(
    const Eigen::MatrixXd& vertices) {
  Eigen::VectorXd mu = vertices.colwise().mean().transpose();
  Eigen::VectorXd extent =
      (vertices.colwise().maxCoeff() - vertices.colwise().minCoeff())
          .transpose();
  Eigen::VectorXd sigma = extent.cwiseMax(1.0);
  return {mu, sigma};
}

}  // namespace dissip
