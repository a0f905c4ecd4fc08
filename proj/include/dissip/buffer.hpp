#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dissip/common.hpp"

namespace dissip {

/**
 * Auxiliary polytope for the unconstrained state directions (the trailing
 * n - r coordinates). Usually an axis-aligned box; an explicit vertex list
 * is accepted for general bounded polytopes. Dimension 0 (no auxiliary
 * coordinates) is represented by a single empty vertex.
 */
struct AuxPolytope {
  bool is_box = true;
  Eigen::VectorXd lo, hi;     // box bounds (box form only)
  Eigen::MatrixXd vertices;   // one vertex per row (both forms)

  int dim() const { return static_cast<int>(vertices.cols()); }
  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  bool contains(const Eigen::VectorXd& p, double tol) const;

  static AuxPolytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  static AuxPolytope from_vertices(const Eigen::MatrixXd& vertices);
};

/**
 * Dissipation buffer: the polytope adjoining the constraint boundary on
 * which the policy is affine and required to dissipate the constrained
 * output's derivatives.
 *
 * Coordinates s = (y, ydot, ..., y^(r-1), aux). Membership is
 *   lower_bounds <= s_{1:r} <= upper_bound(s)  and  s_{r+1:n} in aux.
 * The coupled upper bounds are
 *   [y_max, beta (y_max - s_1), -beta s_2, ..., -beta s_{r-1}]
 * with dissipation rate beta = ydot_max / (y_max - y_min).
 */
struct BufferSpec {
  int r = 2;                     // derivative order of the constrained output
  double y_min = 0.0, y_max = 1.0;
  double ydot_max = 1.0;
  Eigen::VectorXd lower_bounds;  // length r; lower_bounds[0] == y_min
  AuxPolytope aux;               // dimension n - r

  int n() const { return r + aux.dim(); }

  /** Throws BufferError when the spec violates its structural invariants. */
  void validate() const;

  /** Dissipation rate ydot_max / (y_max - y_min). */
  double beta() const;

  /** Coupled upper bounds on s_{1:r}; total function of s. */
  Eigen::VectorXd upper_bound(const Eigen::VectorXd& s) const;

  /** Membership with absolute tolerance (default exact to 1e-12). */
  bool contains(const Eigen::VectorXd& s, double tol = 1e-12) const;

  /** Strict element-wise comparison s_{1:r} < upper_bound(s). */
  bool strictly_below_upper(const Eigen::VectorXd& s) const;
};

/** One lower-bound feasibility issue reported by validate_lower_bounds. */
struct LowerBoundIssue {
  int index = 0;        // 1-based buffer dimension
  double bound = 0.0;   // configured lower bound
  double required = 0.0;  // largest value compatible with the upper bounds
  std::string family;   // which feasibility condition family it falls under
};

struct LowerBoundReport {
  bool ok = true;
  std::vector<LowerBoundIssue> issues;
};

/**
 * Checks that every lower bound is reachable, i.e. lower_bounds <=
 * upper_bound(v) at every vertex of the buffer. Computed by exact interval
 * propagation through the alternating upper-bound chain, which is equivalent
 * to enumerating the vertices and checking each one directly. A failing spec
 * is usable but flagged: trajectories may exit through the violated floor.
 */
LowerBoundReport validate_lower_bounds(const BufferSpec& spec);

/**
 * Exact vertex set of the buffer via the recursive min/max tree: dimension k
 * of a partial vertex takes the lower bound and the prefix-dependent upper
 * bound; coincident values (within 1e-12) produce a single child. The
 * result is the Cartesian product of the head-part vertices with the
 * auxiliary polytope's vertices, deduplicated at 1e-12 absolute.
 */
std::vector<Eigen::VectorXd> enumerate_vertices(const BufferSpec& spec);

/**
 * Predicted head-part vertex count for tight lower bounds: the Fibonacci
 * number F_{r+2} with F_0 = 0, F_1 = 1.
 */
long long fibonacci_vertex_count(int r);

/** Tight lower bounds (the pointwise minimum of the upper bounds): even
 * dimensions 0, odd dimensions -beta^(k-2) * ydot_max. */
Eigen::VectorXd tight_lower_bounds(int r, double y_min, double beta,
                                   double ydot_max);

/** True when the spec's lower bounds equal the tight ones to 1e-12. */
bool lower_bounds_tight(const BufferSpec& spec);

/**
 * Convex-hull membership via a dense phase-1 simplex on the
 * convex-combination feasibility problem. Exact for the small vertex sets
 * used here; `vertices` holds one vertex per row.
 */
bool in_convex_hull(const Eigen::MatrixXd& vertices, const Eigen::VectorXd& p,
                    double tol = 1e-9);

/** CSV rendering of a vertex list: header s1..sn, one row per vertex. */
std::string vertices_to_csv(const std::vector<Eigen::VectorXd>& vertices);

}  // namespace dissip
