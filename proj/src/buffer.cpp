#include "dissip/buffer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dissip {

namespace {
constexpr double kDedupTol = 1e-12;
}

AuxPolytope AuxPolytope::box(const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size())
    throw BufferError("aux box: lo/hi dimension mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (!(lo(i) <= hi(i)))
      throw BufferError("aux box: lo must not exceed hi");
  AuxPolytope p;
  p.is_box = true;
  p.lo = lo;
  p.hi = hi;
  const int d = static_cast<int>(lo.size());
  const long long count = 1LL << d;
  p.vertices.resize(count, d);
  for (long long mask = 0; mask < count; ++mask)
    for (int j = 0; j < d; ++j)
      p.vertices(mask, j) = (mask >> j & 1) ? hi(j) : lo(j);
  return p;
}

AuxPolytope AuxPolytope::from_vertices(const Eigen::MatrixXd& vertices) {
  if (vertices.rows() < 1)
    throw BufferError("aux polytope: needs at least one vertex");
  if (!vertices.allFinite())
    throw BufferError("aux polytope: non-finite vertex");
  AuxPolytope p;
  p.is_box = false;
  p.vertices = vertices;
  return p;
}

bool AuxPolytope::contains(const Eigen::VectorXd& p, double tol) const {
  if (p.size() != dim())
    throw ShapeError("aux polytope: point dimension mismatch");
  if (dim() == 0) return true;
  if (is_box) {
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p(i) < lo(i) - tol || p(i) > hi(i) + tol) return false;
    return true;
  }
  return in_convex_hull(vertices, p, std::max(tol, 1e-9));
}

void BufferSpec::validate() const {
  if (r < 2) throw BufferError("buffer: relative degree must be >= 2");
  if (!(y_min < y_max))
    throw BufferError("buffer: requires y_min < y_max (degenerate buffer)");
  if (!(ydot_max > 0.0)) throw BufferError("buffer: requires ydot_max > 0");
  if (lower_bounds.size() != r)
    throw BufferError("buffer: lower_bounds must have length r");
  if (std::abs(lower_bounds(0) - y_min) > 0.0)
    throw BufferError("buffer: lower_bounds[0] must equal y_min");
  if (aux.vertex_count() < 1)
    throw BufferError("buffer: auxiliary polytope needs >= 1 vertex");
  if (!std::isfinite(beta()))
    throw BufferError("buffer: dissipation rate is not finite");
}

double BufferSpec::beta() const {
  double denom = y_max - y_min;
  if (denom == 0.0)
    throw BufferError("buffer: y_max == y_min makes the dissipation rate "
                      "undefined (degenerate buffer)");
  return ydot_max / denom;
}

Eigen::VectorXd BufferSpec::upper_bound(const Eigen::VectorXd& s) const {
  if (s.size() != n())
    throw ShapeError("buffer: state dimension mismatch in upper_bound");
  const double b = beta();
  Eigen::VectorXd ub(r);
  ub(0) = y_max;
  if (r >= 2) ub(1) = b * (y_max - s(0));
  for (int k = 2; k < r; ++k) ub(k) = -b * s(k - 1);
  return ub;
}

bool BufferSpec::contains(const Eigen::VectorXd& s, double tol) const {
  if (s.size() != n())
    throw ShapeError("buffer: state dimension mismatch in contains");
  Eigen::VectorXd ub = upper_bound(s);
  for (int k = 0; k < r; ++k) {
    if (s(k) < lower_bounds(k) - tol) return false;
    if (s(k) > ub(k) + tol) return false;
  }
  if (aux.dim() > 0) return aux.contains(s.tail(aux.dim()), tol);
  return true;
}

bool BufferSpec::strictly_below_upper(const Eigen::VectorXd& s) const {
  Eigen::VectorXd ub = upper_bound(s);
  for (int k = 0; k < r; ++k)
    if (!(s(k) < ub(k))) return false;
  return true;
}

LowerBoundReport validate_lower_bounds(const BufferSpec& spec) {
  spec.validate();
  const double b = spec.beta();
  LowerBoundReport report;
  // Interval propagation over the coordinate values attainable at vertices:
  // [m_k, M_k] spans the lower bound plus the extreme upper-bound children.
  double lo_prev = spec.y_min;
  double hi_prev = spec.y_max;
  for (int k = 2; k <= spec.r; ++k) {
    const double ub_min = (k == 2) ? b * (spec.y_max - hi_prev)  // == 0
                                   : -b * hi_prev;
    const double ub_max = (k == 2) ? b * (spec.y_max - lo_prev)  // == ydot_max
                                   : -b * lo_prev;
    const double lb = spec.lower_bounds(k - 1);
    if (lb > ub_min + 1e-12) {
      LowerBoundIssue issue;
      issue.index = k;
      issue.bound = lb;
      issue.required = ub_min;
      if (k == 2) {
        issue.family = "dimension 2 requires a non-positive lower bound";
      } else if (k % 2 == 1) {
        issue.family = "odd-dimension chain (bounded by -beta^(k-2)*ydot_max "
                       "when lower bounds are tight)";
      } else {
        issue.family = "even-dimension chain (bounded by beta^(k-2)*s2_min "
                       "when lower bounds are tight)";
      }
      report.issues.push_back(issue);
      report.ok = false;
    }
    lo_prev = std::min(lb, ub_min);
    hi_prev = std::max(lb, ub_max);
  }
  return report;
}

namespace {

void expand_vertex_tree(const BufferSpec& spec, double beta,
                        Eigen::VectorXd& prefix, int k,
                        std::vector<Eigen::VectorXd>& out) {
  if (k == spec.r) {
    out.push_back(prefix.head(spec.r));
    return;
  }
  double lb, ub;
  if (k == 0) {
    lb = spec.y_min;
    ub = spec.y_max;
  } else if (k == 1) {
    lb = spec.lower_bounds(1);
    ub = beta * (spec.y_max - prefix(0));
  } else {
    lb = spec.lower_bounds(k);
    ub = -beta * prefix(k - 1);
  }
  prefix(k) = lb;
  expand_vertex_tree(spec, beta, prefix, k + 1, out);
  if (std::abs(ub - lb) > kDedupTol) {
    prefix(k) = ub;
    expand_vertex_tree(spec, beta, prefix, k + 1, out);
  }
}

}  // namespace

std::vector<Eigen::VectorXd> enumerate_vertices(const BufferSpec& spec) {
  spec.validate();
  const double beta = spec.beta();

  std::vector<Eigen::VectorXd> head;
  Eigen::VectorXd prefix = Eigen::VectorXd::Zero(spec.r);
  expand_vertex_tree(spec, beta, prefix, 0, head);

  // deduplicate coincident leaves (coincident min/max children only collide
  // up to rounding)
  std::vector<Eigen::VectorXd> head_unique;
  for (const auto& v : head) {
    bool duplicate = false;
    for (const auto& u : head_unique)
      if ((v - u).lpNorm<Eigen::Infinity>() <= kDedupTol) {
        duplicate = true;
        break;
      }
    if (!duplicate) head_unique.push_back(v);
  }

  std::vector<Eigen::VectorXd> out;
  out.reserve(head_unique.size() *
              static_cast<std::size_t>(spec.aux.vertex_count()));
  for (const auto& h : head_unique) {
    for (int a = 0; a < spec.aux.vertex_count(); ++a) {
      Eigen::VectorXd v(spec.n());
      v.head(spec.r) = h;
      if (spec.aux.dim() > 0) v.tail(spec.aux.dim()) = spec.aux.vertices.row(a);
      out.push_back(v);
    }
  }
  return out;
}

long long fibonacci_vertex_count(int r) {
  if (r < 1) throw DomainError("fibonacci_vertex_count: r must be >= 1");
  // F_{r+2} with F_0 = 0, F_1 = 1
  long long a = 0, b = 1;
  for (int i = 0; i < r + 2; ++i) {
    long long next = a + b;
    a = b;
    b = next;
  }
  return a;
}

Eigen::VectorXd tight_lower_bounds(int r, double y_min, double beta,
                                   double ydot_max) {
  Eigen::VectorXd lb(r);
  lb(0) = y_min;
  for (int k = 2; k <= r; ++k) {
    if (k % 2 == 0) {
      lb(k - 1) = 0.0;
    } else {
      lb(k - 1) = -std::pow(beta, k - 2) * ydot_max;
    }
  }
  return lb;
}

bool lower_bounds_tight(const BufferSpec& spec) {
  Eigen::VectorXd tight =
      tight_lower_bounds(spec.r, spec.y_min, spec.beta(), spec.ydot_max);
  return (spec.lower_bounds - tight).lpNorm<Eigen::Infinity>() <= 1e-12;
}

bool in_convex_hull(const Eigen::MatrixXd& vertices, const Eigen::VectorXd& p,
                    double tol) {
  const int count = static_cast<int>(vertices.rows());
  const int d = static_cast<int>(vertices.cols());
  if (p.size() != d) throw ShapeError("in_convex_hull: dimension mismatch");
  if (count == 0) return false;

  // phase-1 simplex on: vertices^T lambda = p, sum lambda = 1, lambda >= 0
  const int m = d + 1;
  Eigen::MatrixXd a(m, count);
  a.topRows(d) = vertices.transpose();
  a.row(d).setOnes();
  Eigen::VectorXd rhs(m);
  rhs.head(d) = p;
  rhs(d) = 1.0;
  for (int i = 0; i < m; ++i)
    if (rhs(i) < 0.0) {
      a.row(i) *= -1.0;
      rhs(i) *= -1.0;
    }

  const int total = count + m;  // original columns plus artificials
  Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(m + 1, total + 1);
  tab.block(0, 0, m, count) = a;
  tab.block(0, count, m, m) = Eigen::MatrixXd::Identity(m, m);
  tab.block(0, total, m, 1) = rhs;
  for (int j = 0; j < count; ++j) tab(m, j) = a.col(j).sum();
  tab(m, total) = rhs.sum();

  // Bland's rule keeps the iteration finite and deterministic
  const int max_iters = 50 * (total + 1);
  for (int iter = 0; iter < max_iters; ++iter) {
    int enter = -1;
    for (int j = 0; j < total; ++j)
      if (tab(m, j) > 1e-9) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (tab(i, enter) > 1e-12) {
        double ratio = tab(i, total) / tab(i, enter);
        if (ratio < best - 1e-15) {
          best = ratio;
          leave = i;
        }
      }
    if (leave < 0) break;
    tab.row(leave) /= tab(leave, enter);
    for (int i = 0; i <= m; ++i)
      if (i != leave && tab(i, enter) != 0.0)
        tab.row(i) -= tab(i, enter) * tab.row(leave);
  }
  return tab(m, total) <= tol;
}

std::string vertices_to_csv(const std::vector<Eigen::VectorXd>& vertices) {
  std::ostringstream out;
  if (!vertices.empty()) {
    for (Eigen::Index j = 0; j < vertices.front().size(); ++j) {
      if (j > 0) out << ", ";
      out << "s" << (j + 1);
    }
    out << "\n";
  }
  for (const auto& v : vertices) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (j > 0) out << ", ";
      out << format_double(v(j));
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace dissip
