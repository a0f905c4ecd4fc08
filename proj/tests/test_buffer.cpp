#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dissip/buffer.hpp"

using dissip::AuxPolytope;
using dissip::BufferSpec;
using dissip::Rng;

namespace {

BufferSpec pendulum_spec() {
  BufferSpec spec;
  spec.r = 2;
  spec.y_min = 0.1;
  spec.y_max = 0.2;
  spec.ydot_max = 1.0;
  spec.lower_bounds = Eigen::Vector2d(0.1, 0.0);
  spec.aux = AuxPolytope::box(Eigen::Vector2d(-0.9, -1.0),
                              Eigen::Vector2d(0.9, 1.0));
  return spec;
}

BufferSpec head_only_spec(int r, double y_min, double y_max, double ydot_max,
                          const Eigen::VectorXd& lower_bounds) {
  BufferSpec spec;
  spec.r = r;
  spec.y_min = y_min;
  spec.y_max = y_max;
  spec.ydot_max = ydot_max;
  spec.lower_bounds = lower_bounds;
  spec.aux = AuxPolytope::box(Eigen::VectorXd(0), Eigen::VectorXd(0));
  return spec;
}

bool close(const Eigen::VectorXd& v, const Eigen::VectorXd& u, double tol) {
  return ((v - u).cwiseAbs().array() <=
          tol * (1.0 + u.cwiseAbs().array().max(v.cwiseAbs().array())))
      .all();
}

// independent vertex oracle: solve every r-subset of the 2r half-space
// constraints and keep feasible, non-singular solutions
std::vector<Eigen::VectorXd> brute_force_vertices(const BufferSpec& spec) {
  const int r = spec.r;
  const double b = spec.beta();
  const int m = 2 * r;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, r);
  Eigen::VectorXd c(m);
  for (int k = 0; k < r; ++k) {  // -s_k <= -lb_k
    A(k, k) = -1.0;
    c(k) = -spec.lower_bounds(k);
  }
  A(r, 0) = 1.0;  // s_1 <= y_max
  c(r) = spec.y_max;
  A(r + 1, 1) = 1.0;  // s_2 + b s_1 <= b y_max
  A(r + 1, 0) = b;
  c(r + 1) = b * spec.y_max;
  for (int k = 2; k < r; ++k) {  // s_{k+1} + b s_k <= 0
    A(r + k, k) = 1.0;
    A(r + k, k - 1) = b;
    c(r + k) = 0.0;
  }

  std::vector<Eigen::VectorXd> verts;
  std::vector<int> idx(r);
  // iterate r-combinations of {0..m-1}
  for (int i = 0; i < r; ++i) idx[i] = i;
  while (true) {
    Eigen::MatrixXd sub(r, r);
    Eigen::VectorXd rhs(r);
    for (int i = 0; i < r; ++i) {
      sub.row(i) = A.row(idx[i]);
      rhs(i) = c(idx[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    if (lu.isInvertible()) {
      Eigen::VectorXd v = lu.solve(rhs);
      const Eigen::ArrayXd slack = (A * v - c).array();
      const Eigen::ArrayXd tol =
          1e-9 * c.array().abs().max(1.0);  // scale-aware feasibility
      if ((slack <= tol).all()) {
        bool dup = false;
        for (const auto& u : verts)
          if (close(v, u, 1e-8)) dup = true;
        if (!dup) verts.push_back(v);
      }
    }
    // next combination
    int i = r - 1;
    while (i >= 0 && idx[i] == m - r + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
  }
  return verts;
}

bool same_vertex_set(const std::vector<Eigen::VectorXd>& a,
                     const std::vector<Eigen::VectorXd>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (const auto& v : a) {
    bool found = false;
    for (const auto& u : b)
      if (close(v, u, tol)) found = true;
    if (!found) return false;
  }
  return true;
}

// draws lower bounds that every upper bound can reach, by propagating the
// attainable coordinate intervals the same way the coupled bounds do
Eigen::VectorXd consistent_lower_bounds(int r, double y_min, double y_max,
                                        double ydot_max, double beta,
                                        Rng& rng) {
  Eigen::VectorXd lb(r);
  lb(0) = y_min;
  double lo_prev = y_min, hi_prev = y_max;
  for (int k = 2; k <= r; ++k) {
    const double ub_min = (k == 2) ? 0.0 : -beta * hi_prev;
    const double ub_max = (k == 2) ? ydot_max : -beta * lo_prev;
    double bound = ub_min;
    if (rng.uniform01() < 0.5)
      bound -= rng.uniform(0.0, 1.0) * std::max(1.0, std::abs(ub_min));
    lb(k - 1) = bound;
    lo_prev = std::min(bound, ub_min);
    hi_prev = std::max(bound, ub_max);
  }
  return lb;
}

}  // namespace

TEST_CASE("dissipation rate and coupled upper bounds (hand values)") {
  BufferSpec spec = pendulum_spec();
  CHECK(spec.beta() == doctest::Approx(10.0).epsilon(1e-15));

  Eigen::VectorXd s(4);
  s << 0.15, 0.3, 0.0, 0.0;
  Eigen::VectorXd ub = spec.upper_bound(s);
  CHECK(ub(0) == doctest::Approx(0.2));
  CHECK(ub(1) == doctest::Approx(10.0 * (0.2 - 0.15)));  // = 0.5

  CHECK(spec.contains(s));
  s(1) = 0.6;  // above beta (y_max - s_1) = 0.5
  CHECK_FALSE(spec.contains(s));
  s(1) = 0.3;
  s(2) = 1.5;  // outside the aux box
  CHECK_FALSE(spec.contains(s));
}

TEST_CASE("structural validation rejects malformed specs") {
  BufferSpec spec = pendulum_spec();
  CHECK_NOTHROW(spec.validate());

  BufferSpec bad = spec;
  bad.r = 1;
  bad.lower_bounds = Eigen::VectorXd::Constant(1, 0.1);
  CHECK_THROWS_AS(bad.validate(), dissip::BufferError);

  bad = spec;
  bad.y_max = bad.y_min;
  CHECK_THROWS_AS(bad.validate(), dissip::BufferError);

  bad = spec;
  bad.lower_bounds = Eigen::Vector3d(0.1, 0.0, 0.0);
  CHECK_THROWS_AS(bad.validate(), dissip::BufferError);

  bad = spec;
  bad.lower_bounds(0) = 0.11;  // must equal y_min
  CHECK_THROWS_AS(bad.validate(), dissip::BufferError);

  bad = spec;
  bad.ydot_max = 0.0;
  CHECK_THROWS_AS(bad.validate(), dissip::BufferError);
}

TEST_CASE("Fibonacci vertex law for tight lower bounds, r = 2..8") {
  // aux with 1 vertex (dimension 0) and with 4 vertices (2-d box)
  for (int aux_count : {1, 4}) {
    for (int r = 2; r <= 8; ++r) {
      const double y_min = -0.5, y_max = 1.5, ydot_max = 2.0;
      const double beta = ydot_max / (y_max - y_min);
      BufferSpec spec = head_only_spec(
          r, y_min, y_max, ydot_max,
          dissip::tight_lower_bounds(r, y_min, beta, ydot_max));
      if (aux_count == 4)
        spec.aux = AuxPolytope::box(Eigen::Vector2d(-1.0, -2.0),
                                    Eigen::Vector2d(1.0, 2.0));
      CHECK(dissip::lower_bounds_tight(spec));
      const auto verts = dissip::enumerate_vertices(spec);
      CHECK(static_cast<long long>(verts.size()) ==
            dissip::fibonacci_vertex_count(r) * aux_count);
    }
  }
  CHECK(dissip::fibonacci_vertex_count(2) == 3);   // F_4
  CHECK(dissip::fibonacci_vertex_count(3) == 5);   // F_5
  CHECK(dissip::fibonacci_vertex_count(8) == 55);  // F_10
}

TEST_CASE("tree enumeration matches the brute-force half-space oracle") {
  Rng rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int r = 2 + static_cast<int>(rng.integer(4));  // 2..5
    const double y_min = rng.uniform(-2.0, 1.0);
    const double y_max = y_min + rng.uniform(0.2, 3.0);
    const double ydot_max = rng.uniform(0.3, 4.0);
    const double beta = ydot_max / (y_max - y_min);
    const Eigen::VectorXd lb =
        consistent_lower_bounds(r, y_min, y_max, ydot_max, beta, rng);
    BufferSpec spec = head_only_spec(r, y_min, y_max, ydot_max, lb);
    CHECK(dissip::validate_lower_bounds(spec).ok);

    const auto tree = dissip::enumerate_vertices(spec);
    const auto brute = brute_force_vertices(spec);
    CHECK(same_vertex_set(tree, brute, 1e-8));
    compared += static_cast<int>(tree.size());
  }
  CHECK(compared > 1000);
}

TEST_CASE("lower-bound validator matches the direct vertex check") {
  // 1000 random specs, feasible and infeasible alike
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int r = 2 + static_cast<int>(rng.integer(5));  // 2..6
    const double y_min = rng.uniform(-2.0, 1.0);
    const double y_max = y_min + rng.uniform(0.2, 3.0);
    const double ydot_max = rng.uniform(0.3, 4.0);
    const double beta = ydot_max / (y_max - y_min);
    Eigen::VectorXd lb =
        dissip::tight_lower_bounds(r, y_min, beta, ydot_max);
    for (int k = 1; k < r; ++k) {
      const double scale = std::max(1.0, std::abs(lb(k)));
      lb(k) += rng.uniform(-1.0, 1.0) * scale;  // ~half become infeasible
    }
    BufferSpec spec = head_only_spec(r, y_min, y_max, ydot_max, lb);

    bool direct_ok = true;
    for (const auto& v : dissip::enumerate_vertices(spec)) {
      const Eigen::VectorXd ub = spec.upper_bound(v);
      for (int k = 0; k < r; ++k)
        if (spec.lower_bounds(k) > ub(k) + 1e-12) direct_ok = false;
    }
    const auto report = dissip::validate_lower_bounds(spec);
    CHECK(report.ok == direct_ok);
    if (!report.ok) CHECK_FALSE(report.issues.empty());
  }
}

TEST_CASE("inconsistent floor is flagged but still enumerable") {
  // gliding-descent shape: the s2 floor sits above the reachable minimum
  BufferSpec spec;
  spec.r = 2;
  spec.y_min = -50.0;
  spec.y_max = 0.0;
  spec.ydot_max = 100.0;
  spec.lower_bounds = Eigen::Vector2d(-50.0, 6.0);
  spec.aux = AuxPolytope::box(Eigen::VectorXd::Constant(1, -0.785),
                              Eigen::VectorXd::Constant(1, -0.009));
  const auto report = dissip::validate_lower_bounds(spec);
  CHECK_FALSE(report.ok);
  REQUIRE(report.issues.size() == 1);
  CHECK(report.issues[0].index == 2);
  CHECK(report.issues[0].bound == doctest::Approx(6.0));
  CHECK(report.issues[0].required == doctest::Approx(0.0));

  const auto verts = dissip::enumerate_vertices(spec);
  CHECK(verts.size() == 8);  // 4 head leaves x 2 aux vertices
  // hull leaves may fall outside the buffer itself
  int outside = 0;
  for (const auto& v : verts)
    if (!spec.contains(v)) ++outside;
  CHECK(outside > 0);
}

TEST_CASE("convex hull membership via phase-1 simplex") {
  Eigen::MatrixXd tri(3, 2);
  tri << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  CHECK(dissip::in_convex_hull(tri, Eigen::Vector2d(0.25, 0.25)));
  CHECK(dissip::in_convex_hull(tri, Eigen::Vector2d(0.0, 0.0)));   // vertex
  CHECK(dissip::in_convex_hull(tri, Eigen::Vector2d(0.5, 0.5)));   // edge
  CHECK_FALSE(dissip::in_convex_hull(tri, Eigen::Vector2d(0.6, 0.6)));
  CHECK_FALSE(dissip::in_convex_hull(tri, Eigen::Vector2d(-0.1, 0.2)));
}

TEST_CASE("aux polytope boxes and explicit vertex lists") {
  AuxPolytope box = AuxPolytope::box(Eigen::Vector2d(-1.0, 0.0),
                                     Eigen::Vector2d(1.0, 2.0));
  CHECK(box.dim() == 2);
  CHECK(box.vertex_count() == 4);
  CHECK(box.contains(Eigen::Vector2d(0.0, 1.0), 0.0));
  CHECK_FALSE(box.contains(Eigen::Vector2d(0.0, 2.1), 1e-6));

  Eigen::MatrixXd tri(3, 2);
  tri << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  AuxPolytope poly = AuxPolytope::from_vertices(tri);
  CHECK_FALSE(poly.is_box);
  CHECK(poly.contains(Eigen::Vector2d(0.2, 0.2), 1e-9));
  CHECK_FALSE(poly.contains(Eigen::Vector2d(0.9, 0.9), 1e-9));

  CHECK_THROWS_AS(AuxPolytope::box(Eigen::Vector2d(1.0, 0.0),
                                   Eigen::Vector2d(-1.0, 2.0)),
                  dissip::BufferError);

  // dimension 0: single empty vertex
  AuxPolytope empty = AuxPolytope::box(Eigen::VectorXd(0), Eigen::VectorXd(0));
  CHECK(empty.dim() == 0);
  CHECK(empty.vertex_count() == 1);
}

TEST_CASE("vertex CSV rendering is stable") {
  BufferSpec spec = pendulum_spec();
  const auto verts = dissip::enumerate_vertices(spec);
  const std::string csv = dissip::vertices_to_csv(verts);
  CHECK(csv.substr(0, 15) == "s1, s2, s3, s4\n");
  CHECK(csv == dissip::vertices_to_csv(verts));  // deterministic
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);  // header + 12 rows
}
