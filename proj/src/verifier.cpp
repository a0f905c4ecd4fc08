#include "dissip/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dissip/common.hpp"

namespace dissip {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (long i = 0; i < m.rows(); ++i)
    rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

}  // namespace

double Certificate::min_margin() const {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& v : vertices)
    worst = std::min(worst, std::isfinite(v.margin) ? v.margin : -std::numeric_limits<double>::infinity());
  return worst;
}

nlohmann::json Certificate::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["env"] = env;
  j["beta"] = beta;
  j["eps"] = eps;
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : vertices) {
    nlohmann::json jv;
    jv["s"] = vector_to_json(v.s);
    jv["u"] = vector_to_json(v.u);
    jv["f_r"] = v.f_r;
    jv["threshold"] = v.threshold;
    jv["margin"] = v.margin;
    jv["pass"] = v.pass;
    if (!v.note.empty()) jv["note"] = v.note;
    vs.push_back(jv);
  }
  j["vertices"] = vs;
  j["verdict"] = pass ? "pass" : "fail";
  j["dtheta"] = matrix_to_json(dtheta);
  j["etheta"] = vector_to_json(etheta);
  nlohmann::json ns = nlohmann::json::array();
  for (const auto& note : notes) ns.push_back(note);
  char hash_buf[40];
  std::snprintf(hash_buf, sizeof(hash_buf), "policy_hash=%016llx",
                static_cast<unsigned long long>(policy_hash));
  ns.push_back(std::string(hash_buf));
  if (!approx.is_null()) ns.push_back(nlohmann::json{{"approx_measure", approx}});
  j["notes"] = ns;
  return j;
}

Certificate verify_dissipation(const Environment& env,
                               const RegionAffinePolicy& policy,
                               const BufferSpec& spec, double eps,
                               double delta) {
  spec.validate();
  if (eps < 0.0) throw BufferError("eps must be non-negative");
  if (!policy.enforced())
    throw NotAffineError("certificate requires an affine-enforced policy");
  if (spec.n() != policy.state_dim())
    throw ShapeError("buffer and policy state dimensions differ");

  Certificate cert;
  cert.env = env.id();
  cert.beta = spec.beta();
  cert.eps = eps;

  const std::vector<Eigen::VectorXd> verts = enumerate_vertices(spec);
  const int r = spec.r;
  bool all_pass = true;
  bool any_clamped = false;
  for (const Eigen::VectorXd& vert : verts) {
    VertexCheck chk;
    chk.s = vert;
    chk.u = policy.act(chk.s);
    chk.threshold = -2.0 * eps - cert.beta * chk.s(r - 1);
    const Eigen::VectorXd raw = policy.forward(chk.s);
    const bool clamped = (raw - chk.u).cwiseAbs().maxCoeff() > 0.0;
    try {
      chk.f_r = f_tilde_r(env, chk.s, chk.u, delta);
      chk.margin = chk.threshold - chk.f_r;
      chk.pass = chk.margin >= 0.0;
    } catch (const std::exception& e) {
      chk.f_r = kNan;
      chk.margin = kNan;
      chk.pass = false;
      chk.note = std::string("derivative undefined at vertex: ") + e.what();
    }
    if (clamped) {
      // outside the control box the applied control is no longer the affine
      // map the certificate extends over the buffer; the vertex keeps its
      // margin-based pass, the certificate as a whole is void
      any_clamped = true;
      if (!chk.note.empty()) chk.note += "; ";
      chk.note += "policy output leaves the control box";
    }
    all_pass = all_pass && chk.pass;
    cert.vertices.push_back(std::move(chk));
  }
  cert.pass = all_pass && !any_clamped;
  cert.policy_hash = policy.hash();
  if (any_clamped)
    cert.notes.push_back(
        "policy saturates the control box at one or more vertices; the affine "
        "extension argument does not apply there");

  try {
    auto [D, e] = policy.extract_affine_map();
    cert.dtheta = D;
    cert.etheta = e;
  } catch (const NotAffineError& err) {
    cert.pass = false;
    cert.dtheta = Eigen::MatrixXd::Zero(policy.control_dim(), policy.state_dim());
    cert.etheta = Eigen::VectorXd::Zero(policy.control_dim());
    cert.notes.push_back(std::string("affine extraction failed: ") + err.what());
  }
  return cert;
}

TrajectoryReport check_trajectory(const Trajectory& traj, const BufferSpec& spec,
                                  double strict_slack) {
  spec.validate();
  TrajectoryReport rep;
  const long steps = static_cast<long>(traj.states_s.size());
  const int r = spec.r;
  const long n = spec.n();

  // first sample inside the buffer and strictly below the upper bounds
  long entry = -1;
  for (long k = 0; k < steps; ++k) {
    const Eigen::VectorXd& s = traj.states_s[static_cast<std::size_t>(k)];
    if (s.size() != n) throw ShapeError("trajectory state dimension mismatch");
    if (spec.contains(s) && spec.strictly_below_upper(s)) {
      entry = k;
      break;
    }
  }
  if (entry < 0) return rep;
  rep.entered = true;
  rep.entry_index = static_cast<int>(entry);
  rep.t_entry = traj.times[static_cast<std::size_t>(entry)];

  const Eigen::VectorXd entry_coords =
      traj.states_s[static_cast<std::size_t>(entry)].head(r);
  const double beta = spec.beta();
  rep.max_envelope_excess_y = -std::numeric_limits<double>::infinity();
  rep.max_envelope_excess_deriv = -std::numeric_limits<double>::infinity();

  for (long k = entry; k < steps; ++k) {
    const Eigen::VectorXd& s = traj.states_s[static_cast<std::size_t>(k)];
    const double t = traj.times[static_cast<std::size_t>(k)];

    // window ends at the first lower-bound or aux exit (no claims past it)
    if (k > entry) {
      std::string reason;
      for (int i = 0; i < r && reason.empty(); ++i)
        if (s(i) < spec.lower_bounds(i)) reason = "floor";
      if (reason.empty() && spec.aux.dim() > 0 &&
          !spec.aux.contains(Eigen::VectorXd(s.tail(spec.aux.dim())), 0.0))
        reason = "aux";
      if (!reason.empty()) {
        rep.exit_index = static_cast<int>(k);
        rep.t_exit = t;
        rep.exit_reason = reason;
        break;
      }
    }

    const Eigen::VectorXd ub = spec.upper_bound(s);
    const double step_tol = 1e-6 * std::max(1.0, ub.cwiseAbs().maxCoeff());
    auto classify = [&](double overshoot, const std::string& what) {
      if (overshoot <= strict_slack) return;
      if (overshoot <= step_tol) {
        ++rep.tolerated_steps;
        rep.max_overshoot = std::max(rep.max_overshoot, overshoot);
        return;
      }
      rep.violations.push_back({static_cast<int>(k), t, what, overshoot});
    };

    classify(traj.outputs[static_cast<std::size_t>(k)] - spec.y_max, "output constraint");
    for (int i = 0; i < r; ++i)
      classify(s(i) - ub(i), "upper bound s" + std::to_string(i + 1));

    // analytic decay envelopes measured from the entry sample
    const double dt = t - rep.t_entry;
    const double decay = std::exp(-beta * dt);
    const double y_bound = (entry_coords(0) - spec.y_max) * decay + spec.y_max;
    const double env_tol = 1e-5 * std::max(1.0, std::abs(y_bound));
    rep.max_envelope_excess_y =
        std::max(rep.max_envelope_excess_y, s(0) - y_bound);
    classify(s(0) - y_bound - env_tol + strict_slack, "output envelope");
    for (int i = 1; i < r; ++i) {
      const double bound = entry_coords(i) * decay;
      rep.max_envelope_excess_deriv =
          std::max(rep.max_envelope_excess_deriv, s(i) - bound);
      classify(s(i) - bound - env_tol + strict_slack,
               "derivative envelope s" + std::to_string(i + 1));
    }
    ++rep.steps_checked;
  }
  if (rep.exit_index < 0) rep.exit_reason = "end";
  rep.ok = rep.violations.empty();
  return rep;
}

nlohmann::json TrajectoryReport::to_json() const {
  nlohmann::json j;
  j["entered"] = entered;
  j["entry_index"] = entry_index;
  j["t_entry"] = t_entry;
  j["exit_index"] = exit_index;
  j["t_exit"] = t_exit;
  j["exit_reason"] = exit_reason;
  j["steps_checked"] = steps_checked;
  j["tolerated_steps"] = tolerated_steps;
  j["max_overshoot"] = max_overshoot;
  j["max_envelope_excess_y"] = entered ? max_envelope_excess_y : 0.0;
  j["max_envelope_excess_deriv"] = entered ? max_envelope_excess_deriv : 0.0;
  j["ok"] = ok;
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : violations) {
    nlohmann::json jv;
    jv["index"] = v.index;
    jv["t"] = v.t;
    jv["what"] = v.what;
    jv["amount"] = v.amount;
    vs.push_back(jv);
  }
  j["violations"] = vs;
  return j;
}

Envelopes envelope_bounds(const Eigen::VectorXd& entry_coords, double y_max,
                          double beta, const Eigen::VectorXd& t_offsets) {
  if (entry_coords.size() < 1) throw ShapeError("entry coordinates are empty");
  if (beta <= 0.0) throw BufferError("beta must be positive");
  const long r = entry_coords.size();
  Envelopes env;
  env.t_offsets = t_offsets;
  env.y_bound.resize(t_offsets.size());
  env.deriv_bounds.resize(r - 1, t_offsets.size());
  for (long j = 0; j < t_offsets.size(); ++j) {
    if (t_offsets(j) < 0.0) throw BufferError("envelope offsets must be non-negative");
    const double decay = std::exp(-beta * t_offsets(j));
    env.y_bound(j) = (entry_coords(0) - y_max) * decay + y_max;
    for (long k = 1; k < r; ++k) env.deriv_bounds(k - 1, j) = entry_coords(k) * decay;
  }
  return env;
}

bool comparison_ode_check(double beta, const std::function<double(double)>& slack,
                          double z0, double horizon, double tol) {
  if (beta <= 0.0) throw BufferError("beta must be positive");
  if (horizon <= 0.0) throw BufferError("horizon must be positive");
  const double dt = std::min(0.01 / beta, horizon / 200.0);
  const long steps = static_cast<long>(std::ceil(horizon / dt));
  const double scaled_tol = tol * std::max(1.0, std::abs(z0));

  auto rhs = [&](double t, double z) { return -beta * z + slack(t); };
  double z = z0;
  double t = 0.0;
  for (long k = 0; k < steps; ++k) {
    const double h = std::min(dt, horizon - t);
    const double k1 = rhs(t, z);
    const double k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1);
    const double k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2);
    const double k4 = rhs(t + h, z + h * k3);
    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
    if (!std::isfinite(z)) throw IntegrationError("comparison system diverged");
    if (z > z0 * std::exp(-beta * t) + scaled_tol) return false;
  }
  return true;
}

double interior_dissipation_excess(const Environment& env, const PolicyFn& policy,
                                   const Trajectory& traj, const BufferSpec& spec,
                                   const TrajectoryReport& report, double delta) {
  if (!report.entered) throw BufferError("trajectory never entered the buffer");
  const int r = spec.r;
  const double beta = spec.beta();
  const long end = report.exit_index >= 0
                       ? report.exit_index
                       : static_cast<long>(traj.states_s.size());
  double worst = -std::numeric_limits<double>::infinity();
  for (long k = report.entry_index; k < end; ++k) {
    const Eigen::VectorXd& s = traj.states_s[static_cast<std::size_t>(k)];
    const Eigen::VectorXd u = env.clamp_control(policy(s));
    worst = std::max(worst, f_tilde_r(env, s, u, delta) + beta * s(r - 1));
  }
  return worst;
}

}  // namespace dissip
