#include "dissip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dissip/common.hpp"

namespace dissip {

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "baseline") return PolicyKind::kBaseline;
  if (name == "affine") return PolicyKind::kAffine;
  throw ConfigError("unknown policy kind '" + name +
                    "' (expected \"baseline\" or \"affine\")");
}

std::string policy_kind_name(PolicyKind kind) {
  return kind == PolicyKind::kBaseline ? "baseline" : "affine";
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (batch_steps < 1) throw ConfigError("train.batch_steps must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (minibatch < 1) throw ConfigError("train.minibatch must be >= 1");
  if (dt <= 0.0) throw ConfigError("train.dt must be positive");
  if (horizon < dt) throw ConfigError("train.horizon must cover at least one step");
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("train.gamma must lie in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0)
    throw ConfigError("train.gae_lambda must lie in [0, 1]");
  if (clip_ratio <= 0.0 || clip_ratio >= 1.0)
    throw ConfigError("train.clip_ratio must lie in (0, 1)");
  if (lr_policy <= 0.0 || lr_value <= 0.0)
    throw ConfigError("train learning rates must be positive");
  if (entropy_coef < 0.0) throw ConfigError("train.entropy_coef must be non-negative");
  if (penalty_weight < 0.0) throw ConfigError("train.penalty_weight must be non-negative");
  if (penalty_margin < 0.0) throw ConfigError("train.penalty_margin must be non-negative");
  if (eps_refresh_every < 1) throw ConfigError("train.eps_refresh_every must be >= 1");
  if (eps_cushion < 0.0) throw ConfigError("train.eps_cushion must be non-negative");
  if (hidden.empty() || value_hidden.empty())
    throw ConfigError("train networks need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train.hidden sizes must be positive");
  for (int h : value_hidden)
    if (h < 1) throw ConfigError("train.value_hidden sizes must be positive");
  if (init_log_std < -5.0 || init_log_std > 2.0)
    throw ConfigError("train.init_log_std must lie in [-5, 2]");
  if (value_scale <= 0.0) throw ConfigError("train.value_scale must be positive");
  if (polish_iters < 0) throw ConfigError("train.polish_iters must be non-negative");
  if (polish_lr <= 0.0) throw ConfigError("train.polish_lr must be positive");
  if (delta <= 0.0) throw ConfigError("train.delta must be positive");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be non-negative");
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "iter, return_mean, penalty, min_vertex_margin, eps\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iter);
    out += ", " + format_double(r.return_mean);
    out += ", " + format_double(r.penalty);
    out += ", " + format_double(r.min_vertex_margin);
    out += ", " + format_double(r.eps) + "\n";
  }
  return out;
}

namespace {

// penalty gradient through the control-box clamp: keep the component when
// the control is interior or the descent direction (-dPdu) points back in
double gated(double dPdu, double u, double lo, double hi) {
  if (u >= hi && dPdu < 0.0) return 0.0;
  if (u <= lo && dPdu > 0.0) return 0.0;
  return dPdu;
}

}  // namespace

double dissipation_penalty(const RegionAffinePolicy& policy,
                           const Eigen::MatrixXd& vertices,
                           const Environment& env, double eps, double beta,
                           double delta, double margin) {
  const int r = env.relative_degree();
  double total = 0.0;
  for (long i = 0; i < vertices.rows(); ++i) {
    const Eigen::VectorXd s = vertices.row(i).transpose();
    const Eigen::VectorXd u = policy.act(s);
    double f;
    try {
      f = f_tilde_r(env, s, u, delta);
    } catch (const DomainError&) {
      continue;  // the dynamics are undefined here; no policy can help
    } catch (const IntegrationError&) {
      continue;
    }
    const double hinge = f + 2.0 * eps + beta * s(r - 1) + margin;
    if (hinge > 0.0) total += hinge * hinge;
  }
  return total;
}

double dissipation_penalty_grad(const RegionAffinePolicy& policy,
                                const Eigen::MatrixXd& vertices,
                                const Environment& env, double eps, double beta,
                                GradTape& tape, double delta, double margin) {
  const int r = env.relative_degree();
  const long m = policy.control_dim();
  double total = 0.0;
  for (long i = 0; i < vertices.rows(); ++i) {
    const Eigen::VectorXd s = vertices.row(i).transpose();
    const Eigen::VectorXd u = policy.act(s);
    double f;
    try {
      f = f_tilde_r(env, s, u, delta);
    } catch (const DomainError&) {
      continue;
    } catch (const IntegrationError&) {
      continue;
    }
    const double hinge = f + 2.0 * eps + beta * s(r - 1) + margin;
    if (hinge <= 0.0) continue;
    total += hinge * hinge;

    Eigen::VectorXd dPdu = Eigen::VectorXd::Zero(m);
    for (long j = 0; j < m; ++j) {
      Eigen::VectorXd up = u, dn = u;
      up(j) += delta;
      dn(j) -= delta;
      double fu, fd;
      try {
        fu = f_tilde_r(env, s, up, delta);
        fd = f_tilde_r(env, s, dn, delta);
      } catch (const std::exception&) {
        continue;
      }
      const double g = 2.0 * hinge * (fu - fd) / (2.0 * delta);
      dPdu(j) = gated(g, u(j), policy.u_lo()(j), policy.u_hi()(j));
    }
    policy.backward_accum(s, dPdu, tape);
  }
  return total;
}

double min_vertex_margin(const RegionAffinePolicy& policy,
                         const Eigen::MatrixXd& vertices, const Environment& env,
                         double eps, double beta, double delta) {
  const int r = env.relative_degree();
  double worst = std::numeric_limits<double>::infinity();
  bool any = false;
  for (long i = 0; i < vertices.rows(); ++i) {
    const Eigen::VectorXd s = vertices.row(i).transpose();
    const Eigen::VectorXd u = policy.act(s);
    double f;
    try {
      f = f_tilde_r(env, s, u, delta);
    } catch (const std::exception&) {
      continue;
    }
    worst = std::min(worst, -2.0 * eps - beta * s(r - 1) - f);
    any = true;
  }
  return any ? worst : std::numeric_limits<double>::quiet_NaN();
}

Eigen::VectorXd gae(const std::vector<double>& rewards,
                    const std::vector<double>& values, double gamma,
                    double lambda) {
  if (values.size() != rewards.size() + 1)
    throw ShapeError("gae: values must have one trailing bootstrap entry");
  const long n = static_cast<long>(rewards.size());
  Eigen::VectorXd adv(n);
  double acc = 0.0;
  for (long i = n - 1; i >= 0; --i) {
    const double delta = rewards[static_cast<std::size_t>(i)] +
                         gamma * values[static_cast<std::size_t>(i + 1)] -
                         values[static_cast<std::size_t>(i)];
    acc = delta + gamma * lambda * acc;
    adv(i) = acc;
  }
  return adv;
}

double reward_pendulum(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (x.size() < 2 || u.size() < 1)
    throw ShapeError("reward_pendulum: state/control dimension mismatch");
  const double theta = x(1);
  return 1.0 - (theta / 0.2) * (theta / 0.2) - 0.01 * u(0) * u(0);
}

double reward_shuttle(double a, double a_prev, double h, double hdot,
                      bool final_step) {
  double r = -0.2 * std::abs(a - a_prev);
  if (final_step) r -= std::abs(h) + std::abs(hdot);
  return r;
}

namespace {

double dispatch_reward(const Environment& env, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u, double a_prev,
                       const Eigen::VectorXd& x_next, bool next_valid,
                       bool final_step) {
  if (env.id() == "cartpole") return reward_pendulum(x, u);
  if (env.id() == "shuttle") {
    // episodes ending in an invalid state score the handoff at the last
    // valid state (same terminal formula, so stalling out is penalized)
    const Eigen::VectorXd& xe = next_valid ? x_next : x;
    const double h = xe(0);
    const double hdot = xe(2) * std::sin(xe(1));
    return reward_shuttle(u(0), a_prev, h, hdot, final_step);
  }
  // generic regulation objective for test systems
  return -x(x.size() - 1) * x(x.size() - 1) - 0.01 * u.squaredNorm();
}

struct StepSample {
  Eigen::VectorXd s;
  Eigen::VectorXd a;   // sampled (unclamped) action
  double logp = 0.0;
  double reward = 0.0;
  double value = 0.0;
};

}  // namespace

TrainResult train(const Environment& env, const BufferSpec& spec,
                  const TrainConfig& cfg, std::uint64_t seed,
                  const TrainCallback& callback) {
  cfg.validate();
  spec.validate();
  if (spec.r != env.relative_degree())
    throw ConfigError("buffer relative degree does not match the environment");
  if (spec.n() != env.state_dim())
    throw ConfigError("buffer dimension does not match the environment");

  const long n = spec.n();
  const long m = env.control_dim();
  const double beta = spec.beta();
  const std::vector<Eigen::VectorXd> vert_list = enumerate_vertices(spec);
  Eigen::MatrixXd verts(static_cast<long>(vert_list.size()), n);
  for (std::size_t i = 0; i < vert_list.size(); ++i)
    verts.row(static_cast<long>(i)) = vert_list[i];
  const bool affine = cfg.kind == PolicyKind::kAffine;

  Rng rng(seed);

  // actor: control mean over transformed coordinates; critic: scaled return
  std::vector<int> pdims, vdims;
  pdims.push_back(static_cast<int>(n));
  for (int h : cfg.hidden) pdims.push_back(h);
  pdims.push_back(static_cast<int>(m));
  vdims.push_back(static_cast<int>(n));
  for (int h : cfg.value_hidden) vdims.push_back(h);
  vdims.push_back(1);

  Mlp pnet(pdims, rng);
  Mlp vnet(vdims, rng);
  auto [mu, sigma] = region_normalization(verts);

  TrainResult result;
  result.policy = affine ? RegionAffinePolicy::make_enforced(
                               pnet, verts, mu, sigma, env.u_min(), env.u_max())
                         : RegionAffinePolicy(pnet, mu, sigma, env.u_min(),
                                              env.u_max());
  result.log_std = Eigen::VectorXd::Constant(m, cfg.init_log_std);
  result.value_net = std::move(vnet);

  RegionAffinePolicy& policy = result.policy;
  Eigen::VectorXd& log_std = result.log_std;
  Mlp& value_net = result.value_net;

  Adam adam_policy(policy.net(), cfg.lr_policy);
  Adam adam_value(value_net, cfg.lr_value);
  AdamVec adam_logstd(static_cast<int>(m), cfg.lr_policy);

  auto normalize = [&](const Eigen::VectorXd& s) -> Eigen::VectorXd {
    return (s - mu).cwiseQuotient(sigma);
  };
  auto value_of = [&](const Eigen::VectorXd& s) {
    return value_net.forward(normalize(s))(0) * cfg.value_scale;
  };

  const long steps_per_ep = std::max<long>(1, std::llround(cfg.horizon / cfg.dt));
  const double half_log_2pi = 0.5 * std::log(2.0 * std::acos(-1.0));

  auto log_density = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& mean) {
    double lp = 0.0;
    for (long j = 0; j < m; ++j) {
      const double sd = std::exp(log_std(j));
      const double z = (a(j) - mean(j)) / sd;
      lp += -0.5 * z * z - log_std(j) - half_log_2pi;
    }
    return lp;
  };

  // episode state persists across iteration boundaries
  Eigen::VectorXd x = env.sample_initial(rng);
  long ep_steps = 0;
  double ep_return = 0.0;
  double a_prev = 0.0;
  bool have_prev = false;

  double eps_train = 0.0;
  double last_return_mean = 0.0;
  const std::uint64_t eps_seed_base = seed ^ 0x517cc1b727220a95ull;

  std::vector<StepSample> steps(static_cast<std::size_t>(cfg.batch_steps));
  std::vector<double> seg_rewards, seg_values;
  std::vector<int> order(static_cast<std::size_t>(cfg.batch_steps));

  auto refresh_eps = [&](int iter, bool with_holdout) {
    ApproxOptions opt = cfg.approx;
    opt.seed = eps_seed_base + static_cast<std::uint64_t>(iter);
    if (!with_holdout) opt.holdout_factor = 0;
    auto samples = sample_buffer(spec, opt.sample_count, opt.seed);
    PolicyFn deployed = policy.as_policy_fn();
    return fit_affine(samples, deployed, env, opt, spec);
  };

  for (int iter = 0; iter < cfg.iterations && !result.diverged; ++iter) {
    if (affine && iter % cfg.eps_refresh_every == 0) {
      result.eps_measure = refresh_eps(iter, false);
      eps_train = result.eps_measure.eps + cfg.eps_cushion;
    }

    // ---- collect one batch -------------------------------------------
    Eigen::VectorXd adv_all(cfg.batch_steps);
    Eigen::VectorXd ret_all(cfg.batch_steps);
    std::vector<double> completed;
    long seg_start = 0;
    seg_rewards.clear();
    seg_values.clear();

    auto close_segment = [&](long end, double bootstrap) {
      seg_values.push_back(bootstrap);
      Eigen::VectorXd adv = gae(seg_rewards, seg_values, cfg.gamma, cfg.gae_lambda);
      for (long i = seg_start; i < end; ++i) {
        adv_all(i) = adv(i - seg_start);
        ret_all(i) = adv(i - seg_start) + steps[static_cast<std::size_t>(i)].value;
      }
      seg_start = end;
      seg_rewards.clear();
      seg_values.clear();
    };

    for (long b = 0; b < cfg.batch_steps; ++b) {
      StepSample& smp = steps[static_cast<std::size_t>(b)];
      smp.s = env.to_s(x);
      const Eigen::VectorXd mean = policy.forward(smp.s);
      smp.a.resize(m);
      for (long j = 0; j < m; ++j)
        smp.a(j) = mean(j) + std::exp(log_std(j)) * rng.normal();
      smp.logp = log_density(smp.a, mean);
      smp.value = value_of(smp.s);
      const Eigen::VectorXd u = env.clamp_control(smp.a);

      Eigen::VectorXd x_next;
      bool step_fail = false;
      try {
        x_next = rk4_step(env, x, u, cfg.dt);
      } catch (const std::exception&) {
        step_fail = true;
      }
      const bool terminal = step_fail || env.terminal(x_next);
      ++ep_steps;
      const bool truncated = !terminal && ep_steps >= steps_per_ep;

      smp.reward = dispatch_reward(env, x, u, have_prev ? a_prev : u(0), x_next,
                                   !step_fail, terminal);
      a_prev = u(0);
      have_prev = true;
      ep_return += smp.reward;
      seg_rewards.push_back(smp.reward);
      seg_values.push_back(smp.value);

      if (terminal || truncated) {
        const double bootstrap =
            terminal ? 0.0 : value_of(env.to_s(x_next));
        close_segment(b + 1, bootstrap);
        completed.push_back(ep_return);
        x = env.sample_initial(rng);
        ep_steps = 0;
        ep_return = 0.0;
        have_prev = false;
      } else {
        x = x_next;
        if (b + 1 == cfg.batch_steps)
          close_segment(b + 1, value_of(env.to_s(x)));
      }
    }

    // advantage normalization (population statistics, fixed order)
    const double adv_mean = adv_all.mean();
    const double adv_std =
        std::sqrt((adv_all.array() - adv_mean).square().sum() /
                  static_cast<double>(cfg.batch_steps));
    Eigen::VectorXd adv_n = (adv_all.array() - adv_mean) / (adv_std + 1e-8);

    // ---- PPO updates ---------------------------------------------------
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
      rng.shuffle(order);
      for (long start = 0; start < cfg.batch_steps && !result.diverged;
           start += cfg.minibatch) {
        const long count = std::min<long>(cfg.minibatch, cfg.batch_steps - start);
        GradTape ptape = policy.net().zero_tape();
        Eigen::VectorXd g_logstd = Eigen::VectorXd::Zero(m);

        for (long k = start; k < start + count; ++k) {
          const StepSample& smp = steps[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
          const double A = adv_n(order[static_cast<std::size_t>(k)]);
          const Eigen::VectorXd mean = policy.forward(smp.s);
          const double ratio = std::exp(log_density(smp.a, mean) - smp.logp);
          const double clipped =
              std::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
          if (ratio * A > clipped * A) continue;  // clipped branch: no gradient
          const double coef = -A * ratio / static_cast<double>(count);
          Eigen::VectorXd dmean(m);
          for (long j = 0; j < m; ++j) {
            const double sd = std::exp(log_std(j));
            const double diff = smp.a(j) - mean(j);
            dmean(j) = coef * diff / (sd * sd);
            g_logstd(j) += coef * (diff * diff / (sd * sd) - 1.0);
          }
          policy.backward_accum(smp.s, dmean, ptape);
        }
        g_logstd.array() -= cfg.entropy_coef;  // entropy bonus on the log-std

        if (affine && cfg.penalty_weight > 0.0) {
          GradTape pen_tape = policy.net().zero_tape();
          dissipation_penalty_grad(policy, verts, env, eps_train, beta,
                                   pen_tape, cfg.delta, cfg.penalty_margin);
          pen_tape *= cfg.penalty_weight;
          ptape += pen_tape;
        }

        try {
          adam_policy.step(policy.net(), ptape);
          adam_logstd.step(log_std, g_logstd);
        } catch (const TrainingError& e) {
          result.diverged = true;
          result.divergence_note = e.what();
          break;
        }
        for (long j = 0; j < m; ++j) log_std(j) = std::clamp(log_std(j), -5.0, 2.0);
        if (affine) policy.reenforce();

        GradTape vtape = value_net.zero_tape();
        for (long k = start; k < start + count; ++k) {
          const int idx = order[static_cast<std::size_t>(k)];
          const StepSample& smp = steps[static_cast<std::size_t>(idx)];
          const Eigen::VectorXd nobs = normalize(smp.s);
          const double v = value_net.forward(nobs)(0);
          Eigen::VectorXd upstream(1);
          upstream(0) = (v - ret_all(idx) / cfg.value_scale) /
                        static_cast<double>(count);
          value_net.backward_accum(nobs, upstream, vtape);
        }
        try {
          adam_value.step(value_net, vtape);
        } catch (const TrainingError& e) {
          result.diverged = true;
          result.divergence_note = e.what();
        }
      }
    }

    // ---- per-iteration log ---------------------------------------------
    if (!completed.empty())
      last_return_mean =
          std::accumulate(completed.begin(), completed.end(), 0.0) /
          static_cast<double>(completed.size());
    TrainLogRow row;
    row.iter = iter;
    row.return_mean = last_return_mean;
    row.penalty = affine ? dissipation_penalty(policy, verts, env, eps_train,
                                               beta, cfg.delta,
                                               cfg.penalty_margin)
                         : 0.0;
    row.min_vertex_margin =
        min_vertex_margin(policy, verts, env, affine ? eps_train : 0.0, beta,
                          cfg.delta);
    row.eps = eps_train;
    result.log.push_back(row);
    if (callback) callback(iter, policy, log_std, value_net);
  }

  // ---- final eps estimate and certificate polish -----------------------
  if (affine && !result.diverged) {
    result.eps_measure = refresh_eps(cfg.iterations, true);
    result.eps = result.eps_measure.eps;
    if (cfg.polish_iters > 0) {
      Adam adam_polish(policy.net(), cfg.polish_lr);
      for (int k = 0; k < cfg.polish_iters; ++k) {
        GradTape tape = policy.net().zero_tape();
        const double pen = dissipation_penalty_grad(
            policy, verts, env, result.eps, beta, tape, cfg.delta,
            cfg.penalty_margin + cfg.eps_cushion);
        if (pen == 0.0) break;
        try {
          adam_polish.step(policy.net(), tape);
        } catch (const TrainingError& e) {
          result.diverged = true;
          result.divergence_note = e.what();
          break;
        }
        policy.reenforce();
      }
      // the polish moved the policy, so the measure must be refreshed
      result.eps_measure = refresh_eps(cfg.iterations + 1, true);
      result.eps = result.eps_measure.eps;
    }
  }
  return result;
}

}  // namespace dissip
