#include "dissip/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dissip/common.hpp"

namespace dissip {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& block,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: '" + block + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key))
      throw ConfigError("config: unknown key '" + block + "." + key + "'");
}

double get_num(const json& j, const std::string& block, const char* key,
               double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw ConfigError("config: '" + block + "." + key + "' must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const std::string& block, const char* key,
            int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer())
    throw ConfigError("config: '" + block + "." + key + "' must be an integer");
  return j[key].get<int>();
}

std::string get_str(const json& j, const std::string& block, const char* key,
                    const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string())
    throw ConfigError("config: '" + block + "." + key + "' must be a string");
  return j[key].get<std::string>();
}

Eigen::VectorXd get_vec(const json& j, const std::string& block,
                        const char* key, const Eigen::VectorXd& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array())
    throw ConfigError("config: '" + block + "." + key +
                      "' must be an array of numbers");
  Eigen::VectorXd v(j[key].size());
  Eigen::Index i = 0;
  for (const auto& e : j[key]) {
    if (!e.is_number())
      throw ConfigError("config: '" + block + "." + key +
                        "' must be an array of numbers");
    v(i++) = e.get<double>();
  }
  return v;
}

std::vector<int> get_ints(const json& j, const std::string& block,
                          const char* key, std::vector<int> fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array())
    throw ConfigError("config: '" + block + "." + key +
                      "' must be an array of integers");
  std::vector<int> v;
  for (const auto& e : j[key]) {
    if (!e.is_number_integer())
      throw ConfigError("config: '" + block + "." + key +
                        "' must be an array of integers");
    v.push_back(e.get<int>());
  }
  return v;
}

void parse_environment(const json& j, ExperimentConfig& cfg) {
  check_keys(j, "environment", {"id", "dt", "horizon", "params"});
  cfg.env_id = get_str(j, "environment", "id", "");
  if (cfg.env_id.empty())
    throw ConfigError("config: 'environment.id' is required");
  cfg.dt = get_num(j, "environment", "dt", cfg.dt);
  cfg.horizon = get_num(j, "environment", "horizon", cfg.horizon);
  if (!(cfg.dt > 0.0)) throw ConfigError("config: 'environment.dt' must be > 0");
  if (!(cfg.horizon > 0.0))
    throw ConfigError("config: 'environment.horizon' must be > 0");

  const json params = j.contains("params") ? j["params"] : json::object();
  const std::string blk = "environment.params";
  if (cfg.env_id == "cartpole") {
    check_keys(params, blk,
               {"cart_mass", "pole_mass", "half_length", "gravity", "force_max",
                "init_lo", "init_hi"});
    auto& p = cfg.cartpole;
    p.cart_mass = get_num(params, blk, "cart_mass", p.cart_mass);
    p.pole_mass = get_num(params, blk, "pole_mass", p.pole_mass);
    p.half_length = get_num(params, blk, "half_length", p.half_length);
    p.gravity = get_num(params, blk, "gravity", p.gravity);
    p.force_max = get_num(params, blk, "force_max", p.force_max);
    Eigen::VectorXd lo = get_vec(params, blk, "init_lo", p.init_lo);
    Eigen::VectorXd hi = get_vec(params, blk, "init_hi", p.init_hi);
    if (lo.size() != 4 || hi.size() != 4)
      throw ConfigError("config: cartpole init bounds must have length 4");
    p.init_lo = lo;
    p.init_hi = hi;
  } else if (cfg.env_id == "shuttle") {
    check_keys(params, blk,
               {"S_over_m", "C_L0", "C_D0", "K", "rho0", "g", "H", "alpha_min",
                "alpha_max", "h0", "v0_min", "v0_max", "gamma0_min",
                "gamma0_max"});
    auto& p = cfg.shuttle;
    p.S_over_m = get_num(params, blk, "S_over_m", p.S_over_m);
    p.C_L0 = get_num(params, blk, "C_L0", p.C_L0);
    p.C_D0 = get_num(params, blk, "C_D0", p.C_D0);
    p.K = get_num(params, blk, "K", p.K);
    p.rho0 = get_num(params, blk, "rho0", p.rho0);
    p.g = get_num(params, blk, "g", p.g);
    p.H = get_num(params, blk, "H", p.H);
    p.alpha_min = get_num(params, blk, "alpha_min", p.alpha_min);
    p.alpha_max = get_num(params, blk, "alpha_max", p.alpha_max);
    p.h0 = get_num(params, blk, "h0", p.h0);
    p.v0_min = get_num(params, blk, "v0_min", p.v0_min);
    p.v0_max = get_num(params, blk, "v0_max", p.v0_max);
    p.gamma0_min = get_num(params, blk, "gamma0_min", p.gamma0_min);
    p.gamma0_max = get_num(params, blk, "gamma0_max", p.gamma0_max);
  } else if (cfg.env_id == "double_integrator") {
    check_keys(params, blk, {"u_max", "init_lo", "init_hi"});
    auto& p = cfg.double_integrator;
    p.u_max = get_num(params, blk, "u_max", p.u_max);
    Eigen::VectorXd lo = get_vec(params, blk, "init_lo", p.init_lo);
    Eigen::VectorXd hi = get_vec(params, blk, "init_hi", p.init_hi);
    if (lo.size() != 2 || hi.size() != 2)
      throw ConfigError(
          "config: double_integrator init bounds must have length 2");
    p.init_lo = lo;
    p.init_hi = hi;
  } else {
    throw ConfigError("config: unknown environment id '" + cfg.env_id + "'");
  }
}

void parse_buffer(const json& j, ExperimentConfig& cfg) {
  check_keys(j, "buffer",
             {"r", "y_min", "y_max", "ydot_max", "lower_bounds", "aux"});
  BufferSpec& spec = cfg.buffer;
  spec.r = get_int(j, "buffer", "r", 2);
  spec.y_min = get_num(j, "buffer", "y_min", 0.0);
  spec.y_max = get_num(j, "buffer", "y_max", 1.0);
  spec.ydot_max = get_num(j, "buffer", "ydot_max", 1.0);
  if (j.contains("lower_bounds")) {
    spec.lower_bounds = get_vec(j, "buffer", "lower_bounds", Eigen::VectorXd());
  } else if (spec.r >= 2) {
    const double beta = spec.ydot_max / (spec.y_max - spec.y_min);
    spec.lower_bounds =
        tight_lower_bounds(spec.r, spec.y_min, beta, spec.ydot_max);
  }
  Eigen::VectorXd aux_lo(0), aux_hi(0);
  if (j.contains("aux")) {
    check_keys(j["aux"], "buffer.aux", {"lo", "hi"});
    aux_lo = get_vec(j["aux"], "buffer.aux", "lo", aux_lo);
    aux_hi = get_vec(j["aux"], "buffer.aux", "hi", aux_hi);
  }
  try {
    spec.aux = AuxPolytope::box(aux_lo, aux_hi);
    spec.validate();
  } catch (const BufferError& e) {
    throw ConfigError(std::string("config: invalid buffer: ") + e.what());
  }
}

void parse_train(const json& j, ExperimentConfig& cfg) {
  check_keys(j, "train",
             {"kind", "iterations", "batch_steps", "epochs", "minibatch",
              "gamma", "gae_lambda", "clip_ratio", "lr_policy", "lr_value",
              "entropy_coef", "penalty_weight", "penalty_margin",
              "eps_refresh_every", "eps_cushion", "hidden", "value_hidden",
              "init_log_std", "value_scale", "polish_iters", "polish_lr",
              "checkpoint_every"});
  TrainConfig& t = cfg.train;
  const std::string kind = get_str(j, "train", "kind", "affine");
  try {
    t.kind = policy_kind_from_string(kind);
  } catch (const ConfigError&) {
    throw ConfigError("config: 'train.kind' must be \"affine\" or \"baseline\"");
  }
  t.iterations = get_int(j, "train", "iterations", t.iterations);
  t.batch_steps = get_int(j, "train", "batch_steps", t.batch_steps);
  t.epochs = get_int(j, "train", "epochs", t.epochs);
  t.minibatch = get_int(j, "train", "minibatch", t.minibatch);
  t.gamma = get_num(j, "train", "gamma", t.gamma);
  t.gae_lambda = get_num(j, "train", "gae_lambda", t.gae_lambda);
  t.clip_ratio = get_num(j, "train", "clip_ratio", t.clip_ratio);
  t.lr_policy = get_num(j, "train", "lr_policy", t.lr_policy);
  t.lr_value = get_num(j, "train", "lr_value", t.lr_value);
  t.entropy_coef = get_num(j, "train", "entropy_coef", t.entropy_coef);
  t.penalty_weight = get_num(j, "train", "penalty_weight", t.penalty_weight);
  t.penalty_margin = get_num(j, "train", "penalty_margin", t.penalty_margin);
  t.eps_refresh_every =
      get_int(j, "train", "eps_refresh_every", t.eps_refresh_every);
  t.eps_cushion = get_num(j, "train", "eps_cushion", t.eps_cushion);
  t.hidden = get_ints(j, "train", "hidden", t.hidden);
  t.value_hidden = get_ints(j, "train", "value_hidden", t.value_hidden);
  t.init_log_std = get_num(j, "train", "init_log_std", t.init_log_std);
  t.value_scale = get_num(j, "train", "value_scale", t.value_scale);
  t.polish_iters = get_int(j, "train", "polish_iters", t.polish_iters);
  t.polish_lr = get_num(j, "train", "polish_lr", t.polish_lr);
  t.checkpoint_every =
      get_int(j, "train", "checkpoint_every", t.checkpoint_every);
}

void parse_eps(const json& j, ExperimentConfig& cfg) {
  check_keys(j, "eps",
             {"sample_count", "inflation", "abs_margin", "holdout_factor",
              "delta", "seed"});
  ApproxOptions& o = cfg.eps;
  o.sample_count = get_int(j, "eps", "sample_count", o.sample_count);
  o.inflation = get_num(j, "eps", "inflation", o.inflation);
  o.abs_margin = get_num(j, "eps", "abs_margin", o.abs_margin);
  o.holdout_factor = get_int(j, "eps", "holdout_factor", o.holdout_factor);
  o.delta = get_num(j, "eps", "delta", o.delta);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer())
      throw ConfigError("config: 'eps.seed' must be an integer");
    o.seed = j["seed"].get<std::uint64_t>();
    cfg.eps_seed_pinned = true;
  }
  if (o.sample_count < 0)
    throw ConfigError("config: 'eps.sample_count' must be >= 0");
  if (!(o.inflation >= 1.0))
    throw ConfigError("config: 'eps.inflation' must be >= 1");
  if (o.abs_margin < 0.0)
    throw ConfigError("config: 'eps.abs_margin' must be >= 0");
  if (o.holdout_factor < 0)
    throw ConfigError("config: 'eps.holdout_factor' must be >= 0");
  if (!(o.delta > 0.0)) throw ConfigError("config: 'eps.delta' must be > 0");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  check_keys(j, "<root>",
             {"environment", "buffer", "train", "eps", "simulate", "out_dir"});
  if (!j.contains("buffer"))
    throw ConfigError("config: 'buffer' block is required");
  parse_buffer(j["buffer"], cfg);
  if (j.contains("environment")) parse_environment(j["environment"], cfg);
  if (j.contains("train")) parse_train(j["train"], cfg);
  if (j.contains("eps")) parse_eps(j["eps"], cfg);
  if (j.contains("simulate")) {
    check_keys(j["simulate"], "simulate", {"rollouts"});
    cfg.rollouts = get_int(j["simulate"], "simulate", "rollouts", cfg.rollouts);
    if (cfg.rollouts < 0)
      throw ConfigError("config: 'simulate.rollouts' must be >= 0");
  }
  cfg.out_dir = get_str(j, "<root>", "out_dir", cfg.out_dir);

  cfg.train.dt = cfg.dt;
  cfg.train.horizon = cfg.horizon;
  cfg.train.approx = cfg.eps;
  try {
    cfg.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: invalid train block: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  ExperimentConfig cfg = from_json(j);
  cfg.source_hash = fnv1a64(text.data(), text.size());
  return cfg;
}

std::unique_ptr<Environment> ExperimentConfig::make_environment() const {
  if (env_id.empty())
    throw ConfigError("config: this command needs an 'environment' block");
  if (env_id == "cartpole") return make_cartpole(cartpole);
  if (env_id == "shuttle") return make_shuttle(shuttle);
  if (env_id == "double_integrator")
    return make_double_integrator(double_integrator);
  throw ConfigError("config: unknown environment id '" + env_id + "'");
}

BufferSpec ExperimentConfig::make_buffer(const Environment& env) const {
  if (buffer.r != env.relative_degree())
    throw ConfigError("config: buffer r=" + std::to_string(buffer.r) +
                      " does not match the environment's relative degree " +
                      std::to_string(env.relative_degree()));
  if (buffer.n() != env.state_dim())
    throw ConfigError(
        "config: buffer dimension r + aux = " + std::to_string(buffer.n()) +
        " does not match the environment's state dimension " +
        std::to_string(env.state_dim()));
  return buffer;
}

}  // namespace dissip
