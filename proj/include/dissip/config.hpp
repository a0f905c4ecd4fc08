#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>

#include "dissip/approx.hpp"
#include "dissip/buffer.hpp"
#include "dissip/environment.hpp"
#include "dissip/trainer.hpp"

namespace dissip {

/**
 * Parsed experiment description: the system, its dissipation buffer, and the
 * training / estimation / simulation settings. Unknown keys anywhere in the
 * file are rejected (a typo must fail loudly, not fall back to a default).
 */
struct ExperimentConfig {
  // environment block
  std::string env_id;  // empty when the config only describes a buffer
  double dt = 0.01;
  double horizon = 10.0;
  CartPoleParams cartpole;
  ShuttleParams shuttle;
  DoubleIntegratorParams double_integrator;

  // buffer block
  BufferSpec buffer;

  // train block (dt/horizon copied from the environment block)
  TrainConfig train;

  // eps block, reused for training-time refreshes and standalone estimation
  ApproxOptions eps;
  bool eps_seed_pinned = false;  // config fixed its own eps seed

  // simulate block
  int rollouts = 100;

  std::string out_dir = "out";
  std::uint64_t source_hash = 0;  // FNV-1a over the raw config bytes

  static ExperimentConfig from_json(const nlohmann::json& j);

  /** Reads, hashes, and parses a config file; throws ConfigError. */
  static ExperimentConfig from_file(const std::string& path);

  /** Instantiates the configured environment; throws ConfigError when the
   * config has no environment block or names an unknown system. */
  std::unique_ptr<Environment> make_environment() const;

  /** Returns the buffer spec after checking it fits the environment's
   * relative degree and state dimension. */
  BufferSpec make_buffer(const Environment& env) const;
};

}  // namespace dissip
