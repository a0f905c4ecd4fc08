#pragma once

#include <string>

#include "dissip/affine_policy.hpp"
#include "dissip/environment.hpp"
#include "dissip/mlp.hpp"
#include "dissip/trainer.hpp"

namespace dissip {

/** Everything needed to resume evaluation of a trained policy. */
struct Checkpoint {
  std::string env_id;
  PolicyKind kind = PolicyKind::kAffine;
  RegionAffinePolicy policy;
  Eigen::VectorXd log_std;
  Mlp value_net;

  /** Binary round-trip is bit-exact; an integrity hash guards the payload. */
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  /** Throws CheckpointError when the checkpoint does not fit `env`. */
  void require_compatible(const Environment& env) const;
};

}  // namespace dissip
