#pragma once

#include <optional>
#include <string>

#include "dissip/config.hpp"

namespace dissip {

inline constexpr const char* kToolVersion = "0.1.0";

/**
 * Command implementations behind the CLI. Each writes its artifacts under
 * `out_dir` plus a `manifest.json` (sorted keys, no timestamps — the wall
 * clock goes to a `manifest.timestamp` side file) and returns the process
 * exit code. Given (config, seed) every artifact is byte-identical across
 * reruns.
 */

/** Enumerates the buffer vertices into vertices.csv; prints the count and,
 * when the lower bounds are tight, the Fibonacci prediction. */
int run_vertices(const ExperimentConfig& cfg, const std::string& out_dir,
                 std::uint64_t seed);

/** Trains per the config; writes checkpoint.bin, train_log.csv and, for the
 * affine kind, eps.json. Divergence still writes artifacts but exits 1. */
int run_train(const ExperimentConfig& cfg, const std::string& out_dir,
              std::uint64_t seed);

/** Fits the derivative surrogate for a trained policy into eps.json. */
int run_estimate_eps(const ExperimentConfig& cfg,
                     const std::string& checkpoint_path,
                     const std::string& out_dir, std::uint64_t seed);

/** Runs the vertex dissipation certificate into certificate.json. eps comes
 * from `eps_override` when set, else from the eps JSON file. Exits 0 for
 * both verdicts — completing verification is success. */
int run_verify(const ExperimentConfig& cfg, const std::string& checkpoint_path,
               const std::string& eps_file, std::optional<double> eps_override,
               const std::string& out_dir, std::uint64_t seed);

/** Rolls out the deployed policy from seeded initial states; writes per-
 * rollout trajectory and phase CSVs, a rollout summary CSV, a violations
 * CSV, and report.json. */
int run_simulate(const ExperimentConfig& cfg,
                 const std::string& checkpoint_path, int rollouts,
                 const std::string& out_dir, std::uint64_t seed);

}  // namespace dissip
