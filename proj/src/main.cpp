#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "dissip/common.hpp"
#include "dissip/config.hpp"
#include "dissip/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;  // empty = use the config's out_dir
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "experiment config JSON")
      ->required();
  cmd->add_option("--seed", args.seed, "random seed (default 0)");
  cmd->add_option("--out", args.out,
                  "output directory (default: the config's out_dir)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dissipation buffers for high relative degree constraints: enumerate "
      "buffer vertices, train policies affine on the buffer, estimate the "
      "derivative approximation eps, certify vertex dissipation, and check "
      "rollouts against the analytic envelopes"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint;
  std::string eps_file;
  double eps_value = 0.0;
  int rollouts = -1;

  CLI::App* vertices = app.add_subcommand(
      "vertices", "enumerate the buffer vertices into vertices.csv");
  add_common(vertices, common);

  CLI::App* train = app.add_subcommand(
      "train", "train a policy per the config's train block");
  add_common(train, common);

  CLI::App* estimate = app.add_subcommand(
      "estimate-eps", "fit the derivative surrogate and write eps.json");
  add_common(estimate, common);
  estimate->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();

  CLI::App* verify = app.add_subcommand(
      "verify", "run the vertex dissipation certificate");
  add_common(verify, common);
  verify->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  verify->add_option("--eps-file", eps_file, "eps JSON from estimate-eps");
  CLI::Option* eps_opt =
      verify->add_option("--eps", eps_value, "explicit eps value");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "roll out the deployed policy and check trajectories");
  add_common(simulate, common);
  simulate->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  simulate->add_option("--rollouts", rollouts,
                       "number of rollouts (default: config simulate block)");

  CLI11_PARSE(app, argc, argv);

  try {
    const dissip::ExperimentConfig cfg =
        dissip::ExperimentConfig::from_file(common.config);
    const std::string out = common.out.empty() ? cfg.out_dir : common.out;

    if (vertices->parsed())
      return dissip::run_vertices(cfg, out, common.seed);
    if (train->parsed()) return dissip::run_train(cfg, out, common.seed);
    if (estimate->parsed())
      return dissip::run_estimate_eps(cfg, checkpoint, out, common.seed);
    if (verify->parsed()) {
      std::optional<double> eps_override;
      if (eps_opt->count() > 0) eps_override = eps_value;
      return dissip::run_verify(cfg, checkpoint, eps_file, eps_override, out,
                                common.seed);
    }
    if (simulate->parsed())
      return dissip::run_simulate(cfg, checkpoint, rollouts, out, common.seed);
    return 1;  // unreachable: a subcommand is required
  } catch (const dissip::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dissip::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
