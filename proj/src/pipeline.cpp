#include "dissip/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "dissip/approx.hpp"
#include "dissip/buffer.hpp"
#include "dissip/checkpoint.hpp"
#include "dissip/common.hpp"
#include "dissip/verifier.hpp"

namespace dissip {

namespace {

namespace fs = std::filesystem;

/**
 * Collects everything a command writes under the output directory and seals
 * the run with a manifest. The manifest itself carries no wall-clock state;
 * the timestamp goes to a side file so reruns stay byte-identical.
 */
class ArtifactSink {
 public:
  ArtifactSink(std::string out_dir, std::string command,
               const ExperimentConfig& cfg, std::uint64_t seed)
      : dir_(std::move(out_dir)),
        command_(std::move(command)),
        config_hash_(cfg.source_hash),
        seed_(seed) {
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const {
    return (fs::path(dir_) / name).string();
  }

  void record(const std::string& name) { names_.push_back(name); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open '" + path(name) + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write to '" + path(name) + "' failed");
    record(name);
  }

  void finish() {
    std::sort(names_.begin(), names_.end());
    nlohmann::json m;
    m["artifacts"] = names_;
    m["command"] = command_;
    m["config_hash"] = hex64(config_hash_);
    m["seed"] = seed_;
    m["version"] = kToolVersion;
    std::ofstream out(path("manifest.json"), std::ios::binary | std::ios::trunc);
    out << m.dump(2) << "\n";

    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    std::ofstream ts(path("manifest.timestamp"),
                     std::ios::binary | std::ios::trunc);
    ts << buf << "\n";
  }

 private:
  std::string dir_;
  std::string command_;
  std::uint64_t config_hash_;
  std::uint64_t seed_;
  std::vector<std::string> names_;
};

std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string rollout_file(const char* stem, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_%04d.csv", stem, index);
  return buf;
}

}  // namespace

int run_vertices(const ExperimentConfig& cfg, const std::string& out_dir,
                 std::uint64_t seed) {
  const BufferSpec& spec = cfg.buffer;
  spec.validate();
  ArtifactSink sink(out_dir, "vertices", cfg, seed);

  const std::vector<Eigen::VectorXd> verts = enumerate_vertices(spec);
  sink.write("vertices.csv", vertices_to_csv(verts));

  std::cout << "vertices: " << verts.size() << "\n";
  if (lower_bounds_tight(spec)) {
    const long long head = fibonacci_vertex_count(spec.r);
    std::cout << "tight lower bounds: predicted F_" << (spec.r + 2) << " * "
              << spec.aux.vertex_count() << " = "
              << head * spec.aux.vertex_count() << "\n";
  } else {
    std::cout << "lower bounds not tight: Fibonacci prediction not applicable\n";
  }
  const LowerBoundReport report = validate_lower_bounds(spec);
  for (const auto& issue : report.issues)
    std::cout << "warning: lower bound " << issue.index << " = "
              << format_double(issue.bound)
              << " exceeds the reachable minimum "
              << format_double(issue.required) << " (" << issue.family
              << "); trajectories may exit through this floor\n";
  sink.finish();
  return 0;
}

int run_train(const ExperimentConfig& cfg, const std::string& out_dir,
              std::uint64_t seed) {
  auto env = cfg.make_environment();
  const BufferSpec spec = cfg.make_buffer(*env);
  const TrainConfig& tc = cfg.train;
  ArtifactSink sink(out_dir, "train", cfg, seed);

  TrainCallback callback;
  if (tc.checkpoint_every > 0) {
    callback = [&](int iter, const RegionAffinePolicy& policy,
                   const Eigen::VectorXd& log_std, const Mlp& value_net) {
      if ((iter + 1) % tc.checkpoint_every != 0) return;
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_%04d.bin", iter + 1);
      Checkpoint ck{env->id(), tc.kind, policy, log_std, value_net};
      ck.save(sink.path(name));
      sink.record(name);
    };
  }

  TrainResult result = train(*env, spec, tc, seed, callback);

  Checkpoint final_ck{env->id(), tc.kind, result.policy, result.log_std,
                      result.value_net};
  final_ck.save(sink.path("checkpoint.bin"));
  sink.record("checkpoint.bin");
  sink.write("train_log.csv", train_log_to_csv(result.log));
  if (tc.kind == PolicyKind::kAffine && !result.diverged)
    sink.write("eps.json", json_text(result.eps_measure.to_json()));
  sink.finish();

  if (result.diverged) {
    std::cout << "training diverged: " << result.divergence_note
              << " (checkpoint written)\n";
    return 1;
  }
  const TrainLogRow& last = result.log.back();
  std::cout << "trained " << policy_kind_name(tc.kind) << " policy for "
            << tc.iterations << " iterations\n";
  std::cout << "final return_mean " << format_double(last.return_mean)
            << ", penalty " << format_double(last.penalty)
            << ", min_vertex_margin " << format_double(last.min_vertex_margin)
            << "\n";
  if (tc.kind == PolicyKind::kAffine)
    std::cout << "eps " << format_double(result.eps) << "\n";
  return 0;
}

int run_estimate_eps(const ExperimentConfig& cfg,
                     const std::string& checkpoint_path,
                     const std::string& out_dir, std::uint64_t seed) {
  auto env = cfg.make_environment();
  const BufferSpec spec = cfg.make_buffer(*env);
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  ck.require_compatible(*env);

  ApproxOptions options = cfg.eps;
  if (!cfg.eps_seed_pinned) options.seed = seed;
  ArtifactSink sink(out_dir, "estimate-eps", cfg, seed);

  const auto samples = sample_buffer(spec, options.sample_count, options.seed);
  const ApproxMeasure measure =
      fit_affine(samples, ck.policy.as_policy_fn(), *env, options, spec);
  sink.write("eps.json", json_text(measure.to_json()));
  sink.finish();

  std::cout << "eps " << format_double(measure.eps) << " (fit residual "
            << format_double(measure.eps_fit) << ", holdout max residual "
            << format_double(measure.holdout_max_residual) << ")\n";
  if (measure.rank_deficient)
    std::cout << "note: fit was rank-deficient (minimum-norm solution)\n";
  return 0;
}

int run_verify(const ExperimentConfig& cfg, const std::string& checkpoint_path,
               const std::string& eps_file, std::optional<double> eps_override,
               const std::string& out_dir, std::uint64_t seed) {
  auto env = cfg.make_environment();
  const BufferSpec spec = cfg.make_buffer(*env);
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  ck.require_compatible(*env);

  double eps = 0.0;
  nlohmann::json approx_json;
  if (eps_override.has_value()) {
    eps = *eps_override;
  } else if (!eps_file.empty()) {
    std::ifstream in(eps_file, std::ios::binary);
    if (!in) throw ConfigError("verify: cannot open eps file '" + eps_file + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("verify: eps file parse error: ") + e.what());
    }
    const ApproxMeasure measure = ApproxMeasure::from_json(j);
    eps = measure.eps;
    approx_json = measure.to_json();
  } else {
    throw ConfigError("verify: needs --eps or --eps-file");
  }

  ArtifactSink sink(out_dir, "verify", cfg, seed);
  Certificate cert = verify_dissipation(*env, ck.policy, spec, eps);
  cert.approx = approx_json;
  sink.write("certificate.json", json_text(cert.to_json()));
  sink.finish();

  std::cout << "verdict: " << (cert.pass ? "pass" : "fail")
            << " (min vertex margin " << format_double(cert.min_margin())
            << ", eps " << format_double(eps) << ", " << cert.vertices.size()
            << " vertices)\n";
  for (const auto& note : cert.notes) std::cout << "note: " << note << "\n";
  // a fail verdict is still a completed verification
  return 0;
}

int run_simulate(const ExperimentConfig& cfg,
                 const std::string& checkpoint_path, int rollouts,
                 const std::string& out_dir, std::uint64_t seed) {
  auto env = cfg.make_environment();
  const BufferSpec spec = cfg.make_buffer(*env);
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  ck.require_compatible(*env);
  const PolicyFn policy = ck.policy.as_policy_fn();

  const int n = rollouts >= 0 ? rollouts : cfg.rollouts;
  ArtifactSink sink(out_dir, "simulate", cfg, seed);

  Rng rng(seed);
  nlohmann::json reports = nlohmann::json::array();
  std::ostringstream summary;
  summary << "rollout, entered, t_entry, exit_reason, steps_checked, "
             "tolerated_steps, violations, ok\n";
  std::ostringstream violations;
  violations << "rollout, index, t, what, amount\n";
  int entered = 0;
  int ok_among_entered = 0;
  long total_violations = 0;

  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x0 = env->sample_initial(rng);
    const Trajectory traj = rollout(*env, policy, x0, cfg.dt, cfg.horizon);
    sink.write(rollout_file("traj", i), traj.to_csv());

    std::ostringstream phase;
    phase << "y, ydot\n";
    for (const auto& s : traj.states_s)
      phase << format_double(s(0)) << ", " << format_double(s(1)) << "\n";
    sink.write(rollout_file("phase", i), phase.str());

    const TrajectoryReport rep = check_trajectory(traj, spec);
    reports.push_back(rep.to_json());
    if (rep.entered) {
      ++entered;
      if (rep.ok) ++ok_among_entered;
    }
    total_violations += static_cast<long>(rep.violations.size());
    for (const auto& v : rep.violations)
      violations << i << ", " << v.index << ", " << format_double(v.t) << ", "
                 << v.what << ", " << format_double(v.amount) << "\n";
    summary << i << ", " << (rep.entered ? 1 : 0) << ", "
            << format_double(rep.t_entry) << ", "
            << (rep.entered ? rep.exit_reason : std::string("none")) << ", "
            << rep.steps_checked << ", " << rep.tolerated_steps << ", "
            << rep.violations.size() << ", " << (rep.ok ? 1 : 0) << "\n";
  }

  nlohmann::json report;
  report["rollouts"] = n;
  report["entered"] = entered;
  report["ok_among_entered"] = ok_among_entered;
  report["total_violations"] = total_violations;
  report["reports"] = reports;
  sink.write("report.json", json_text(report));
  sink.write("rollouts.csv", summary.str());
  sink.write("violations.csv", violations.str());
  sink.finish();

  std::cout << "rollouts: " << n << ", entered buffer: " << entered
            << ", clean among entered: " << ok_among_entered
            << ", violations: " << total_violations << "\n";
  return 0;
}

}  // namespace dissip
