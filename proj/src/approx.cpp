#include "dissip/approx.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "dissip/common.hpp"

namespace dissip {

nlohmann::json ApproxMeasure::to_json() const {
  nlohmann::json j;
  j["eps_fit"] = eps_fit;
  j["eps"] = eps;
  j["inflation"] = inflation;
  j["abs_margin"] = abs_margin;
  j["sample_count"] = sample_count;
  j["seed"] = seed;
  j["holdout_max_residual"] = holdout_max_residual;
  j["rank_deficient"] = rank_deficient;
  j["w_s"] = std::vector<double>(w_s.data(), w_s.data() + w_s.size());
  j["w_u"] = std::vector<double>(w_u.data(), w_u.data() + w_u.size());
  j["w0"] = w0;
  return j;
}

ApproxMeasure ApproxMeasure::from_json(const nlohmann::json& j) {
  ApproxMeasure m;
  try {
    m.eps_fit = j.at("eps_fit").get<double>();
    m.eps = j.at("eps").get<double>();
    m.inflation = j.at("inflation").get<double>();
    m.abs_margin = j.at("abs_margin").get<double>();
    m.sample_count = j.at("sample_count").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.holdout_max_residual = j.at("holdout_max_residual").get<double>();
    m.rank_deficient = j.value("rank_deficient", false);
    auto ws = j.at("w_s").get<std::vector<double>>();
    auto wu = j.at("w_u").get<std::vector<double>>();
    m.w_s = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<long>(ws.size()));
    m.w_u = Eigen::Map<Eigen::VectorXd>(wu.data(), static_cast<long>(wu.size()));
    m.w0 = j.at("w0").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed approximation measure: ") + e.what());
  }
  if (m.eps < 0.0) throw ConfigError("approximation measure has negative eps");
  return m;
}

std::vector<Eigen::VectorXd> sample_buffer(const BufferSpec& spec, int count,
                                           std::uint64_t seed) {
  if (count < 0) throw BufferError("sample count must be non-negative");
  spec.validate();
  const std::vector<Eigen::VectorXd> vert_list = enumerate_vertices(spec);
  const long nv = static_cast<long>(vert_list.size());
  Eigen::MatrixXd verts(nv, spec.n());
  for (long i = 0; i < nv; ++i) verts.row(i) = vert_list[static_cast<std::size_t>(i)];

  std::vector<Eigen::VectorXd> samples;
  samples.reserve(static_cast<std::size_t>(nv + count));
  for (long i = 0; i < nv; ++i) {
    Eigen::VectorXd v = verts.row(i).transpose();
    // with non-tight lower bounds the vertex hull strictly contains the
    // buffer, so some hull vertices can fall outside it
    if (spec.contains(v)) samples.push_back(v);
  }

  Rng rng(seed);
  constexpr int kMaxRedraws = 1000;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
      // Dirichlet(1,...,1) weights over the vertices
      Eigen::VectorXd w(nv);
      for (long i = 0; i < nv; ++i) w(i) = rng.exponential();
      w /= w.sum();
      Eigen::VectorXd s = verts.transpose() * w;
      if (spec.contains(s)) {
        samples.push_back(std::move(s));
        placed = true;
        break;
      }
    }
    if (!placed)
      throw BufferError("buffer sampling failed: rejection rate too high");
  }
  return samples;
}

namespace {

Eigen::VectorXd applied_control(const PolicyFn& policy, const Environment& env,
                                const Eigen::VectorXd& s) {
  Eigen::VectorXd u = policy(s);
  if (u.size() != env.control_dim())
    throw ShapeError("policy control dimension mismatch");
  return u;
}

}  // namespace

ApproxMeasure fit_affine(const std::vector<Eigen::VectorXd>& samples,
                         const PolicyFn& policy, const Environment& env,
                         const ApproxOptions& options, const BufferSpec& spec) {
  const long n = spec.n();
  const long m = env.control_dim();
  const long p = n + m + 1;
  if (static_cast<long>(samples.size()) < p + 1)
    throw BufferError("affine fit needs at least n + m + 2 samples");
  if (options.inflation < 1.0)
    throw ConfigError("eps inflation must be at least 1");
  if (options.abs_margin < 0.0)
    throw ConfigError("eps absolute margin must be non-negative");

  const long rows = static_cast<long>(samples.size());
  Eigen::MatrixXd X(rows, p);
  Eigen::VectorXd y(rows);
  for (long i = 0; i < rows; ++i) {
    const Eigen::VectorXd& s = samples[static_cast<std::size_t>(i)];
    if (s.size() != n) throw ShapeError("sample dimension mismatch");
    Eigen::VectorXd u = applied_control(policy, env, s);
    X.block(i, 0, 1, n) = s.transpose();
    X.block(i, n, 1, m) = u.transpose();
    X(i, p - 1) = 1.0;
    y(i) = f_tilde_r(env, s, u, options.delta);
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  Eigen::VectorXd w = svd.solve(y);  // minimum-norm when rank deficient

  ApproxMeasure out;
  out.w_s = w.head(n);
  out.w_u = w.segment(n, m);
  out.w0 = w(p - 1);
  out.rank_deficient = svd.rank() < p;
  out.inflation = options.inflation;
  out.abs_margin = options.abs_margin;
  out.sample_count = static_cast<int>(rows);
  out.seed = options.seed;
  out.eps_fit = (X * w - y).cwiseAbs().maxCoeff();
  out.eps = out.eps_fit * out.inflation + out.abs_margin;

  // fresh holdout set: residuals here are not certified, only reported
  const int holdout = options.holdout_factor * options.sample_count;
  if (holdout > 0) {
    auto hs = sample_buffer(spec, holdout, options.seed + 0x9e3779b97f4a7c15ull);
    out.holdout_max_residual = max_abs_residual(out, hs, policy, env, options.delta);
  }
  return out;
}

double max_abs_residual(const ApproxMeasure& model,
                        const std::vector<Eigen::VectorXd>& samples,
                        const PolicyFn& policy, const Environment& env,
                        double delta) {
  double worst = 0.0;
  for (const auto& s : samples) {
    Eigen::VectorXd u = applied_control(policy, env, s);
    double r = std::abs(f_tilde_r(env, s, u, delta) - model.predict(s, u));
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace dissip
