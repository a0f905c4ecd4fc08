#include "dissip/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "dissip/common.hpp"

namespace dissip {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x44434b50;  // "DCKP"
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::uint32_t size = read_u32(in);
  if (size > 4096) throw CheckpointError("checkpoint: implausible string length");
  std::string s(size, '\0');
  in.read(s.data(), static_cast<std::streamsize>(size));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return s;
}

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  write_u32(out, static_cast<std::uint32_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

Eigen::VectorXd read_vec(std::istream& in) {
  std::uint32_t size = read_u32(in);
  Eigen::VectorXd v(size);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * size));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return v;
}

void write_mat(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

Eigen::MatrixXd read_mat(std::istream& in) {
  std::uint32_t rows = read_u32(in);
  std::uint32_t cols = read_u32(in);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(i, j) = v;
    }
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return m;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ostringstream payload(std::ios::binary);
  write_string(payload, env_id);
  write_u32(payload, kind == PolicyKind::kBaseline ? 0u : 1u);
  policy.net().save(payload);
  write_vec(payload, policy.norm_mu());
  write_vec(payload, policy.norm_sigma());
  write_vec(payload, policy.u_lo());
  write_vec(payload, policy.u_hi());
  write_mat(payload, policy.region_vertices());
  write_u32(payload, policy.enforced() ? 1u : 0u);
  write_vec(payload, log_std);
  value_net.save(payload);

  const std::string bytes = payload.str();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  write_u32(out, kCheckpointMagic);
  write_u32(out, kCheckpointVersion);
  write_u64(out, static_cast<std::uint64_t>(bytes.size()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  write_u64(out, fnv1a64(bytes.data(), bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write to '" + path + "' failed");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  if (read_u32(in) != kCheckpointMagic)
    throw CheckpointError("checkpoint: bad magic (not a checkpoint file)");
  if (read_u32(in) != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version");
  const std::uint64_t size = read_u64(in);
  std::string bytes(size, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  const std::uint64_t expect = read_u64(in);
  if (fnv1a64(bytes.data(), bytes.size()) != expect)
    throw CheckpointError("checkpoint: integrity hash mismatch");

  std::istringstream payload(bytes, std::ios::binary);
  Checkpoint ckpt;
  ckpt.env_id = read_string(payload);
  ckpt.kind = read_u32(payload) == 0 ? PolicyKind::kBaseline : PolicyKind::kAffine;
  Mlp pnet = Mlp::load(payload);
  Eigen::VectorXd mu = read_vec(payload);
  Eigen::VectorXd sigma = read_vec(payload);
  Eigen::VectorXd u_lo = read_vec(payload);
  Eigen::VectorXd u_hi = read_vec(payload);
  Eigen::MatrixXd region = read_mat(payload);
  const bool enforced = read_u32(payload) != 0;
  ckpt.policy = RegionAffinePolicy::restore(std::move(pnet), std::move(region),
                                            std::move(mu), std::move(sigma),
                                            std::move(u_lo), std::move(u_hi),
                                            enforced);
  ckpt.log_std = read_vec(payload);
  ckpt.value_net = Mlp::load(payload);
  return ckpt;
}

void Checkpoint::require_compatible(const Environment& env) const {
  if (env_id != env.id())
    throw CheckpointError("checkpoint was trained on environment '" + env_id +
                          "', config selects '" + env.id() + "'");
  if (policy.state_dim() != env.state_dim())
    throw CheckpointError("checkpoint policy state dimension mismatch");
  if (policy.control_dim() != env.control_dim())
    throw CheckpointError("checkpoint policy control dimension mismatch");
}

}  // namespace dissip
