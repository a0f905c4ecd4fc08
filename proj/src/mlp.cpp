#include "dissip/mlp.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace dissip {

namespace {

constexpr std::uint32_t kMlpMagic = 0x4d4c5031;  // "MLP1"

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw CheckpointError("mlp: truncated stream");
  return v;
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
  if (!in) throw CheckpointError("mlp: truncated stream");
  return v;
}

void write_mat(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  // row-major on disk regardless of Eigen's storage order
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
  if (!in) throw CheckpointError("mlp: truncated stream");
  return m;
}

}  // namespace

GradTape& GradTape::operator+=(const GradTape& other) {
  if (g.size() != other.g.size())
    throw ShapeError("GradTape += : layer count mismatch");
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k].W += other.g[k].W;
    g[k].b += other.g[k].b;
  }
  if (dx.size() == other.dx.size() && dx.size() > 0) dx += other.dx;
  return *this;
}

GradTape& GradTape::operator*=(double scale) {
  for (auto& layer : g) {
    layer.W *= scale;
    layer.b *= scale;
  }
  if (dx.size() > 0) dx *= scale;
  return *this;
}

bool GradTape::finite() const {
  for (const auto& layer : g) {
    if (!layer.W.allFinite() || !layer.b.allFinite()) return false;
  }
  return true;
}

Mlp::Mlp(const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("Mlp: need at least input/output dims");
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    if (dims[k] <= 0 || dims[k + 1] <= 0)
      throw ShapeError("Mlp: dimensions must be positive");
    Layer layer;
    layer.W.resize(dims[k + 1], dims[k]);
    double bound = std::sqrt(6.0 / static_cast<double>(dims[k]));
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
        layer.W(i, j) = rng.uniform(-bound, bound);
    layer.b = Eigen::VectorXd::Zero(dims[k + 1]);
    layers.push_back(std::move(layer));
  }
}

int Mlp::input_dim() const {
  if (layers.empty()) throw ShapeError("Mlp: empty network");
  return static_cast<int>(layers.front().W.cols());
}

int Mlp::output_dim() const {
  if (layers.empty()) throw ShapeError("Mlp: empty network");
  return static_cast<int>(layers.back().W.rows());
}

void Mlp::set_output_clamp(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != output_dim() || hi.size() != output_dim())
    throw ShapeError("Mlp::set_output_clamp: bound dimension mismatch");
  has_clamp = true;
  clamp_lo = lo;
  clamp_hi = hi;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (layers.empty()) throw ShapeError("Mlp::forward: empty network");
  if (x.size() != input_dim())
    throw ShapeError("Mlp::forward: input dimension mismatch");
  if (!x.allFinite()) throw DomainError("Mlp::forward: non-finite input");
  Eigen::VectorXd a = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Eigen::VectorXd z = layers[k].W * a + layers[k].b;
    if (k + 1 < layers.size()) {
      a = z.cwiseMax(0.0);  // ReLU on hidden layers
    } else {
      a = z;
    }
  }
  if (has_clamp) a = a.cwiseMax(clamp_lo).cwiseMin(clamp_hi);
  return a;
}

GradTape Mlp::backward(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& upstream) const {
  GradTape tape = zero_tape();
  backward_accum(x, upstream, tape);
  return tape;
}

void Mlp::backward_accum(const Eigen::VectorXd& x,
                         const Eigen::VectorXd& upstream, GradTape& tape) const {
  if (x.size() != input_dim())
    throw ShapeError("Mlp::backward: input dimension mismatch");
  if (upstream.size() != output_dim())
    throw ShapeError("Mlp::backward: upstream dimension mismatch");
  if (tape.g.size() != layers.size())
    throw ShapeError("Mlp::backward: tape/network layer mismatch");

  // forward pass storing pre-activations and activations
  std::vector<Eigen::VectorXd> acts;       // a_0 = x, ..., a_{L-1}
  std::vector<Eigen::VectorXd> preacts;    // z_1, ..., z_L
  acts.push_back(x);
  Eigen::VectorXd a = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Eigen::VectorXd z = layers[k].W * a + layers[k].b;
    preacts.push_back(z);
    if (k + 1 < layers.size()) {
      a = z.cwiseMax(0.0);
      acts.push_back(a);
    }
  }

  Eigen::VectorXd delta = upstream;
  if (has_clamp) {
    const Eigen::VectorXd& z_out = preacts.back();
    for (Eigen::Index i = 0; i < delta.size(); ++i)
      if (z_out(i) < clamp_lo(i) || z_out(i) > clamp_hi(i)) delta(i) = 0.0;
  }
  for (std::size_t k = layers.size(); k-- > 0;) {
    tape.g[k].W.noalias() += delta * acts[k].transpose();
    tape.g[k].b += delta;
    Eigen::VectorXd da = layers[k].W.transpose() * delta;
    if (k > 0) {
      // ReLU derivative: 1 for z > 0, 0 otherwise
      const Eigen::VectorXd& z = preacts[k - 1];
      for (Eigen::Index i = 0; i < da.size(); ++i)
        if (z(i) <= 0.0) da(i) = 0.0;
    }
    delta = da;
  }
  if (tape.dx.size() == delta.size()) tape.dx += delta;
}

GradTape Mlp::zero_tape() const {
  GradTape tape;
  for (const auto& layer : layers) {
    Layer g;
    g.W = Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols());
    g.b = Eigen::VectorXd::Zero(layer.b.size());
    tape.g.push_back(std::move(g));
  }
  tape.dx = Eigen::VectorXd::Zero(input_dim());
  return tape;
}

void Mlp::save(std::ostream& out) const {
  write_u32(out, kMlpMagic);
  write_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    write_mat(out, layer.W);
    write_vec(out, layer.b);
  }
  write_u32(out, has_clamp ? 1u : 0u);
  if (has_clamp) {
    write_vec(out, clamp_lo);
    write_vec(out, clamp_hi);
  }
}

Mlp Mlp::load(std::istream& in) {
  if (read_u32(in) != kMlpMagic)
    throw CheckpointError("mlp: bad magic (not a serialized network)");
  Mlp net;
  std::uint32_t n_layers = read_u32(in);
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    Layer layer;
    layer.W = read_mat(in);
    layer.b = read_vec(in);
    if (k > 0 && layer.W.cols() != net.layers.back().W.rows())
      throw CheckpointError("mlp: inconsistent layer dimensions");
    net.layers.push_back(std::move(layer));
  }
  if (read_u32(in) != 0) {
    net.has_clamp = true;
    net.clamp_lo = read_vec(in);
    net.clamp_hi = read_vec(in);
  }
  return net;
}

std::uint64_t Mlp::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* data, std::size_t count) {
    const auto* p = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < count * sizeof(double); ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& layer : layers) {
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) {
        double v = layer.W(i, j);
        mix(&v, 1);
      }
    mix(layer.b.data(), static_cast<std::size_t>(layer.b.size()));
  }
  return h;
}

void sgd_step(Mlp& net, const GradTape& tape, double lr) {
  if (lr <= 0.0) throw TrainingError("sgd_step: learning rate must be > 0");
  if (tape.g.size() != net.layers.size())
    throw ShapeError("sgd_step: tape/network layer mismatch");
  if (!tape.finite())
    throw TrainingError("sgd_step: non-finite gradients");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    net.layers[k].W -= lr * tape.g[k].W;
    net.layers[k].b -= lr * tape.g[k].b;
  }
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& layer : net.layers) {
    Layer zero;
    zero.W = Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols());
    zero.b = Eigen::VectorXd::Zero(layer.b.size());
    m_.push_back(zero);
    v_.push_back(zero);
  }
}

void Adam::step(Mlp& net, const GradTape& tape) {
  if (tape.g.size() != m_.size())
    throw ShapeError("Adam::step: tape/state layer mismatch");
  if (!tape.finite()) throw TrainingError("Adam::step: non-finite gradients");
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    m_[k].W = beta1_ * m_[k].W + (1.0 - beta1_) * tape.g[k].W;
    m_[k].b = beta1_ * m_[k].b + (1.0 - beta1_) * tape.g[k].b;
    v_[k].W = beta2_ * v_[k].W +
              (1.0 - beta2_) * tape.g[k].W.cwiseProduct(tape.g[k].W);
    v_[k].b = beta2_ * v_[k].b +
              (1.0 - beta2_) * tape.g[k].b.cwiseProduct(tape.g[k].b);
    Eigen::ArrayXXd mhat_w = m_[k].W.array() / c1;
    Eigen::ArrayXd mhat_b = m_[k].b.array() / c1;
    Eigen::ArrayXXd vhat_w = v_[k].W.array() / c2;
    Eigen::ArrayXd vhat_b = v_[k].b.array() / c2;
    net.layers[k].W -= (lr_ * mhat_w / (vhat_w.sqrt() + eps_)).matrix();
    net.layers[k].b -= (lr_ * mhat_b / (vhat_b.sqrt() + eps_)).matrix();
  }
}

AdamVec::AdamVec(int dim, double lr, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(dim)),
      v_(Eigen::VectorXd::Zero(dim)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void AdamVec::step(Eigen::VectorXd& param, const Eigen::VectorXd& grad) {
  if (param.size() != m_.size() || grad.size() != m_.size())
    throw ShapeError("AdamVec::step: dimension mismatch");
  if (!grad.allFinite()) throw TrainingError("AdamVec::step: non-finite grad");
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  Eigen::ArrayXd mhat = m_.array() / c1;
  Eigen::ArrayXd vhat = v_.array() / c2;
  param -= (lr_ * mhat / (vhat.sqrt() + eps_)).matrix();
}

}  // namespace dissip
